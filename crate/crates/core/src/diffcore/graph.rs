//! Reverse-mode differentiable computation graph.
//!
//! Tensors are dense 2-D row-major buffers recorded on a per-batch graph.
//! Nodes are appended in topological order, so the backward pass is a single
//! reverse sweep that visits each node exactly once. Every op validates its
//! operand shapes and rejects non-finite results.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    /// `a + b` where `b` is `1 x cols`, added to every row of `a`.
    AddBroadcastRow(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Scale(TensorId, f64),
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    ConcatRows(Vec<TensorId>),
    ConcatCols(Vec<TensorId>),
    Relu(TensorId),
    SoftmaxRows(TensorId),
    /// Input is clamped to `[-1 + eps, 1 - eps]` before `acos`.
    Arccos(TensorId),
    Sqrt(TensorId),
    Abs(TensorId),
    /// Determinant of a square matrix via LU with partial pivoting.
    Det(TensorId),
    Sum(TensorId),
    Mean(TensorId),
    /// Row-wise sum, `r x c -> r x 1`.
    SumRows(TensorId),
}

struct Node<F> {
    shape: (usize, usize),
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    op: Op,
}

/// Per-batch computation graph.
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn matmul_into<F: Scalar>(
    a: &[F],
    b: &[F],
    out: &mut [F],
    n: usize,
    k: usize,
    m: usize,
    accumulate: bool,
) {
    if !accumulate {
        out.fill(F::zero());
    }
    // ikj order keeps the inner loop contiguous over b and out.
    for i in 0..n {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == F::zero() {
                continue;
            }
            let brow = &b[kk * m..kk * m + m];
            let orow = &mut out[i * m..i * m + m];
            for j in 0..m {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
}

/// LU factorization with partial pivoting. Returns (lu, perm_sign, singular).
fn lu_decompose<F: Scalar>(a: &[F], n: usize) -> (Vec<F>, Vec<usize>, F, bool) {
    let mut lu = a.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut sign = F::one();
    let mut singular = false;
    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[col * n + col].abs();
        for r in col + 1..n {
            let v = lu[r * n + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == F::zero() {
            singular = true;
            continue;
        }
        if pivot != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot * n + j);
            }
            piv.swap(col, pivot);
            sign = -sign;
        }
        let d = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / d;
            lu[r * n + col] = factor;
            for j in col + 1..n {
                lu[r * n + j] = lu[r * n + j] - factor * lu[col * n + j];
            }
        }
    }
    (lu, piv, sign, singular)
}

fn lu_det<F: Scalar>(lu: &[F], n: usize, sign: F, singular: bool) -> F {
    if singular {
        return F::zero();
    }
    let mut d = sign;
    for i in 0..n {
        d = d * lu[i * n + i];
    }
    d
}

/// Inverse from a fresh LU factorization; caller must ensure non-singularity.
fn matrix_inverse<F: Scalar>(a: &[F], n: usize) -> Option<Vec<F>> {
    let (lu, piv, _, singular) = lu_decompose(a, n);
    if singular {
        return None;
    }
    let mut inv = vec![F::zero(); n * n];
    let mut col = vec![F::zero(); n];
    for e in 0..n {
        // Solve A x = e_e with the permuted RHS.
        for (i, p) in piv.iter().enumerate() {
            col[i] = if *p == e { F::one() } else { F::zero() };
        }
        for i in 1..n {
            for j in 0..i {
                let f = lu[i * n + j];
                col[i] = col[i] - f * col[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let f = lu[i * n + j];
                col[i] = col[i] - f * col[j];
            }
            col[i] = col[i] / lu[i * n + i];
        }
        for i in 0..n {
            inv[i * n + e] = col[i];
        }
    }
    Some(inv)
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].data
    }

    pub fn scalar_value(&self, id: TensorId) -> F {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// Gradient of the last `backward` call, if the tensor required one.
    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, shape: (usize, usize), data: Vec<F>, requires_grad: bool, op: Op) -> Result<TensorId> {
        debug_assert_eq!(data.len(), shape.0 * shape.1);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{op:?}")));
        }
        self.nodes.push(Node { shape, data, grad: None, requires_grad, op });
        Ok(TensorId(self.nodes.len() - 1))
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<F>, requires_grad: bool) -> Result<TensorId> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "leaf data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        self.push((rows, cols), data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<F>) -> Result<TensorId> {
        self.leaf(rows, cols, data, false)
    }

    pub fn scalar(&mut self, v: F) -> Result<TensorId> {
        self.constant(1, 1, vec![v])
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("add {sa:?} vs {sb:?}")));
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(sa, data, self.needs(a) || self.needs(b), Op::Add(a, b))
    }

    pub fn add_broadcast_row(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let sb = self.shape(b);
        if sb != (1, c) {
            return Err(Error::ShapeMismatch(format!(
                "broadcast row {sb:?} onto {:?}",
                (r, c)
            )));
        }
        let mut data = self.nodes[a.0].data.clone();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] = data[i * c + j] + self.nodes[b.0].data[j];
            }
        }
        self.push((r, c), data, self.needs(a) || self.needs(b), Op::AddBroadcastRow(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("sub {sa:?} vs {sb:?}")));
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x - y)
            .collect();
        self.push(sa, data, self.needs(a) || self.needs(b), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("mul {sa:?} vs {sb:?}")));
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(sa, data, self.needs(a) || self.needs(b), Op::Mul(a, b))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("div {sa:?} vs {sb:?}")));
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x / y)
            .collect();
        self.push(sa, data, self.needs(a) || self.needs(b), Op::Div(a, b))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let sa = self.shape(a);
        let cf = F::from_f64_lossy(c);
        let data = self.nodes[a.0].data.iter().map(|&x| x * cf).collect();
        self.push(sa, data, self.needs(a), Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul ({n}x{k})*({k2}x{m})"
            )));
        }
        if n == 0 || k == 0 || m == 0 {
            return Err(Error::InvalidArgument("matmul with zero dimension".into()));
        }
        let mut data = vec![F::zero(); n * m];
        matmul_into(&self.nodes[a.0].data, &self.nodes[b.0].data, &mut data, n, k, m, false);
        self.push((n, m), data, self.needs(a) || self.needs(b), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let src = &self.nodes[a.0].data;
        let mut data = vec![F::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push((c, r), data, self.needs(a), Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut data = Vec::new();
        let mut needs = false;
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(Error::ShapeMismatch(format!("concat_rows cols {c} vs {cols}")));
            }
            rows += r;
            data.extend_from_slice(&self.nodes[p.0].data);
            needs |= self.needs(p);
        }
        self.push((rows, cols), data, needs, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        let mut needs = false;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::ShapeMismatch(format!("concat_cols rows {r} vs {rows}")));
            }
            cols += c;
            needs |= self.needs(p);
        }
        let mut data = vec![F::zero(); rows * cols];
        let mut off = 0;
        for &p in parts {
            let (_, c) = self.shape(p);
            for i in 0..rows {
                for j in 0..c {
                    data[i * cols + off + j] = self.nodes[p.0].data[i * c + j];
                }
            }
            off += c;
        }
        self.push((rows, cols), data, needs, Op::ConcatCols(parts.to_vec()))
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let data = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| if x > F::zero() { x } else { F::zero() })
            .collect();
        self.push(sa, data, self.needs(a), Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if c == 0 {
            return Err(Error::InvalidArgument("softmax over empty rows".into()));
        }
        let src = &self.nodes[a.0].data;
        let mut data = vec![F::zero(); r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for j in 0..c {
                let e = (row[j] - mx).exp();
                data[i * c + j] = e;
                sum = sum + e;
            }
            for j in 0..c {
                data[i * c + j] = data[i * c + j] / sum;
            }
        }
        self.push((r, c), data, self.needs(a), Op::SoftmaxRows(a))
    }

    pub fn arccos(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let m = F::acos_margin();
        let lo = -F::one() + m;
        let hi = F::one() - m;
        let data = self.nodes[a.0]
            .data
            .iter()
            .map(|&x| x.max(lo).min(hi).acos())
            .collect();
        self.push(sa, data, self.needs(a), Op::Arccos(a))
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|&x| x.sqrt()).collect();
        self.push(sa, data, self.needs(a), Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        let data = self.nodes[a.0].data.iter().map(|&x| x.abs()).collect();
        self.push(sa, data, self.needs(a), Op::Abs(a))
    }

    pub fn det(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        if r != c {
            return Err(Error::ShapeMismatch(format!("det of {r}x{c}")));
        }
        if r == 0 {
            return Err(Error::InvalidArgument("det of empty matrix".into()));
        }
        let (lu, _, sign, singular) = lu_decompose(&self.nodes[a.0].data, r);
        let d = lu_det(&lu, r, sign, singular);
        self.push((1, 1), vec![d], self.needs(a), Op::Det(a))
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let s: F = self.nodes[a.0].data.iter().cloned().sum();
        self.push((1, 1), vec![s], self.needs(a), Op::Sum(a))
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.nodes[a.0].data.len();
        if n == 0 {
            return Err(Error::InvalidArgument("mean of empty tensor".into()));
        }
        let s: F = self.nodes[a.0].data.iter().cloned().sum();
        self.push((1, 1), vec![s / F::from_f64_lossy(n as f64)], self.needs(a), Op::Mean(a))
    }

    pub fn sum_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.shape(a);
        let src = &self.nodes[a.0].data;
        let data = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().cloned().sum())
            .collect();
        self.push((r, 1), data, self.needs(a), Op::SumRows(a))
    }

    fn accum(&mut self, id: TensorId, delta: &[F]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let len = self.nodes[id.0].data.len();
        let g = self.nodes[id.0].grad.get_or_insert_with(|| vec![F::zero(); len]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi = *gi + *di;
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate on every node
    /// with `requires_grad`; read them back with [`Graph::grad`].
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward from non-scalar {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].data[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![F::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[idx].grad.clone() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("backward at {:?}", self.nodes[idx].op)));
            }
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(a, &g);
                    self.accum(b, &g);
                }
                Op::AddBroadcastRow(a, b) => {
                    self.accum(a, &g);
                    let (r, c) = self.shape(a);
                    let mut gb = vec![F::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] = gb[j] + g[i * c + j];
                        }
                    }
                    self.accum(b, &gb);
                }
                Op::Sub(a, b) => {
                    self.accum(a, &g);
                    let neg: Vec<F> = g.iter().map(|&x| -x).collect();
                    self.accum(b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[b.0].data)
                        .map(|(&gi, &bv)| gi * bv)
                        .collect();
                    let gb: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(&gi, &av)| gi * av)
                        .collect();
                    self.accum(a, &ga);
                    self.accum(b, &gb);
                }
                Op::Div(a, b) => {
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[b.0].data)
                        .map(|(&gi, &bv)| gi / bv)
                        .collect();
                    let gb: Vec<F> = g
                        .iter()
                        .zip(self.nodes[a.0].data.iter().zip(&self.nodes[b.0].data))
                        .map(|(&gi, (&av, &bv))| -gi * av / (bv * bv))
                        .collect();
                    self.accum(a, &ga);
                    self.accum(b, &gb);
                }
                Op::Scale(a, c) => {
                    let cf = F::from_f64_lossy(c);
                    let ga: Vec<F> = g.iter().map(|&x| x * cf).collect();
                    self.accum(a, &ga);
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(a);
                    let (_, m) = self.shape(b);
                    // dA = g * B^T
                    if self.needs(a) {
                        let mut ga = vec![F::zero(); n * k];
                        let bdat = &self.nodes[b.0].data;
                        for i in 0..n {
                            for kk in 0..k {
                                let mut s = F::zero();
                                for j in 0..m {
                                    s = s + g[i * m + j] * bdat[kk * m + j];
                                }
                                ga[i * k + kk] = s;
                            }
                        }
                        self.accum(a, &ga);
                    }
                    // dB = A^T * g
                    if self.needs(b) {
                        let mut gb = vec![F::zero(); k * m];
                        let adat = self.nodes[a.0].data.clone();
                        for i in 0..n {
                            for kk in 0..k {
                                let av = adat[i * k + kk];
                                if av == F::zero() {
                                    continue;
                                }
                                for j in 0..m {
                                    gb[kk * m + j] = gb[kk * m + j] + av * g[i * m + j];
                                }
                            }
                        }
                        self.accum(b, &gb);
                    }
                }
                Op::Transpose(a) => {
                    let (c, r) = self.shape(TensorId(idx));
                    let mut ga = vec![F::zero(); r * c];
                    for i in 0..c {
                        for j in 0..r {
                            ga[j * c + i] = g[i * r + j];
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::ConcatRows(parts) => {
                    let cols = self.shape(TensorId(idx)).1;
                    let mut off = 0;
                    for p in parts {
                        let (r, _) = self.shape(p);
                        let slice = g[off * cols..(off + r) * cols].to_vec();
                        self.accum(p, &slice);
                        off += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (rows, cols) = self.shape(TensorId(idx));
                    let mut off = 0;
                    for p in parts {
                        let (_, c) = self.shape(p);
                        let mut gp = vec![F::zero(); rows * c];
                        for i in 0..rows {
                            for j in 0..c {
                                gp[i * c + j] = g[i * cols + off + j];
                            }
                        }
                        self.accum(p, &gp);
                        off += c;
                    }
                }
                Op::Relu(a) => {
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(&gi, &x)| if x > F::zero() { gi } else { F::zero() })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::SoftmaxRows(a) => {
                    let (r, c) = self.shape(a);
                    let y = &self.nodes[idx].data;
                    let mut ga = vec![F::zero(); r * c];
                    for i in 0..r {
                        let mut dot = F::zero();
                        for j in 0..c {
                            dot = dot + g[i * c + j] * y[i * c + j];
                        }
                        for j in 0..c {
                            ga[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::Arccos(a) => {
                    let m = F::acos_margin();
                    let lo = -F::one() + m;
                    let hi = F::one() - m;
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(&gi, &x)| {
                            let xc = x.max(lo).min(hi);
                            -gi / (F::one() - xc * xc).sqrt()
                        })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::Sqrt(a) => {
                    let y = self.nodes[idx].data.clone();
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&y)
                        .map(|(&gi, &yv)| {
                            if yv == F::zero() {
                                F::zero()
                            } else {
                                gi / (F::from_f64_lossy(2.0) * yv)
                            }
                        })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::Abs(a) => {
                    let ga: Vec<F> = g
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(&gi, &x)| {
                            if x > F::zero() {
                                gi
                            } else if x < F::zero() {
                                -gi
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::Det(a) => {
                    // d det / dA = det(A) * A^{-T}; treated as 0 near singularity.
                    let (n, _) = self.shape(a);
                    let d = self.nodes[idx].data[0];
                    if d.abs() < F::det_epsilon() {
                        continue;
                    }
                    let inv = match matrix_inverse(&self.nodes[a.0].data, n) {
                        Some(inv) => inv,
                        None => continue,
                    };
                    let mut ga = vec![F::zero(); n * n];
                    for i in 0..n {
                        for j in 0..n {
                            ga[i * n + j] = g[0] * d * inv[j * n + i];
                        }
                    }
                    self.accum(a, &ga);
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].data.len();
                    let ga = vec![g[0]; len];
                    self.accum(a, &ga);
                }
                Op::Mean(a) => {
                    let len = self.nodes[a.0].data.len();
                    let ga = vec![g[0] / F::from_f64_lossy(len as f64); len];
                    self.accum(a, &ga);
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(a);
                    let mut ga = vec![F::zero(); r * c];
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = g[i];
                        }
                    }
                    self.accum(a, &ga);
                }
            }
        }
        Ok(())
    }
}
