//! Scaled dot-product and multi-head attention as graph builders.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{Graph, TensorId};
use super::params::Param;

/// softmax(Q K^T / sqrt(d_k)) V
///
/// Q is `n_q x d_k`, K is `n_k x d_k`, V is `n_k x d_v`. Each output row is a
/// convex combination of the rows of V.
pub fn scaled_dot_attention<F: Scalar>(
    g: &mut Graph<F>,
    q: TensorId,
    k: TensorId,
    v: TensorId,
) -> Result<TensorId> {
    let (_, d_k) = g.shape(q);
    let (n_k, d_k2) = g.shape(k);
    let (n_v, _) = g.shape(v);
    if d_k != d_k2 {
        return Err(Error::ShapeMismatch(format!("attention d_k {d_k} vs {d_k2}")));
    }
    if n_k != n_v {
        return Err(Error::ShapeMismatch(format!("attention rows K {n_k} vs V {n_v}")));
    }
    if d_k == 0 || n_k == 0 {
        return Err(Error::InvalidArgument("attention with zero dimension".into()));
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (d_k as f64).sqrt())?;
    let weights = g.softmax_rows(scaled)?;
    g.matmul(weights, v)
}

/// Projection weights for one multi-head attention block.
///
/// Per head: `w_q`, `w_k` are `d_model x d_k`, `w_v` is `d_model x d_v`; the
/// output projection `w_o` is `H*d_v x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct MhaParams<F> {
    pub w_q: Vec<Param<F>>,
    pub w_k: Vec<Param<F>>,
    pub w_v: Vec<Param<F>>,
    pub w_o: Param<F>,
}

impl<F: Scalar> MhaParams<F> {
    pub fn heads(&self) -> usize {
        self.w_q.len()
    }

    /// Standard split-head shapes: d_k = d_v = d_model / heads.
    pub fn init(
        prefix: &str,
        d_model: usize,
        heads: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "head count {heads} must divide d_model {d_model}"
            )));
        }
        let d_h = d_model / heads;
        let mut w_q = Vec::new();
        let mut w_k = Vec::new();
        let mut w_v = Vec::new();
        for h in 0..heads {
            w_q.push(Param::uniform_init(format!("{prefix}.h{h}.wq"), d_model, d_h, d_model, rng));
            w_k.push(Param::uniform_init(format!("{prefix}.h{h}.wk"), d_model, d_h, d_model, rng));
            w_v.push(Param::uniform_init(format!("{prefix}.h{h}.wv"), d_model, d_h, d_model, rng));
        }
        let w_o = Param::uniform_init(format!("{prefix}.wo"), d_model, d_model, d_model, rng);
        Ok(MhaParams { w_q, w_k, w_v, w_o })
    }

    /// Single-head block with all four projections fixed to the identity, so
    /// the block computes plain scaled dot-product attention.
    pub fn identity(prefix: &str, d_model: usize, trainable: bool) -> Self {
        let mut p = MhaParams {
            w_q: vec![Param::eye(format!("{prefix}.h0.wq"), d_model)],
            w_k: vec![Param::eye(format!("{prefix}.h0.wk"), d_model)],
            w_v: vec![Param::eye(format!("{prefix}.h0.wv"), d_model)],
            w_o: Param::eye(format!("{prefix}.wo"), d_model),
        };
        p.set_trainable(trainable);
        p
    }

    /// Expand an identity block to `heads` heads that initially compute the
    /// same function: full-width identity Q/K projections (d_k = d_model),
    /// identity column slices for V (d_v = d_model / heads), identity W^O.
    pub fn identity_expanded(prefix: &str, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "head count {heads} must divide d_model {d_model}"
            )));
        }
        let d_v = d_model / heads;
        let mut w_q = Vec::new();
        let mut w_k = Vec::new();
        let mut w_v = Vec::new();
        for h in 0..heads {
            w_q.push(Param::eye(format!("{prefix}.h{h}.wq"), d_model));
            w_k.push(Param::eye(format!("{prefix}.h{h}.wk"), d_model));
            w_v.push(Param::eye_cols(format!("{prefix}.h{h}.wv"), d_model, h * d_v, d_v));
        }
        let w_o = Param::eye(format!("{prefix}.wo"), d_model);
        Ok(MhaParams { w_q, w_k, w_v, w_o })
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.visit_mut(|p| p.trainable = trainable);
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Param<F>)) {
        for h in 0..self.heads() {
            f(&self.w_q[h]);
            f(&self.w_k[h]);
            f(&self.w_v[h]);
        }
        f(&self.w_o);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut Param<F>)) {
        for p in self.w_q.iter_mut().chain(&mut self.w_k).chain(&mut self.w_v) {
            f(p);
        }
        f(&mut self.w_o);
    }

    pub fn insert(&self, g: &mut Graph<F>) -> Result<MhaIds> {
        let mut heads = Vec::with_capacity(self.heads());
        for h in 0..self.heads() {
            heads.push((
                self.w_q[h].insert(g)?,
                self.w_k[h].insert(g)?,
                self.w_v[h].insert(g)?,
            ));
        }
        let w_o = self.w_o.insert(g)?;
        Ok(MhaIds { heads, w_o })
    }
}

/// Graph handles for one inserted multi-head attention block.
pub struct MhaIds {
    pub heads: Vec<(TensorId, TensorId, TensorId)>,
    pub w_o: TensorId,
}

impl MhaIds {
    /// Ids in the same order as `MhaParams::visit` yields the parameters.
    pub fn flat(&self) -> Vec<TensorId> {
        let mut out = Vec::with_capacity(self.heads.len() * 3 + 1);
        for &(wq, wk, wv) in &self.heads {
            out.extend([wq, wk, wv]);
        }
        out.push(self.w_o);
        out
    }
}

/// Concat(head_1, ..., head_H) W^O with head_i = Attention(Q W_i^Q, K W_i^K, V W_i^V).
pub fn multi_head_attention<F: Scalar>(
    g: &mut Graph<F>,
    ids: &MhaIds,
    q: TensorId,
    k: TensorId,
    v: TensorId,
) -> Result<TensorId> {
    if ids.heads.is_empty() {
        return Err(Error::InvalidArgument("attention block with zero heads".into()));
    }
    let mut outs = Vec::with_capacity(ids.heads.len());
    for &(wq, wk, wv) in &ids.heads {
        let qh = g.matmul(q, wq)?;
        let kh = g.matmul(k, wk)?;
        let vh = g.matmul(v, wv)?;
        outs.push(scaled_dot_attention(g, qh, kh, vh)?);
    }
    let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
    g.matmul(cat, ids.w_o)
}
