//! Classical endmember-extraction algorithms and ensemble assembly.
//!
//! The paper cites ATGP, VCA, and N-FINDR without restating them; the
//! standard published formulations are implemented here:
//!  - ATGP: iterative orthogonal-subspace projection, each step selecting the
//!    pixel with the largest residual norm (first pick = max-norm pixel).
//!  - VCA: signal subspace of dimension M from the uncentered correlation
//!    eigenvectors, projective normalization, then repeated projection onto a
//!    random direction orthogonal to the current endmember span (the
//!    SNR-estimation branch of the original method is omitted for
//!    determinism).
//!  - N-FINDR: simplex-volume maximization in the (M-1)-dimensional PCA space
//!    by sequential single-pixel replacement until no swap improves volume.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::min_cost_assignment;
use crate::error::{Error, Result};
use crate::geometry::{jacobi_symmetric_eigen, pca_fit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EeaAlgorithm {
    Atgp,
    Vca,
    Nfindr,
}

impl std::fmt::Display for EeaAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EeaAlgorithm::Atgp => write!(f, "atgp"),
            EeaAlgorithm::Vca => write!(f, "vca"),
            EeaAlgorithm::Nfindr => write!(f, "nfindr"),
        }
    }
}

impl std::str::FromStr for EeaAlgorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "atgp" => Ok(EeaAlgorithm::Atgp),
            "vca" => Ok(EeaAlgorithm::Vca),
            "nfindr" | "n-findr" => Ok(EeaAlgorithm::Nfindr),
            other => Err(Error::Config(format!("unknown EEA '{other}'"))),
        }
    }
}

/// One algorithm's extracted endmembers: `L x M` signatures that are actual
/// pixels of Y, with their pixel indices retained.
#[derive(Debug, Clone)]
pub struct EndmemberSet {
    pub signatures: Array2<f64>,
    pub indices: Vec<usize>,
    pub source: EeaAlgorithm,
    pub degenerate: bool,
}

/// Per-endmember candidate groups: M matrices of `nEEA x L` rows, aligned so
/// group i's rows all refer to the same physical endmember.
#[derive(Debug, Clone)]
pub struct EndmemberEnsemble {
    pub groups: Vec<Array2<f64>>,
}

impl EndmemberEnsemble {
    pub fn num_endmembers(&self) -> usize {
        self.groups.len()
    }

    pub fn candidates_per_group(&self) -> usize {
        self.groups.first().map_or(0, |g| g.nrows())
    }
}

fn column(y: ArrayView2<f64>, j: usize) -> Vec<f64> {
    y.column(j).to_vec()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sad(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

fn check_dims(y: ArrayView2<f64>, m: usize) -> Result<()> {
    let (l, n) = y.dim();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one endmember".into()));
    }
    if m > l.min(n) {
        return Err(Error::InvalidArgument(format!(
            "M = {m} exceeds min(L, N) = {}",
            l.min(n)
        )));
    }
    Ok(())
}

fn gather(y: ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    let l = y.nrows();
    let mut s = Array2::<f64>::zeros((l, indices.len()));
    for (j, &idx) in indices.iter().enumerate() {
        for i in 0..l {
            s[[i, j]] = y[[i, idx]];
        }
    }
    s
}

/// ATGP. Selects M pixels by repeated orthogonal projection; errors if the
/// pixel cloud has rank below M.
pub fn atgp(y: ArrayView2<f64>, m: usize) -> Result<EndmemberSet> {
    check_dims(y, m)?;
    let (_, n) = y.dim();
    let mut basis: Vec<Vec<f64>> = Vec::new(); // orthonormal span of selections
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best_idx = 0;
        let mut best_norm = -1.0;
        for j in 0..n {
            let mut r = column(y, j);
            for q in &basis {
                let dot: f64 = q.iter().zip(&r).map(|(a, b)| a * b).sum();
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= dot * qi;
                }
            }
            let rn = norm(&r);
            if rn > best_norm {
                best_norm = rn;
                best_idx = j;
            }
        }
        if best_norm < 1e-10 {
            return Err(Error::Degenerate(format!(
                "pixel cloud rank below {m}: residuals vanished after {} picks",
                indices.len()
            )));
        }
        let mut q = column(y, best_idx);
        for b in &basis {
            let dot: f64 = b.iter().zip(&q).map(|(a, c)| a * c).sum();
            for (qi, bi) in q.iter_mut().zip(b) {
                *qi -= dot * bi;
            }
        }
        let qn = norm(&q);
        for qi in &mut q {
            *qi /= qn;
        }
        basis.push(q);
        indices.push(best_idx);
    }
    Ok(EndmemberSet {
        signatures: gather(y, &indices),
        indices,
        source: EeaAlgorithm::Atgp,
        degenerate: false,
    })
}

/// VCA with a fixed signal-subspace dimension of M and seeded random
/// direction draws.
pub fn vca(y: ArrayView2<f64>, m: usize, seed: u64) -> Result<EndmemberSet> {
    check_dims(y, m)?;
    let (l, n) = y.dim();
    let nf = n as f64;

    // Top-M eigenvectors of the uncentered correlation matrix Y Y^T / N.
    let mut corr = Array2::<f64>::zeros((l, l));
    for j in 0..n {
        for a in 0..l {
            let va = y[[a, j]];
            for b in a..l {
                corr[[a, b]] += va * y[[b, j]];
            }
        }
    }
    for a in 0..l {
        for b in a..l {
            let v = corr[[a, b]] / nf;
            corr[[a, b]] = v;
            corr[[b, a]] = v;
        }
    }
    let (vals, vecs) = jacobi_symmetric_eigen(&corr);
    if vals[m - 1] <= 1e-30 {
        return Err(Error::Degenerate(format!("signal subspace rank below {m}")));
    }
    // X = Ud^T Y (M x N), then projective normalization by the mean direction.
    let mut x = Array2::<f64>::zeros((m, n));
    for j in 0..n {
        for d in 0..m {
            let mut acc = 0.0;
            for i in 0..l {
                acc += vecs[[i, d]] * y[[i, j]];
            }
            x[[d, j]] = acc;
        }
    }
    let mut u = vec![0.0; m];
    for d in 0..m {
        u[d] = x.row(d).sum() / nf;
    }
    let mut yp = Array2::<f64>::zeros((m, n));
    for j in 0..n {
        let denom: f64 = (0..m).map(|d| x[[d, j]] * u[d]).sum();
        let denom = if denom.abs() < 1e-12 { 1e-12f64.copysign(denom + 1e-300) } else { denom };
        for d in 0..m {
            yp[[d, j]] = x[[d, j]] / denom;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut span: Vec<Vec<f64>> = Vec::new(); // orthonormal basis of chosen projected pixels
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        // Random direction orthogonal to the current endmember span.
        let mut f: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for q in &span {
            let dot: f64 = q.iter().zip(&f).map(|(a, b)| a * b).sum();
            for (fi, qi) in f.iter_mut().zip(q) {
                *fi -= dot * qi;
            }
        }
        let fnorm = norm(&f);
        if fnorm < 1e-12 {
            return Err(Error::Degenerate("random direction collapsed".into()));
        }
        for fi in &mut f {
            *fi /= fnorm;
        }
        let mut best_idx = 0;
        let mut best_val = -1.0;
        for j in 0..n {
            let v: f64 = (0..m).map(|d| f[d] * yp[[d, j]]).sum();
            if v.abs() > best_val {
                best_val = v.abs();
                best_idx = j;
            }
        }
        indices.push(best_idx);
        let mut q: Vec<f64> = (0..m).map(|d| yp[[d, best_idx]]).collect();
        for b in &span {
            let dot: f64 = b.iter().zip(&q).map(|(a, c)| a * c).sum();
            for (qi, bi) in q.iter_mut().zip(b) {
                *qi -= dot * bi;
            }
        }
        let qn = norm(&q);
        if qn > 1e-12 {
            for qi in &mut q {
                *qi /= qn;
            }
            span.push(q);
        }
    }
    Ok(EndmemberSet {
        signatures: gather(y, &indices),
        indices,
        source: EeaAlgorithm::Vca,
        degenerate: false,
    })
}

fn volume_det(coords: &Array2<f64>, idx: &[usize], m: usize) -> f64 {
    // abs det of [[1...1], [projected columns]] without the 1/(M-1)! factor,
    // which is constant across candidates.
    let mut a = vec![0.0; m * m];
    for (j, &p) in idx.iter().enumerate() {
        a[j] = 1.0;
        for d in 0..m - 1 {
            a[(d + 1) * m + j] = coords[[d, p]];
        }
    }
    det_abs(&mut a, m)
}

fn det_abs(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            if a[r * n + col].abs() > best {
                best = a[r * n + col].abs();
                pivot = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
        }
        let d = a[col * n + col];
        det *= d;
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
        }
    }
    det.abs()
}

/// N-FINDR: volume-maximizing pixel simplex by iterative replacement. The
/// returned set is locally optimal: no single-pixel swap increases volume.
pub fn nfindr(y: ArrayView2<f64>, m: usize, seed: u64) -> Result<EndmemberSet> {
    // An M-vertex simplex needs only M-1 dimensions, so M = L+1 is legal
    // here even though the projection-based algorithms require M <= L.
    let (l, n) = y.dim();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one endmember".into()));
    }
    if m > n || m > l + 1 {
        return Err(Error::InvalidArgument(format!(
            "M = {m} exceeds min(L + 1, N) = {}",
            (l + 1).min(n)
        )));
    }
    let proj = match pca_fit(y, m - 1) {
        Ok(p) => p,
        Err(Error::Degenerate(_)) => {
            // Zero-volume cloud: return the first M pixels, flagged.
            let indices: Vec<usize> = (0..m).collect();
            return Ok(EndmemberSet {
                signatures: gather(y, &indices),
                indices,
                source: EeaAlgorithm::Nfindr,
                degenerate: true,
            });
        }
        Err(e) => return Err(e),
    };
    let coords = proj.project_columns(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = sample(&mut rng, n, m).into_vec();
    let mut vol = volume_det(&coords, &idx, m);
    loop {
        let mut improved = false;
        for v in 0..m {
            let keep = idx[v];
            let mut best_vol = vol;
            let mut best_pix = keep;
            for p in 0..n {
                if idx.contains(&p) {
                    continue;
                }
                idx[v] = p;
                let cand = volume_det(&coords, &idx, m);
                if cand > best_vol * (1.0 + 1e-12) {
                    best_vol = cand;
                    best_pix = p;
                }
            }
            idx[v] = best_pix;
            if best_pix != keep {
                vol = best_vol;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(EndmemberSet {
        signatures: gather(y, &idx),
        degenerate: vol == 0.0,
        indices: idx,
        source: EeaAlgorithm::Nfindr,
    })
}

pub fn run_eea(alg: EeaAlgorithm, y: ArrayView2<f64>, m: usize, seed: u64) -> Result<EndmemberSet> {
    match alg {
        EeaAlgorithm::Atgp => atgp(y, m),
        EeaAlgorithm::Vca => vca(y, m, seed),
        EeaAlgorithm::Nfindr => nfindr(y, m, seed),
    }
}

/// Group candidates per endmember. The first set is the reference; every
/// other set is matched to it by a minimum-total-SAD assignment.
pub fn build_ensembles(sets: &[EndmemberSet], m: usize) -> Result<EndmemberEnsemble> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no endmember sets supplied".into()));
    }
    for s in sets {
        if s.signatures.ncols() != m {
            return Err(Error::ShapeMismatch(format!(
                "{} set has {} columns, expected {m}",
                s.source,
                s.signatures.ncols()
            )));
        }
    }
    let l = sets[0].signatures.nrows();
    let n_eea = sets.len();
    let reference = &sets[0];
    let mut groups: Vec<Array2<f64>> = (0..m).map(|_| Array2::zeros((n_eea, l))).collect();
    for i in 0..m {
        for b in 0..l {
            groups[i][[0, b]] = reference.signatures[[b, i]];
        }
    }
    for (set_idx, set) in sets.iter().enumerate().skip(1) {
        let mut cost = vec![0.0; m * m];
        for i in 0..m {
            let r = column(reference.signatures.view(), i);
            for j in 0..m {
                let c = column(set.signatures.view(), j);
                cost[i * m + j] = sad(&r, &c);
            }
        }
        let perm = min_cost_assignment(&cost, m)?;
        for i in 0..m {
            for b in 0..l {
                groups[i][[set_idx, b]] = set.signatures[[b, perm[i]]];
            }
        }
    }
    Ok(EndmemberEnsemble { groups })
}
