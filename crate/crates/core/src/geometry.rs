//! PCA projection and simplex volume for the minimum-volume constraint and
//! the volume-maximizing endmember search.

use ndarray::{Array1, Array2, ArrayView2};

use crate::diffcore::{Graph, TensorId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean and top principal directions of a pixel cloud.
///
/// `basis` is `dims x L` with orthonormal rows; projecting a signature `s`
/// computes `basis * (s - mean)`.
#[derive(Debug, Clone)]
pub struct PcaProjection<F> {
    pub mean: Array1<F>,
    pub basis: Array2<F>,
    pub eigenvalues: Array1<F>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns), sorted descending.
fn jacobi_eigen<F: Scalar>(a: &Array2<F>) -> (Vec<F>, Array2<F>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<F>::zeros((n, n));
    for i in 0..n {
        v[[i, i]] = F::one();
    }
    let tol = F::from_f64_lossy(1e-14);
    let half = F::from_f64_lossy(0.5);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + m[[i, j]] * m[[i, j]];
            }
        }
        let scale: F = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= tol * (scale + off) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() <= tol {
                    continue;
                }
                let theta = half * (F::from_f64_lossy(2.0) * m[[p, q]])
                    .atan2(m[[q, q]] - m[[p, p]]);
                let c = theta.cos();
                let s = theta.sin();
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]].partial_cmp(&m[[i, i]]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals: Vec<F> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vecs = Array2::<F>::zeros((n, n));
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vecs[[i, new_j]] = v[[i, old_j]];
        }
    }
    (vals, vecs)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending with the
/// eigenvectors as columns.
pub fn jacobi_symmetric_eigen<F: Scalar>(a: &Array2<F>) -> (Vec<F>, Array2<F>) {
    jacobi_eigen(a)
}

/// Fit a `dims`-dimensional PCA to the pixel cloud `pixels` (`L x N`).
///
/// Eigenvector signs are fixed by making the largest-magnitude entry positive
/// so the fit is deterministic under reordering-free input.
pub fn pca_fit<F: Scalar>(pixels: ArrayView2<F>, dims: usize) -> Result<PcaProjection<F>> {
    let (l, n) = pixels.dim();
    if dims == 0 {
        return Err(Error::InvalidArgument("pca dims must be positive".into()));
    }
    if n < dims || l < dims {
        return Err(Error::InvalidArgument(format!(
            "pca dims {dims} exceeds data extent {l}x{n}"
        )));
    }
    let nf = F::from_f64_lossy(n as f64);
    let mut mean = Array1::<F>::zeros(l);
    for i in 0..l {
        let mut s = F::zero();
        for j in 0..n {
            s = s + pixels[[i, j]];
        }
        mean[i] = s / nf;
    }
    let mut cov = Array2::<F>::zeros((l, l));
    for j in 0..n {
        for a in 0..l {
            let da = pixels[[a, j]] - mean[a];
            for b in a..l {
                cov[[a, b]] = cov[[a, b]] + da * (pixels[[b, j]] - mean[b]);
            }
        }
    }
    for a in 0..l {
        for b in a..l {
            let v = cov[[a, b]] / nf;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov);
    if vals[0] <= F::from_f64_lossy(1e-30) {
        return Err(Error::Degenerate("pixel cloud has no variance".into()));
    }
    let mut basis = Array2::<F>::zeros((dims, l));
    for d in 0..dims {
        let mut best = 0usize;
        let mut best_abs = F::zero();
        for i in 0..l {
            if vecs[[i, d]].abs() > best_abs {
                best_abs = vecs[[i, d]].abs();
                best = i;
            }
        }
        let flip = if vecs[[best, d]] < F::zero() { -F::one() } else { F::one() };
        for i in 0..l {
            basis[[d, i]] = flip * vecs[[i, d]];
        }
    }
    Ok(PcaProjection {
        mean,
        basis,
        eigenvalues: Array1::from(vals[..dims].to_vec()),
    })
}

impl<F: Scalar> PcaProjection<F> {
    pub fn dims(&self) -> usize {
        self.basis.nrows()
    }

    /// Project signature columns: `basis * (S - mean 1^T)`, giving `dims x M`.
    pub fn project_columns(&self, s: ArrayView2<F>) -> Array2<F> {
        let (l, m) = s.dim();
        let dims = self.dims();
        let mut out = Array2::<F>::zeros((dims, m));
        for j in 0..m {
            for d in 0..dims {
                let mut acc = F::zero();
                for i in 0..l {
                    acc = acc + self.basis[[d, i]] * (s[[i, j]] - self.mean[i]);
                }
                out[[d, j]] = acc;
            }
        }
        out
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// abs(det(S_proj)) / (M-1)! with S_proj the projected endmember columns under
/// a row of ones.
pub fn simplex_volume<F: Scalar>(s: ArrayView2<F>, proj: &PcaProjection<F>) -> Result<F> {
    let (_, m) = s.dim();
    if m < 2 {
        return Err(Error::InvalidArgument("simplex volume needs M >= 2".into()));
    }
    if proj.dims() != m - 1 {
        return Err(Error::ShapeMismatch(format!(
            "projection dims {} != M-1 = {}",
            proj.dims(),
            m - 1
        )));
    }
    let p = proj.project_columns(s);
    let mut g: Graph<F> = Graph::new();
    let mut data = vec![F::one(); m];
    for d in 0..m - 1 {
        for j in 0..m {
            data.push(p[[d, j]]);
        }
    }
    let sp = g.constant(m, m, data)?;
    let det = g.det(sp)?;
    let vol = g.scalar_value(det).abs() / F::from_f64_lossy(factorial(m - 1));
    Ok(vol)
}

/// Same volume recorded on an existing graph so gradients flow into `s`
/// (`L x M` tensor). The projection itself is a constant.
pub fn simplex_volume_graph<F: Scalar>(
    g: &mut Graph<F>,
    s: TensorId,
    proj: &PcaProjection<F>,
) -> Result<TensorId> {
    let (l, m) = g.shape(s);
    if m < 2 {
        return Err(Error::InvalidArgument("simplex volume needs M >= 2".into()));
    }
    if proj.dims() != m - 1 {
        return Err(Error::ShapeMismatch(format!(
            "projection dims {} != M-1 = {}",
            proj.dims(),
            m - 1
        )));
    }
    let mut mean_tiled = Vec::with_capacity(l * m);
    for i in 0..l {
        for _ in 0..m {
            mean_tiled.push(proj.mean[i]);
        }
    }
    let mean = g.constant(l, m, mean_tiled)?;
    let centered = g.sub(s, mean)?;
    let basis = g.constant(
        proj.dims(),
        l,
        proj.basis.iter().cloned().collect(),
    )?;
    let projected = g.matmul(basis, centered)?;
    let ones = g.constant(1, m, vec![F::one(); m])?;
    let sp = g.concat_rows(&[ones, projected])?;
    let det = g.det(sp)?;
    let adet = g.abs(det)?;
    g.scale(adet, 1.0 / factorial(m - 1))
}
