//! Evaluation against ground truth: SAD-based endmember alignment,
//! per-endmember RMSE and SAD, and report formatting.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::assign::min_cost_assignment;
use crate::eea::sad;
use crate::error::{Error, Result};

/// Alignment and per-endmember metrics of one prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    /// `permutation[i]` = ground-truth column matched to predicted column i.
    pub permutation: Vec<usize>,
    pub rmse_per: Vec<f64>,
    pub sad_per: Vec<f64>,
    pub rmse_avg: f64,
    pub sad_avg: f64,
}

/// Bijection from predicted to ground-truth columns minimizing total SAD.
pub fn match_endmembers(s_hat: ArrayView2<f64>, s_gt: ArrayView2<f64>) -> Result<Vec<usize>> {
    let m = s_hat.ncols();
    if s_gt.ncols() != m || s_hat.nrows() != s_gt.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "match {:?} vs {:?}",
            s_hat.dim(),
            s_gt.dim()
        )));
    }
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        let a: Vec<f64> = s_hat.column(i).to_vec();
        for j in 0..m {
            let b: Vec<f64> = s_gt.column(j).to_vec();
            cost[i * m + j] = sad(&a, &b);
        }
    }
    min_cost_assignment(&cost, m)
}

/// Per-endmember root-mean-square abundance error over all pixels, under the
/// given predicted-to-truth permutation, plus the average.
pub fn rmse_per_endmember(
    a_hat: ArrayView2<f64>,
    a_gt: ArrayView2<f64>,
    perm: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let (m, n) = a_hat.dim();
    if a_gt.dim() != (m, n) || perm.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "rmse {:?} vs {:?} (perm {})",
            a_hat.dim(),
            a_gt.dim(),
            perm.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no pixels".into()));
    }
    let mut per = Vec::with_capacity(m);
    for i in 0..m {
        let t = perm[i];
        let mut acc = 0.0;
        for j in 0..n {
            let d = a_hat[[i, j]] - a_gt[[t, j]];
            acc += d * d;
        }
        per.push((acc / n as f64).sqrt());
    }
    let avg = per.iter().sum::<f64>() / m as f64;
    Ok((per, avg))
}

/// Per-endmember spectral angle under the permutation, plus the average.
pub fn sad_per_endmember(
    s_hat: ArrayView2<f64>,
    s_gt: ArrayView2<f64>,
    perm: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let m = s_hat.ncols();
    if s_gt.ncols() != m || perm.len() != m {
        return Err(Error::ShapeMismatch("sad_per_endmember dims".into()));
    }
    let mut per = Vec::with_capacity(m);
    for i in 0..m {
        let a: Vec<f64> = s_hat.column(i).to_vec();
        let b: Vec<f64> = s_gt.column(perm[i]).to_vec();
        per.push(sad(&a, &b));
    }
    let avg = per.iter().sum::<f64>() / m as f64;
    Ok((per, avg))
}

/// Full evaluation: alignment shared between signatures and abundances.
pub fn evaluate(
    s_hat: ArrayView2<f64>,
    a_hat: ArrayView2<f64>,
    s_gt: ArrayView2<f64>,
    a_gt: ArrayView2<f64>,
) -> Result<EvalResult> {
    let perm = match_endmembers(s_hat, s_gt)?;
    let (sad_per, sad_avg) = sad_per_endmember(s_hat, s_gt, &perm)?;
    let (rmse_per, rmse_avg) = rmse_per_endmember(a_hat, a_gt, &perm)?;
    Ok(EvalResult { permutation: perm, rmse_per, sad_per, rmse_avg, sad_avg })
}

impl EvalResult {
    /// Aligned per-endmember + average table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12}{:>12}{:>12}\n", "endmember", "RMSE", "SAD"));
        for i in 0..self.rmse_per.len() {
            out.push_str(&format!(
                "{:<12}{:>12.4}{:>12.4}\n",
                format!("#{} -> {}", i, self.permutation[i]),
                self.rmse_per[i],
                self.sad_per[i]
            ));
        }
        out.push_str(&format!(
            "{:<12}{:>12.4}{:>12.4}\n",
            "average", self.rmse_avg, self.sad_avg
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_prediction_gives_identity_permutation_and_zero_metrics() {
        let s = array![[1.0, 0.2], [0.1, 0.9], [0.5, 0.4]];
        let a = array![[0.3, 0.7, 0.5], [0.7, 0.3, 0.5]];
        let r = evaluate(s.view(), a.view(), s.view(), a.view()).unwrap();
        assert_eq!(r.permutation, vec![0, 1]);
        assert!(r.rmse_avg.abs() < 1e-12);
        assert!(r.sad_avg.abs() < 1e-5);
    }

    #[test]
    fn swapped_columns_recover_the_inverse_swap() {
        let s = array![[1.0, 0.2], [0.1, 0.9], [0.5, 0.4]];
        let mut s_sw = s.clone();
        for b in 0..3 {
            s_sw[[b, 0]] = s[[b, 1]];
            s_sw[[b, 1]] = s[[b, 0]];
        }
        let perm = match_endmembers(s_sw.view(), s.view()).unwrap();
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn assignment_beats_brute_force_for_m_four() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let s_hat = Array2::from_shape_fn((6, 4), |_| rng.gen_range(0.01..1.0));
            let s_gt = Array2::from_shape_fn((6, 4), |_| rng.gen_range(0.01..1.0));
            let perm = match_endmembers(s_hat.view(), s_gt.view()).unwrap();
            let total: f64 = (0..4)
                .map(|i| {
                    sad(&s_hat.column(i).to_vec(), &s_gt.column(perm[i]).to_vec())
                })
                .sum();
            // brute force over all 24 permutations
            let mut best = f64::INFINITY;
            let idx = [0usize, 1, 2, 3];
            let mut perms = Vec::new();
            permute_all(&idx, 0, &mut idx.to_vec(), &mut perms);
            for p in perms {
                let t: f64 = (0..4)
                    .map(|i| sad(&s_hat.column(i).to_vec(), &s_gt.column(p[i]).to_vec()))
                    .sum();
                best = best.min(t);
            }
            assert!(total <= best + 1e-12);
        }
    }

    fn permute_all(_src: &[usize], k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            permute_all(_src, k + 1, cur, out);
            cur.swap(k, i);
        }
    }

    #[test]
    fn constant_error_rmse() {
        let a = array![[0.3, 0.3], [0.7, 0.7]];
        let mut a_hat = a.clone();
        a_hat[[0, 0]] += 0.1;
        a_hat[[0, 1]] += 0.1;
        let (per, _) = rmse_per_endmember(a_hat.view(), a.view(), &[0, 1]).unwrap();
        assert!((per[0] - 0.1).abs() < 1e-12);
        assert!(per[1].abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((3, 10), |_| rng.gen_range(0.0..1.0));
        let b = Array2::from_shape_fn((3, 10), |_| rng.gen_range(0.0..1.0));
        let (per, avg) = rmse_per_endmember(a.view(), b.view(), &[0, 1, 2]).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..10 {
                acc += (a[[i, j]] - b[[i, j]]).powi(2);
            }
            assert!((per[i] - (acc / 10.0).sqrt()).abs() < 1e-12);
        }
        assert!((avg - per.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sad_is_scale_invariant_and_orthogonal_is_half_pi() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let s2 = s.mapv(|v| 2.0 * v);
        let (per, avg) = sad_per_endmember(s2.view(), s.view(), &[0, 1]).unwrap();
        assert!(avg < 1e-9);
        let (per_x, _) = sad_per_endmember(s.view(), s.view(), &[1, 0]).unwrap();
        assert!((per_x[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        drop(per);
    }
}
