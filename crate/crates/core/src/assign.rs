//! Minimum-cost assignment: exhaustive search for small problems, the
//! Hungarian algorithm (Jonker-Volgenant style potentials, O(n^3)) above.

use crate::error::{Error, Result};

/// Exhaustive minimum over all permutations. Cost is row-major `n x n`,
/// `cost[i*n + j]` assigning row i to column j.
fn exhaustive(cost: &[f64], n: usize) -> Vec<usize> {
    let mut best = f64::INFINITY;
    let mut best_perm = (0..n).collect::<Vec<_>>();
    let mut perm = (0..n).collect::<Vec<_>>();
    permute(&mut perm, 0, cost, n, &mut best, &mut best_perm);
    best_perm
}

fn permute(
    perm: &mut Vec<usize>,
    k: usize,
    cost: &[f64],
    n: usize,
    best: &mut f64,
    best_perm: &mut Vec<usize>,
) {
    if k == n {
        let total: f64 = (0..n).map(|i| cost[i * n + perm[i]]).sum();
        if total < *best {
            *best = total;
            best_perm.clone_from(perm);
        }
        return;
    }
    for i in k..n {
        perm.swap(k, i);
        permute(perm, k + 1, cost, n, best, best_perm);
        perm.swap(k, i);
    }
}

/// Hungarian algorithm with row/column potentials.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // way[j] = previous column on the alternating path; p[j] = row matched to column j.
    let mut p = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        let mut way = vec![0usize; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Returns `perm` with `perm[i]` the column assigned to row `i`, minimizing
/// total cost. Exact for every size; exhaustive up to n = 6.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "cost matrix length {} != {n}x{n}",
            cost.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty assignment".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    Ok(if n <= 6 { exhaustive(cost, n) } else { hungarian(cost, n) })
}
