//! Dense linear assignment by shortest augmenting paths with dual potentials
//! (Jonker-Volgenant style, `O(M^3)` worst case).

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost perfect matching for a square row-major `size x size` cost matrix.
pub fn solve_assignment(size: usize, cost: &[f64]) -> Result<Assignment> {
    if cost.len() != size * size {
        return Err(domain(format!("cost matrix has {} entries, expected {}", cost.len(), size * size)));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(domain("cost matrix must be finite"));
    }
    if size == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            cost: 0.0,
        });
    }
    let n = size;
    // 1-based columns; column 0 is the virtual root of each augmenting tree.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        min_slack.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let base = (i0 - 1) * n;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[base + j - 1] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    let total = crate::summation::pairwise_sum_by(n, |i| cost[i * n + row_to_col[i]]);
    Ok(Assignment { row_to_col, cost: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, cost: &[f64]) -> f64 {
        fn rec(row: usize, n: usize, used: &mut [bool], acc: f64, cost: &[f64], best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(row + 1, n, used, acc + cost[row * n + j], cost, best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, n, &mut vec![false; n], 0.0, cost, &mut best);
        best
    }

    #[test]
    fn small_known_instance() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve_assignment(3, &cost).unwrap();
        assert_eq!(a.cost, 5.0);
        let mut cols = a.row_to_col.clone();
        cols.sort();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn matches_enumeration_on_pseudo_random_matrices() {
        let mut state = 0x1234_5678_u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 1..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| next() * 10.0 - 3.0).collect();
                let a = solve_assignment(n, &cost).unwrap();
                assert!((a.cost - brute_force(n, &cost)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(solve_assignment(2, &[1.0, 2.0, 3.0]).is_err());
        assert!(solve_assignment(1, &[f64::NAN]).is_err());
        assert_eq!(solve_assignment(0, &[]).unwrap().cost, 0.0);
    }
}
