use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{solve_assignment, DiscreteMeasure};
use crate::error::{domain, Error, Result};
use crate::noise::{CounterStream, StreamTag};
use crate::summation::pairwise_sum_by;

/// Largest support size accepted by [`wasserstein_exact`].
pub const EXACT_SIZE_CAP: usize = 4096;

fn check_order(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(domain(format!("transport order {p} not supported (use 1 or 2)")))
    }
}

fn cost_pow(dist: f64, p: u32) -> f64 {
    if p == 1 {
        dist
    } else {
        dist * dist
    }
}

fn root(total: f64, p: u32) -> f64 {
    let total = total.max(0.0);
    if p == 1 {
        total
    } else {
        total.sqrt()
    }
}

/// Atoms sorted by position.
fn sorted_atoms(mu: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = mu.points().iter().copied().zip(mu.weights().iter().copied()).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms
}

/// `W_p^p` between weighted 1-D atom lists via the monotone (quantile) coupling.
fn quantile_cost(a: &[(f64, f64)], b: &[(f64, f64)], p: u32) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut cum_a, mut cum_b) = (a[0].1, b[0].1);
    let mut level = 0.0;
    let mut total = 0.0;
    loop {
        let next = cum_a.min(cum_b);
        if next > level {
            total += (next - level) * cost_pow((a[i].0 - b[j].0).abs(), p);
            level = next;
        }
        if cum_a <= cum_b {
            i += 1;
            if i == a.len() {
                break;
            }
            cum_a += a[i].1;
        } else {
            j += 1;
            if j == b.len() {
                break;
            }
            cum_b += b[j].1;
        }
    }
    total
}

/// Exact `W_p` between measures on the real line (`p` in {1, 2}).
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: u32) -> Result<f64> {
    check_order(p)?;
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(domain("wasserstein_1d needs one-dimensional measures"));
    }
    Ok(root(quantile_cost(&sorted_atoms(mu), &sorted_atoms(nu), p), p))
}

/// Exact `W_p` between equal-size uniform measures in any dimension, by
/// optimal assignment on the `|x_i - y_j|^p` cost matrix.
pub fn wasserstein_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: u32) -> Result<f64> {
    check_order(p)?;
    if mu.dim() != nu.dim() {
        return Err(domain(format!("dimensions differ ({} vs {})", mu.dim(), nu.dim())));
    }
    if mu.len() != nu.len() {
        return Err(domain(format!("support sizes differ ({} vs {})", mu.len(), nu.len())));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(domain("exact assignment needs uniform weights"));
    }
    let m = mu.len();
    if m > EXACT_SIZE_CAP {
        return Err(Error::SizeCap {
            size: m,
            cap: EXACT_SIZE_CAP,
            hint: "use the sliced method for larger clouds",
        });
    }
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        let x = mu.point(i);
        for j in 0..m {
            let y = nu.point(j);
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            cost[i * m + j] = if p == 2 { d2 } else { d2.sqrt() };
        }
    }
    let plan = solve_assignment(m, &cost)?;
    Ok(root(plan.cost / m as f64, p))
}

/// Sliced Wasserstein estimate; always flagged approximate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicedEstimate {
    pub value: f64,
    pub projections: usize,
    pub approximate: bool,
}

/// Root-mean of exact 1-D `W_p^p` over `projections` seeded random directions.
pub fn wasserstein_sliced(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: u32,
    projections: usize,
    seed: u64,
) -> Result<SlicedEstimate> {
    check_order(p)?;
    if projections == 0 {
        return Err(domain("need at least one projection"));
    }
    if mu.dim() != nu.dim() {
        return Err(domain(format!("dimensions differ ({} vs {})", mu.dim(), nu.dim())));
    }
    let d = mu.dim();
    let project = |m: &DiscreteMeasure, dir: &[f64]| -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = (0..m.len())
            .map(|k| (m.point(k).iter().zip(dir).map(|(x, u)| x * u).sum(), m.weights()[k]))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    };
    let costs: Vec<f64> = (0..projections)
        .map(|k| {
            let mut stream = CounterStream::new(seed, 0, StreamTag::Projection, k as u32, 0, 0);
            let mut dir: Vec<f64> = (0..d).map(|_| stream.standard_normal()).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                dir[0] = 1.0;
            } else {
                dir.iter_mut().for_each(|x| *x /= norm);
            }
            quantile_cost(&project(mu, &dir), &project(nu, &dir), p)
        })
        .collect();
    let mean = pairwise_sum_by(costs.len(), |k| costs[k]) / projections as f64;
    Ok(SlicedEstimate {
        value: root(mean, p),
        projections,
        approximate: true,
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Squared `W_2` between a 1-D discrete measure and `N(m, v)`.
///
/// With the quantile coupling each atom `x` with cumulative mass interval
/// `[u_a, u_b]` contributes `∫ (x - m - s Φ^{-1}(u))^2 du`, which has a closed
/// form in `φ(q)` and `q φ(q)` at the interval ends (`q = Φ^{-1}(u)`).
pub fn w2_squared_to_gaussian(mu: &DiscreteMeasure, mean: f64, variance: f64) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(domain("w2_to_gaussian needs a one-dimensional measure"));
    }
    if !(variance >= 0.0) {
        return Err(domain(format!("variance {variance} is negative")));
    }
    let atoms = sorted_atoms(mu);
    if variance == 0.0 {
        return Ok(pairwise_sum_by(atoms.len(), |k| {
            let (x, w) = atoms[k];
            w * (x - mean) * (x - mean)
        }));
    }
    let s = variance.sqrt();
    let normal = std_normal();
    // (φ(q), q φ(q)) at u, both vanishing at u ∈ {0, 1}
    let ends = |u: f64| -> (f64, f64) {
        if u <= 0.0 || u >= 1.0 {
            (0.0, 0.0)
        } else {
            let q = normal.inverse_cdf(u);
            let dens = normal.pdf(q);
            (dens, q * dens)
        }
    };
    let mut cumulative = 0.0;
    let mut lower = ends(0.0);
    let mut terms = Vec::with_capacity(atoms.len());
    for (k, &(x, w)) in atoms.iter().enumerate() {
        cumulative += w;
        let upper = if k + 1 == atoms.len() { ends(1.0) } else { ends(cumulative) };
        let first = lower.0 - upper.0; // ∫ q du
        let second = w + lower.1 - upper.1; // ∫ q^2 du
        let c = x - mean;
        terms.push(w * c * c - 2.0 * c * s * first + variance * second);
        lower = upper;
    }
    Ok(pairwise_sum_by(terms.len(), |k| terms[k]).max(0.0))
}

/// `W_2` between a 1-D discrete measure and `N(m, v)`.
pub fn w2_to_gaussian(mu: &DiscreteMeasure, mean: f64, variance: f64) -> Result<f64> {
    Ok(w2_squared_to_gaussian(mu, mean, variance)?.sqrt())
}

/// `W_1` between a 1-D discrete measure and `N(m, v)` as `∫ |F_mu - G|`.
pub fn w1_to_gaussian(mu: &DiscreteMeasure, mean: f64, variance: f64) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(domain("w1_to_gaussian needs a one-dimensional measure"));
    }
    if !(variance >= 0.0) {
        return Err(domain(format!("variance {variance} is negative")));
    }
    let atoms = sorted_atoms(mu);
    if variance == 0.0 {
        return Ok(pairwise_sum_by(atoms.len(), |k| atoms[k].1 * (atoms[k].0 - mean).abs()));
    }
    let s = variance.sqrt();
    let normal = std_normal();
    // ∫_{-∞}^{x} G and ∫_{x}^{∞} (1 - G)
    let lower_area = |x: f64| {
        let z = (x - mean) / s;
        s * (z * normal.cdf(z) + normal.pdf(z))
    };
    let upper_area = |x: f64| {
        let z = (x - mean) / s;
        s * (normal.pdf(z) - z * normal.sf(z))
    };
    let mut terms = Vec::with_capacity(atoms.len() + 1);
    terms.push(lower_area(atoms[0].0));
    let mut level = 0.0;
    for k in 0..atoms.len() - 1 {
        level += atoms[k].1;
        let (a, b) = (atoms[k].0, atoms[k + 1].0);
        if b <= a {
            continue;
        }
        let cross = if level <= 0.0 {
            a
        } else if level >= 1.0 {
            b
        } else {
            (mean + s * normal.inverse_cdf(level)).clamp(a, b)
        };
        let below = level * (cross - a) - (lower_area(cross) - lower_area(a));
        let above = (lower_area(b) - lower_area(cross)) - level * (b - cross);
        terms.push(below.max(0.0) + above.max(0.0));
    }
    terms.push(upper_area(atoms[atoms.len() - 1].0));
    Ok(pairwise_sum_by(terms.len(), |k| terms[k]))
}
