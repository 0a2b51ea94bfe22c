//! Oracle checks runnable from the shipped binary.
//!
//! Each oracle is computed without the code path it checks: brute-force
//! permutation search for the assignment solver, RK4 for the moment flow,
//! published Philox vectors, and hand-written rate formulas.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::analysis::{epsilon_n, fit_rate, Axis, ErrorPoint, EstimatorKind};
use crate::measures::{wasserstein_1d, wasserstein_exact, DiscreteMeasure};
use crate::noise::philox4x32;
use crate::reference::ou_flow;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> SelfCheck {
    SelfCheck { name, passed, detail }
}

fn philox_vectors() -> SelfCheck {
    let cases: [([u32; 4], [u32; 2], [u32; 4]); 3] = [
        ([0; 4], [0; 2], [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]),
        ([u32::MAX; 4], [u32::MAX; 2], [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]),
        (
            [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
            [0xa409_3822, 0x299f_31d0],
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1],
        ),
    ];
    let bad = cases.iter().filter(|(c, k, want)| philox4x32(*c, *k) != *want).count();
    check("philox-known-answers", bad == 0, format!("{bad} of {} vectors differ", cases.len()))
}

/// Permutation search over all `M!` matchings (Heap's algorithm).
pub fn brute_force_cost(x: &[f64], y: &[f64], dim: usize, p: u32) -> f64 {
    let m = x.len() / dim;
    let cost = |i: usize, j: usize| {
        let d2: f64 = (0..dim).map(|k| (x[i * dim + k] - y[j * dim + k]).powi(2)).sum();
        if p == 1 {
            d2.sqrt()
        } else {
            d2
        }
    };
    let total = |perm: &[usize]| (0..m).map(|i| cost(i, perm[i])).sum::<f64>();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = total(&perm);
    let mut c = vec![0; m];
    let mut i = 1;
    while i < m {
        if c[i] < i {
            perm.swap(if i % 2 == 0 { 0 } else { c[i] }, i);
            best = best.min(total(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let mean = best / m as f64;
    if p == 1 {
        mean
    } else {
        mean.sqrt()
    }
}

fn random_cloud(rng: &mut StdRng, m: usize, dim: usize) -> Vec<f64> {
    (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Largest deviation of `wasserstein_exact` from permutation search.
pub fn transport_vs_brute_force(instances: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = rng.random_range(1..=7);
        let dim = rng.random_range(1..=3);
        let p = rng.random_range(1..=2);
        let (x, y) = (random_cloud(&mut rng, m, dim), random_cloud(&mut rng, m, dim));
        let got = wasserstein_exact(
            &DiscreteMeasure::uniform(dim, x.clone()).expect("valid cloud"),
            &DiscreteMeasure::uniform(dim, y.clone()).expect("valid cloud"),
            p,
        );
        let err = got.map_or(f64::INFINITY, |w| (w - brute_force_cost(&x, &y, dim, p)).abs());
        worst = worst.max(err);
    }
    worst
}

/// Largest deviation of `wasserstein_1d` from `wasserstein_exact` on the line.
pub fn one_d_vs_exact(instances: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let m = rng.random_range(1..=64);
        let p = rng.random_range(1..=2);
        let mu = DiscreteMeasure::uniform(1, random_cloud(&mut rng, m, 1)).expect("valid cloud");
        let nu = DiscreteMeasure::uniform(1, random_cloud(&mut rng, m, 1)).expect("valid cloud");
        let err = match (wasserstein_1d(&mu, &nu, p), wasserstein_exact(&mu, &nu, p)) {
            (Ok(a), Ok(b)) => (a - b).abs(),
            _ => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    worst
}

/// Classical RK4 on `m' = (a + bbar) m`, `v' = 2 a v + sigma^2`.
pub fn rk4_moments(a: f64, bbar: f64, sigma: f64, m0: f64, v0: f64, t: f64, steps: usize) -> (f64, f64) {
    let rhs = |m: f64, v: f64| ((a + bbar) * m, 2.0 * a * v + sigma * sigma);
    let h = t / steps as f64;
    let (mut m, mut v) = (m0, v0);
    for _ in 0..steps {
        let k1 = rhs(m, v);
        let k2 = rhs(m + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = rhs(m + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = rhs(m + h * k3.0, v + h * k3.1);
        m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (m, v)
}

/// Largest deviation of the closed-form flow from RK4 over random parameters.
pub fn flow_vs_rk4(sets: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sets {
        let a = rng.random_range(-2.0..1.0);
        let bbar = rng.random_range(-1.0..1.0);
        let sigma = rng.random_range(0.0..2.0);
        let m0 = rng.random_range(-2.0..2.0);
        let v0 = rng.random_range(0.0..2.0);
        let t = rng.random_range(0.0..2.0);
        let (m, v) = ou_flow(a, bbar, sigma, m0, v0, t).unwrap_or((f64::NAN, f64::NAN));
        let (mr, vr) = rk4_moments(a, bbar, sigma, m0, v0, t, 2000);
        let err = (m - mr).abs().max((v - vr).abs());
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    worst
}

fn epsilon_values() -> SelfCheck {
    let cases = [
        (100, 1, 0.1),
        (100, 3, 0.1),
        (100, 4, 0.1 * 101f64.ln()),
        (100, 8, 100f64.powf(-0.25)),
        (64, 6, 0.25),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter(|&&(n, d, want)| epsilon_n(n, d).map_or(true, |got| (got - want).abs() > 1e-15))
        .map(|(n, d, _)| format!("N={n} d={d}"))
        .collect();
    check("epsilon-n-formula", bad.is_empty(), if bad.is_empty() { "5 cases".into() } else { bad.join(", ") })
}

fn fit_recovers_power_law() -> SelfCheck {
    let points: Vec<ErrorPoint> = [8usize, 16, 32, 64, 128]
        .iter()
        .map(|&n| {
            let h = 1.0 / n as f64;
            ErrorPoint {
                model: "synthetic".into(),
                functional: None,
                kind: EstimatorKind::WeakSemigroup,
                particles: 1000,
                steps: n,
                h,
                horizon: 1.0,
                time: 1.0,
                estimate: 3.0 * h.powf(1.25),
                std_error: 0.0,
                replications: 2,
                floor: None,
                usable: true,
            }
        })
        .collect();
    match fit_rate(&points, Axis::H) {
        Ok(fit) => check(
            "rate-fit-exact-power-law",
            (fit.slope - 1.25).abs() < 1e-12 && (fit.intercept - 3f64.ln()).abs() < 1e-12,
            format!("slope {}", fit.slope),
        ),
        Err(e) => check("rate-fit-exact-power-law", false, e.to_string()),
    }
}

/// Runs every oracle; takes well under a second.
pub fn run_selftest() -> Vec<SelfCheck> {
    let transport = transport_vs_brute_force(500, 11);
    let line = one_d_vs_exact(500, 12);
    let flow = flow_vs_rk4(100, 13);
    vec![
        philox_vectors(),
        check("transport-vs-permutation-search", transport <= 1e-10, format!("max deviation {transport:.2e}")),
        check("transport-1d-vs-exact", line <= 1e-10, format!("max deviation {line:.2e}")),
        check("gaussian-flow-vs-rk4", flow <= 1e-8, format!("max deviation {flow:.2e}")),
        epsilon_values(),
        fit_recovers_power_law(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_oracles_pass() {
        for c in run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn brute_force_small_cases() {
        assert_eq!(brute_force_cost(&[0.0, 1.0], &[1.0, 0.0], 1, 1), 0.0);
        assert!((brute_force_cost(&[0.0], &[2.0], 1, 2) - 2.0).abs() < 1e-15);
    }
}
