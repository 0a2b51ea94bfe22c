//! Coefficient models `(b, sigma)` acting on `(t, x, mu)` where `mu` is always
//! an empirical measure of the particle system.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::summation::pairwise_sum_by;

/// Declared (not verified) regularity of a coefficient model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCard {
    /// Hölder exponent of the drift in `(x, mu)`, in `(0, 1]`.
    pub eta: f64,
    pub lipschitz_in_x_and_measure: bool,
    /// Lipschitz constant w.r.t. `|x - y| + W1(mu, nu)` when declared Lipschitz.
    pub lipschitz_constant: Option<f64>,
    pub smooth: bool,
    pub bounded: bool,
}

/// Read-only view of `N` points in `R^d` with uniform weights `1/N`.
///
/// Mean and per-coordinate second moments are computed once at construction.
#[derive(Debug, Clone)]
pub struct EmpiricalView<'a> {
    points: &'a [f64],
    dim: usize,
    mean: Vec<f64>,
    second: Vec<f64>,
}

impl<'a> EmpiricalView<'a> {
    /// `points` is row-major `N x d`.
    pub fn new(points: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dimension must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(domain(format!(
                "point buffer of length {} is not a nonempty multiple of d = {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        let mut mean = vec![0.0; dim];
        let mut second = vec![0.0; dim];
        for k in 0..dim {
            mean[k] = pairwise_sum_by(n, |i| points[i * dim + k]) / n as f64;
            second[k] = pairwise_sum_by(n, |i| {
                let x = points[i * dim + k];
                x * x
            }) / n as f64;
        }
        Ok(Self {
            points,
            dim,
            mean,
            second,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        self.points
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Per-coordinate `∫ x_k^2 dmu`.
    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// Per-coordinate variance `∫ x_k^2 dmu - (∫ x_k dmu)^2`.
    pub fn variance(&self, k: usize) -> f64 {
        self.second[k] - self.mean[k] * self.mean[k]
    }
}

/// Drift `b: (t, x, mu) -> R^d` and diffusion `sigma: (t, x, mu) -> R^{d x q}`.
///
/// Implementations must be pure: identical inputs give identical outputs, and
/// evaluation must not mutate shared state.
pub trait CoefficientModel: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn regularity(&self) -> RegularityCard;

    /// Writes `b(t, x, mu)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], mu: &EmpiricalView<'_>, out: &mut [f64]);

    /// Writes `sigma(t, x, mu)` row-major into `out` (length `d * q`).
    fn diffusion(&self, t: f64, x: &[f64], mu: &EmpiricalView<'_>, out: &mut [f64]);

    /// Drift of every row of `points` (`N x d`) into `out` (`N x d`).
    ///
    /// Must agree with [`drift`](Self::drift) row by row; override when a
    /// batched form is cheaper.
    fn drift_batch(&self, t: f64, points: &[f64], mu: &EmpiricalView<'_>, out: &mut [f64]) {
        let d = self.dim();
        for (x, o) in points.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.drift(t, x, mu, o);
        }
    }

    /// `out_i = sigma(t, x_i, mu) noise_i` for every row (`noise` is `N x q`).
    fn diffusion_apply_batch(&self, t: f64, points: &[f64], mu: &EmpiricalView<'_>, noise: &[f64], out: &mut [f64]) {
        let (d, q) = (self.dim(), self.noise_dim());
        let mut sigma = vec![0.0; d * q];
        for ((x, dw), o) in points.chunks_exact(d).zip(noise.chunks_exact(q)).zip(out.chunks_exact_mut(d)) {
            self.diffusion(t, x, mu, &mut sigma);
            for (k, ok) in o.iter_mut().enumerate() {
                *ok = sigma[k * q..(k + 1) * q].iter().zip(dw).map(|(s, w)| s * w).sum();
            }
        }
    }
}

fn check_dims(model: &dyn CoefficientModel, x: &[f64], mu: &EmpiricalView<'_>) -> Result<()> {
    if x.len() != model.dim() {
        return Err(domain(format!(
            "point has dimension {}, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    if mu.dim() != model.dim() {
        return Err(domain(format!(
            "measure lives in dimension {}, model expects {}",
            mu.dim(),
            model.dim()
        )));
    }
    Ok(())
}

pub fn evaluate_drift(
    model: &dyn CoefficientModel,
    t: f64,
    x: &[f64],
    mu: &EmpiricalView<'_>,
) -> Result<Vec<f64>> {
    check_dims(model, x, mu)?;
    let mut out = vec![0.0; model.dim()];
    model.drift(t, x, mu, &mut out);
    Ok(out)
}

pub fn evaluate_diffusion(
    model: &dyn CoefficientModel,
    t: f64,
    x: &[f64],
    mu: &EmpiricalView<'_>,
) -> Result<Vec<f64>> {
    check_dims(model, x, mu)?;
    let mut out = vec![0.0; model.dim() * model.noise_dim()];
    model.diffusion(t, x, mu, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{LinearOu, ZeroModel};

    #[test]
    fn view_moments_match_recomputation() {
        let pts: Vec<f64> = (0..101).map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0).collect();
        let view = EmpiricalView::new(&pts, 1).unwrap();
        let m: f64 = pts.iter().sum::<f64>() / 101.0;
        let s: f64 = pts.iter().map(|x| x * x).sum::<f64>() / 101.0;
        assert!((view.mean()[0] - m).abs() <= 1e-12 * m.abs());
        assert!((view.second_moment()[0] - s).abs() <= 1e-12 * s);
        assert_eq!(view.weight() * view.len() as f64, 1.0);
    }

    #[test]
    fn view_rejects_ragged_buffers() {
        assert!(EmpiricalView::new(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(EmpiricalView::new(&[], 1).is_err());
    }

    #[test]
    fn linear_interaction_drift_example() {
        let model = LinearOu::new(-1.0, 0.5, 1.0, 0.0, 0.0, 1);
        let pts = [0.0, 2.0];
        let mu = EmpiricalView::new(&pts, 1).unwrap();
        let b = evaluate_drift(&model, 0.0, &[2.0], &mu).unwrap();
        assert_eq!(b, vec![-1.5]);
    }

    #[test]
    fn attraction_drift_vanishes_at_the_mean() {
        let model = LinearOu::attract(1.0, 0.0, 0.0);
        let pts = [1.0, 5.0];
        let mu = EmpiricalView::new(&pts, 1).unwrap();
        assert_eq!(evaluate_drift(&model, 0.2, &[3.0], &mu).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_model_gives_zero_vector() {
        let model = ZeroModel::new(3, 0.0, 0.0);
        let pts = [1.0, 2.0, 3.0];
        let mu = EmpiricalView::new(&pts, 3).unwrap();
        assert_eq!(evaluate_drift(&model, 0.0, &[4.0, 5.0, 6.0], &mu).unwrap(), vec![0.0; 3]);
        assert_eq!(evaluate_diffusion(&model, 0.0, &[4.0, 5.0, 6.0], &mu).unwrap(), vec![0.0; 9]);
    }

    #[test]
    fn dimension_mismatch_is_a_domain_error() {
        let model = LinearOu::new(-1.0, 0.5, 1.0, 0.0, 0.0, 1);
        let pts = [0.0, 2.0];
        let mu = EmpiricalView::new(&pts, 1).unwrap();
        assert!(evaluate_drift(&model, 0.0, &[1.0, 2.0], &mu).is_err());
        let mu2 = EmpiricalView::new(&pts, 2).unwrap();
        assert!(evaluate_drift(&model, 0.0, &[1.0], &mu2).is_err());
    }
}
