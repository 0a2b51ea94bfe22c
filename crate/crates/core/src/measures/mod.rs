//! Finitely supported measures, Wasserstein distances and test functionals.

mod assignment;
mod functional;
mod wasserstein;

pub use assignment::{solve_assignment, Assignment};
pub use functional::{
    functional_eval, functional_eval_with, functional_on_gaussian, Functional, FunctionalValue, Kernel,
    QuadraticPolicy, ScalarFn, FUNCTIONAL_IDS,
};
pub use wasserstein::{
    w1_to_gaussian, w2_squared_to_gaussian, w2_to_gaussian, wasserstein_1d, wasserstein_exact,
    wasserstein_sliced, SlicedEstimate, EXACT_SIZE_CAP,
};

use crate::error::{domain, Result};

/// Points in `R^d` with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dimension must be positive"));
        }
        if points.len() != weights.len() * dim || weights.is_empty() {
            return Err(domain(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(domain("weights must be nonnegative"));
        }
        let total: f64 = crate::summation::pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(domain(format!("weights sum to {total}, not 1")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(domain("points must be finite"));
        }
        Ok(Self { dim, points, weights })
    }

    /// Uniform weights `1/M` on row-major points.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(domain(format!(
                "{} coordinates do not form a nonempty point set in dimension {dim}",
                points.len()
            )));
        }
        let m = points.len() / dim;
        Self::new(dim, points, vec![1.0 / m as f64; m])
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, point, vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-12)
    }

    /// Translates every point by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Self {
        let mut points = self.points.clone();
        for (i, x) in points.iter_mut().enumerate() {
            *x += shift[i % self.dim];
        }
        Self {
            points,
            ..self.clone()
        }
    }
}

/// `M_p(mu)^p = sum_k w_k |x_k|^p`.
pub fn moment(mu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(domain(format!("moment order {p} must be at least 1")));
    }
    Ok(crate::summation::pairwise_sum_by(mu.len(), |k| {
        let norm = mu.point(k).iter().map(|x| x * x).sum::<f64>().sqrt();
        mu.weights[k] * norm.powf(p)
    }))
}
