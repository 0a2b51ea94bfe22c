//! Uniform time grids and the left-node projection used by the scheme.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Uniform grid `t_j = j T / n`, `j = 0..=n`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        if steps == 0 {
            return Err(domain("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mesh size `h = T / n`.
    pub fn mesh(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_j`. The last node is `T` exactly.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.steps);
        if j == self.steps {
            self.horizon
        } else {
            j as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |j| self.node(j))
    }

    /// Number of fine steps per step of `coarse`, if `coarse` nests into `self`.
    pub fn ratio_to(&self, coarse: &TimeGrid) -> Result<usize> {
        if self.horizon != coarse.horizon {
            return Err(domain(format!(
                "grids have different horizons ({} vs {})",
                self.horizon, coarse.horizon
            )));
        }
        if coarse.steps == 0 || self.steps % coarse.steps != 0 {
            return Err(domain(format!(
                "coarse grid with {} steps does not divide fine grid with {} steps",
                coarse.steps, self.steps
            )));
        }
        Ok(self.steps / coarse.steps)
    }

    /// Index `j` with `t_j < t <= t_{j+1}`; `0` for `t = 0`.
    pub fn left_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        if t == 0.0 {
            return Ok(0);
        }
        let guess = (t / self.mesh()).ceil() as usize;
        let mut j = guess.saturating_sub(1).min(self.steps - 1);
        while j + 1 < self.steps && self.node(j + 1) < t {
            j += 1;
        }
        while j > 0 && self.node(j) >= t {
            j -= 1;
        }
        Ok(j)
    }

    /// The scheme's time projection `k_n(t)`.
    pub fn k_n(&self, t: f64) -> Result<f64> {
        Ok(self.node(self.left_index(t)?))
    }
}

/// Free-function form of [`TimeGrid::k_n`].
pub fn k_n(t: f64, grid: &TimeGrid) -> Result<f64> {
    grid.k_n(t)
}
