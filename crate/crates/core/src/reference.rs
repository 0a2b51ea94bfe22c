//! Exactly solvable mean-field models and the built-in model catalog.
//!
//! For `b(t, x, mu) = a x + bbar ∫ y mu(dy)` and `sigma = sigma0 I` the law of
//! the McKean-Vlasov solution started from `N(m0, v0)` stays Gaussian with
//! `m' = (a + bbar) m` and `v' = 2 a v + sigma0^2` in every coordinate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{CoefficientModel, EmpiricalView, RegularityCard};
use crate::noise::InitialLaw;

/// `expm1(x) / x`, continuous at 0.
pub(crate) fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Closed-form mean/variance flow of the linear-interaction Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFlow {
    pub a: f64,
    pub bbar: f64,
    pub sigma: f64,
    pub m0: f64,
    pub v0: f64,
}

impl GaussianFlow {
    pub fn mean(&self, t: f64) -> f64 {
        self.m0 * ((self.a + self.bbar) * t).exp()
    }

    /// `v(t) = v0 e^{2at} + sigma0^2 (e^{2at} - 1) / (2a)`, written through
    /// `expm1` so that `a = 0` gives `v0 + sigma0^2 t`.
    pub fn variance(&self, t: f64) -> f64 {
        let two_a = 2.0 * self.a;
        self.v0 * (two_a * t).exp() + self.sigma * self.sigma * t * phi1(two_a * t)
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.mean(t), self.variance(t))
    }
}

/// Mean and variance of the Gaussian law at time `t` (must be `>= 0`).
pub fn ou_flow(a: f64, bbar: f64, sigma: f64, m0: f64, v0: f64, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(domain(format!("flow time {t} is negative")));
    }
    Ok(GaussianFlow { a, bbar, sigma, m0, v0 }.at(t))
}

/// Linear-interaction Ornstein-Uhlenbeck model, coordinate-wise in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOu {
    pub a: f64,
    pub bbar: f64,
    pub sigma: f64,
    pub m0: f64,
    pub v0: f64,
    dim: usize,
    id: String,
}

impl LinearOu {
    pub fn new(a: f64, bbar: f64, sigma: f64, m0: f64, v0: f64, dim: usize) -> Self {
        Self {
            a,
            bbar,
            sigma,
            m0,
            v0,
            dim,
            id: "ou-linear".into(),
        }
    }

    /// `b = -(x - mean(mu))`, i.e. `a = -1`, `bbar = 1`.
    pub fn attract(sigma: f64, m0: f64, v0: f64) -> Self {
        Self {
            id: "ou-attract".into(),
            ..Self::new(-1.0, 1.0, sigma, m0, v0, 1)
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn flow(&self) -> GaussianFlow {
        GaussianFlow {
            a: self.a,
            bbar: self.bbar,
            sigma: self.sigma,
            m0: self.m0,
            v0: self.v0,
        }
    }

    pub fn initial_law(&self) -> InitialLaw {
        InitialLaw {
            mean: self.m0,
            variance: self.v0,
        }
    }
}

impl CoefficientModel for LinearOu {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn regularity(&self) -> RegularityCard {
        RegularityCard {
            eta: 1.0,
            lipschitz_in_x_and_measure: true,
            lipschitz_constant: Some(self.a.abs().max(self.bbar.abs())),
            smooth: true,
            bounded: self.a == 0.0 && self.bbar == 0.0,
        }
    }

    fn drift(&self, _t: f64, x: &[f64], mu: &EmpiricalView<'_>, out: &mut [f64]) {
        let mean = mu.mean();
        for k in 0..self.dim {
            out[k] = self.a * x[k] + self.bbar * mean[k];
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _mu: &EmpiricalView<'_>, out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.dim {
            out[k * self.dim + k] = self.sigma;
        }
    }

    fn diffusion_apply_batch(&self, _t: f64, _points: &[f64], _mu: &EmpiricalView<'_>, noise: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(noise) {
            *o = self.sigma * w;
        }
    }
}

/// `b = c sign(z) |z|^eta + a x` with `z = x - mean(mu)`, `sigma = sigma0`.
///
/// No closed-form law; used with a fine-grid reference only. With `clip` set,
/// `x` is clamped to `[-clip, clip]` before evaluation so the drift is bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderDrift {
    pub c: f64,
    pub eta: f64,
    pub a: f64,
    pub sigma: f64,
    pub clip: Option<f64>,
}

impl HolderDrift {
    pub fn new(c: f64, eta: f64, a: f64, sigma: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(domain(format!("Hölder exponent {eta} not in (0, 1]")));
        }
        Ok(Self {
            c,
            eta,
            a,
            sigma,
            clip: None,
        })
    }

    pub fn clipped(mut self, bound: f64) -> Self {
        self.clip = Some(bound);
        self
    }
}

impl CoefficientModel for HolderDrift {
    fn id(&self) -> &str {
        "holder-drift"
    }

    fn dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn regularity(&self) -> RegularityCard {
        RegularityCard {
            eta: self.eta,
            lipschitz_in_x_and_measure: self.eta == 1.0,
            lipschitz_constant: (self.eta == 1.0).then(|| self.c.abs() + self.a.abs()),
            smooth: false,
            bounded: self.clip.is_some(),
        }
    }

    fn drift(&self, _t: f64, x: &[f64], mu: &EmpiricalView<'_>, out: &mut [f64]) {
        let (x, m) = match self.clip {
            Some(b) => (x[0].clamp(-b, b), mu.mean()[0].clamp(-b, b)),
            None => (x[0], mu.mean()[0]),
        };
        let z = x - m;
        let shaped = if self.eta == 1.0 { z } else { z.signum() * z.abs().powf(self.eta) };
        out[0] = self.c * shaped + self.a * x;
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _mu: &EmpiricalView<'_>, out: &mut [f64]) {
        out[0] = self.sigma;
    }

    fn diffusion_apply_batch(&self, _t: f64, _points: &[f64], _mu: &EmpiricalView<'_>, noise: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(noise) {
            *o = self.sigma * w;
        }
    }
}

/// `b = 0`, `sigma = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroModel {
    dim: usize,
    pub m0: f64,
    pub v0: f64,
}

impl ZeroModel {
    pub fn new(dim: usize, m0: f64, v0: f64) -> Self {
        Self { dim, m0, v0 }
    }
}

impl CoefficientModel for ZeroModel {
    fn id(&self) -> &str {
        "zero"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn regularity(&self) -> RegularityCard {
        RegularityCard {
            eta: 1.0,
            lipschitz_in_x_and_measure: true,
            lipschitz_constant: Some(0.0),
            smooth: true,
            bounded: true,
        }
    }

    fn drift(&self, _t: f64, _x: &[f64], _mu: &EmpiricalView<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _mu: &EmpiricalView<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Parameter overrides for catalog models; unset fields keep the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

impl ModelParams {
    /// Exactly the parameters model `id` reads, defaults filled in. Setting a
    /// parameter the model does not read is an error.
    pub fn resolved(&self, id: &str) -> Result<Self> {
        let defaults = match id {
            "ou-linear" => Self {
                a: Some(-1.0),
                bbar: Some(0.5),
                sigma: Some(1.0),
                m0: Some(1.0),
                v0: Some(0.0),
                ..Self::default()
            },
            "ou-attract" => Self {
                sigma: Some(1.0),
                m0: Some(1.0),
                v0: Some(0.0),
                ..Self::default()
            },
            "holder-drift" | "hölder-drift" => Self {
                c: Some(-1.0),
                eta: Some(0.5),
                a: Some(0.0),
                sigma: Some(1.0),
                m0: Some(1.0),
                v0: Some(0.0),
                ..Self::default()
            },
            "zero" => Self {
                m0: Some(0.0),
                v0: Some(0.0),
                ..Self::default()
            },
            other => return Err(Error::Unsupported(format!("unknown model id {other:?}"))),
        };
        let optional = |name: &str| id.contains("drift") && name == "clip";
        let fields = [
            ("a", self.a, defaults.a),
            ("bbar", self.bbar, defaults.bbar),
            ("sigma", self.sigma, defaults.sigma),
            ("m0", self.m0, defaults.m0),
            ("v0", self.v0, defaults.v0),
            ("c", self.c, defaults.c),
            ("eta", self.eta, defaults.eta),
            ("clip", self.clip, defaults.clip),
        ];
        let mut out = [None; 8];
        for (slot, (name, set, default)) in out.iter_mut().zip(fields) {
            *slot = match (set, default) {
                (Some(v), Some(_)) => Some(v),
                (Some(v), None) if optional(name) => Some(v),
                (Some(_), None) => return Err(domain(format!("model {id} has no parameter `{name}`"))),
                (None, d) => d,
            };
        }
        if let Some(bad) = out.iter().flatten().find(|v| !v.is_finite()) {
            return Err(domain(format!("model parameter {bad} is not finite")));
        }
        let [a, bbar, sigma, m0, v0, c, eta, clip] = out;
        Ok(Self {
            a,
            bbar,
            sigma,
            m0,
            v0,
            c,
            eta,
            clip,
        })
    }
}

/// A catalog model with its initial law and, when available, its exact law.
#[derive(Clone)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub description: &'static str,
    pub model: Arc<dyn CoefficientModel>,
    pub initial: InitialLaw,
    pub flow: Option<GaussianFlow>,
    /// Present when the exact coupled reference is available.
    pub linear: Option<LinearOu>,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("id", &self.id)
            .field("initial", &self.initial)
            .field("flow", &self.flow)
            .finish()
    }
}

pub const MODEL_IDS: [&str; 4] = ["ou-linear", "ou-attract", "holder-drift", "zero"];

/// Builds catalog model `id` with optional parameter overrides.
pub fn catalog_entry(id: &str, params: &ModelParams, dim: usize) -> Result<CatalogEntry> {
    let p = &params.resolved(id)?;
    let entry = match id {
        "ou-linear" => {
            let m = LinearOu::new(
                p.a.unwrap_or(-1.0),
                p.bbar.unwrap_or(0.5),
                p.sigma.unwrap_or(1.0),
                p.m0.unwrap_or(1.0),
                p.v0.unwrap_or(0.0),
                dim,
            );
            CatalogEntry {
                id: "ou-linear",
                description: "b = a x + bbar mean(mu), sigma = sigma0; Gaussian flow known",
                initial: m.initial_law(),
                flow: Some(m.flow()),
                linear: Some(m.clone()),
                model: Arc::new(m),
            }
        }
        "ou-attract" => {
            if dim != 1 {
                return Err(domain("ou-attract is one-dimensional"));
            }
            let m = LinearOu::attract(p.sigma.unwrap_or(1.0), p.m0.unwrap_or(1.0), p.v0.unwrap_or(0.0));
            CatalogEntry {
                id: "ou-attract",
                description: "b = -(x - mean(mu)), sigma = sigma0; mean preserved, v' = -2v + sigma0^2",
                initial: m.initial_law(),
                flow: Some(m.flow()),
                linear: Some(m.clone()),
                model: Arc::new(m),
            }
        }
        "holder-drift" | "hölder-drift" => {
            if dim != 1 {
                return Err(domain("holder-drift is one-dimensional"));
            }
            let mut m = HolderDrift::new(
                p.c.unwrap_or(-1.0),
                p.eta.unwrap_or(0.5),
                p.a.unwrap_or(0.0),
                p.sigma.unwrap_or(1.0),
            )?;
            if let Some(b) = p.clip {
                m = m.clipped(b);
            }
            CatalogEntry {
                id: "holder-drift",
                description: "b = c sign(z)|z|^eta + a x, z = x - mean(mu)",
                initial: InitialLaw {
                    mean: p.m0.unwrap_or(1.0),
                    variance: p.v0.unwrap_or(0.0),
                },
                flow: None,
                linear: None,
                model: Arc::new(m),
            }
        }
        "zero" => {
            let m0 = p.m0.unwrap_or(0.0);
            let v0 = p.v0.unwrap_or(0.0);
            let lin = LinearOu::new(0.0, 0.0, 0.0, m0, v0, dim).with_id("zero");
            CatalogEntry {
                id: "zero",
                description: "b = 0, sigma = 0; law frozen at the initial law",
                initial: InitialLaw { mean: m0, variance: v0 },
                flow: Some(lin.flow()),
                linear: Some(lin),
                model: Arc::new(ZeroModel::new(dim, m0, v0)),
            }
        }
        other => return Err(Error::Unsupported(format!("unknown model id {other:?}"))),
    };
    Ok(entry)
}

/// All catalog models at their default parameters (`d = 1`).
pub fn model_catalog() -> Vec<CatalogEntry> {
    MODEL_IDS
        .iter()
        .map(|id| catalog_entry(id, &ModelParams::default(), 1).expect("catalog defaults are valid"))
        .collect()
}
