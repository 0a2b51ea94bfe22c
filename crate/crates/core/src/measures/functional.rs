//! Test functionals `Phi` on probability measures over the real line.
//!
//! Built-in families: linear `∫ F dmu`, composed `G(∫ F dmu)` and quadratic
//! `∬ K(x, y) mu(dx) mu(dy)`. They admit linear functional derivatives by
//! construction; user-supplied functionals are not checked.

use quadrature::double_exponential;
use serde::{Deserialize, Serialize};

use super::DiscreteMeasure;
use crate::error::{domain, Result};
use crate::noise::{CounterStream, StreamTag};
use crate::summation::{mean_and_std_error, pairwise_sum_by};

/// Scalar building blocks for `F` and `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarFn {
    /// `sum_k c_k x^k`, ascending coefficients.
    Poly(Vec<f64>),
    Sin,
    Cos,
    Tanh,
    Abs,
    /// `exp(-x^2 / (2 w^2))`.
    Bump { width: f64 },
    /// `exp(c x^2)`; Gaussian-integrable only when `2 c v < 1`.
    ExpSquare { c: f64 },
}

impl ScalarFn {
    pub fn identity() -> Self {
        Self::Poly(vec![0.0, 1.0])
    }

    pub fn square() -> Self {
        Self::Poly(vec![0.0, 0.0, 1.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, k| acc * x + k),
            Self::Sin => x.sin(),
            Self::Cos => x.cos(),
            Self::Tanh => x.tanh(),
            Self::Abs => x.abs(),
            Self::Bump { width } => (-x * x / (2.0 * width * width)).exp(),
            Self::ExpSquare { c } => (c * x * x).exp(),
        }
    }

    /// `E[F(m + sqrt(v) Z)]` in closed form when one is implemented.
    fn gaussian_mean_closed(&self, m: f64, v: f64) -> Option<Result<f64>> {
        match self {
            Self::Poly(c) => Some(Ok(c.iter().enumerate().map(|(k, ck)| ck * gaussian_raw_moment(k, m, v)).sum())),
            Self::Sin => Some(Ok(m.sin() * (-v / 2.0).exp())),
            Self::Cos => Some(Ok(m.cos() * (-v / 2.0).exp())),
            Self::Bump { width } => {
                let w2 = width * width;
                Some(Ok((w2 / (w2 + v)).sqrt() * (-m * m / (2.0 * (w2 + v))).exp()))
            }
            Self::ExpSquare { c } => {
                let denom = 1.0 - 2.0 * c * v;
                if denom <= 0.0 {
                    Some(Err(domain(format!("exp({c} x^2) is not integrable against N({m}, {v})"))))
                } else {
                    Some(Ok((c * m * m / denom).exp() / denom.sqrt()))
                }
            }
            Self::Tanh | Self::Abs => None,
        }
    }

    /// `E[F(m + sqrt(v) Z)]`, closed form or adaptive quadrature (abs. tol 1e-10).
    pub fn gaussian_mean(&self, m: f64, v: f64) -> Result<f64> {
        if !(v >= 0.0) {
            return Err(domain(format!("variance {v} is negative")));
        }
        if v == 0.0 {
            return Ok(self.eval(m));
        }
        match self.gaussian_mean_closed(m, v) {
            Some(r) => r,
            None => gaussian_quadrature(|x| self.eval(x), m, v),
        }
    }
}

/// `E[(m + s Z)^k]` for `Z ~ N(0, 1)`, `s^2 = v`.
fn gaussian_raw_moment(k: usize, m: f64, v: f64) -> f64 {
    // binomial expansion with E[Z^{2j}] = (2j - 1)!!
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom = binom * (k - j + 1) as f64 / j as f64;
        }
        if j % 2 == 0 {
            let double_fact: f64 = (1..j).step_by(2).map(|i| i as f64).product();
            total += binom * m.powi((k - j) as i32) * v.powi((j / 2) as i32) * double_fact;
        }
    }
    total
}

/// `∫ f(m + sqrt(v) z) φ(z) dz` on the map `z = t / (1 - t^2)`.
fn gaussian_quadrature<F: Fn(f64) -> f64>(f: F, m: f64, v: f64) -> Result<f64> {
    let s = v.sqrt();
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |t: f64| {
        let one_minus = 1.0 - t * t;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let z = t / one_minus;
        let jac = (1.0 + t * t) / (one_minus * one_minus);
        let dens = inv_sqrt_2pi * (-0.5 * z * z).exp();
        if dens == 0.0 {
            return 0.0;
        }
        f(m + s * z) * dens * jac
    };
    // split at the mean so a kink there sits on an endpoint
    let left = double_exponential::integrate(integrand, -1.0, 0.0, 1e-10);
    let right = double_exponential::integrate(integrand, 0.0, 1.0, 1e-10);
    let integral = left.integral + right.integral;
    if !integral.is_finite() || !(left.error_estimate + right.error_estimate <= 1e-6) {
        return Err(domain("functional is not integrable against the Gaussian law"));
    }
    Ok(integral)
}

/// Interaction kernels for quadratic functionals, all functions of `x - y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `(x - y)^2`.
    SquaredDistance,
    /// `exp(-(x - y)^2 / (2 l^2))`.
    Gaussian { bandwidth: f64 },
    /// `|x - y|`.
    AbsDistance,
}

impl Kernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let z = x - y;
        match self {
            Self::SquaredDistance => z * z,
            Self::Gaussian { bandwidth } => (-z * z / (2.0 * bandwidth * bandwidth)).exp(),
            Self::AbsDistance => z.abs(),
        }
    }

    /// `E[K(X, Y)]` for independent `X, Y ~ N(m, v)`; `X - Y ~ N(0, 2v)`.
    fn gaussian_mean(&self, v: f64) -> Result<f64> {
        match self {
            Self::SquaredDistance => Ok(2.0 * v),
            Self::Gaussian { bandwidth } => {
                let l2 = bandwidth * bandwidth;
                Ok((l2 / (l2 + 2.0 * v)).sqrt())
            }
            Self::AbsDistance => {
                if v == 0.0 {
                    Ok(0.0)
                } else {
                    gaussian_quadrature(f64::abs, 0.0, 2.0 * v)
                }
            }
        }
    }
}

/// A test functional on probability measures over `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Constant(f64),
    /// `∫ F dmu`.
    Linear(ScalarFn),
    /// `G(∫ F dmu)`.
    Composed { outer: ScalarFn, inner: ScalarFn },
    /// `∬ K(x, y) mu(dx) mu(dy)`.
    Quadratic(Kernel),
}

/// Ids accepted by [`Functional::from_id`].
pub const FUNCTIONAL_IDS: [(&str, &str); 9] = [
    ("constant", "Phi = 1"),
    ("mean", "Phi = ∫ x dmu"),
    ("second-moment", "Phi = ∫ x^2 dmu"),
    ("sin", "Phi = ∫ sin(x) dmu"),
    ("tanh", "Phi = ∫ tanh(x) dmu"),
    ("mean-squared", "Phi = (∫ x dmu)^2"),
    ("tanh-of-mean", "Phi = tanh(∫ x dmu)"),
    ("pair-variance", "Phi = ∬ (x - y)^2 dmu dmu"),
    ("gaussian-interaction", "Phi = ∬ exp(-(x - y)^2 / 2) dmu dmu"),
];

impl Functional {
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "constant" => Self::Constant(1.0),
            "mean" => Self::Linear(ScalarFn::identity()),
            "second-moment" => Self::Linear(ScalarFn::square()),
            "sin" => Self::Linear(ScalarFn::Sin),
            "tanh" => Self::Linear(ScalarFn::Tanh),
            "mean-squared" => Self::Composed {
                outer: ScalarFn::square(),
                inner: ScalarFn::identity(),
            },
            "tanh-of-mean" => Self::Composed {
                outer: ScalarFn::Tanh,
                inner: ScalarFn::identity(),
            },
            "pair-variance" => Self::Quadratic(Kernel::SquaredDistance),
            "gaussian-interaction" => Self::Quadratic(Kernel::Gaussian { bandwidth: 1.0 }),
            other => return Err(crate::error::Error::Unsupported(format!("unknown functional id {other:?}"))),
        })
    }

    /// True when `Phi(mu)` is affine in `mu`, so `E[Phi(mu^N)] = Phi(E[mu^N])`.
    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Constant(_) | Self::Linear(_))
    }
}

/// Threshold and sampling plan for quadratic functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticPolicy {
    /// Largest support evaluated with the full double sum.
    pub exact_threshold: usize,
    /// Number of sampled pairs above the threshold.
    pub sampled_pairs: usize,
    pub seed: u64,
}

impl Default for QuadraticPolicy {
    fn default() -> Self {
        Self {
            exact_threshold: 8192,
            sampled_pairs: 1 << 18,
            seed: 0x5eed,
        }
    }
}

/// Value of `Phi(mu)`; `std_error` is set when the value is a sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    pub std_error: Option<f64>,
}

pub fn functional_eval(phi: &Functional, mu: &DiscreteMeasure) -> Result<FunctionalValue> {
    functional_eval_with(phi, mu, &QuadraticPolicy::default())
}

pub fn functional_eval_with(
    phi: &Functional,
    mu: &DiscreteMeasure,
    policy: &QuadraticPolicy,
) -> Result<FunctionalValue> {
    if mu.dim() != 1 {
        return Err(domain("built-in functionals act on measures over R"));
    }
    let exact = |value| {
        Ok(FunctionalValue {
            value,
            std_error: None,
        })
    };
    let (x, w) = (mu.points(), mu.weights());
    let integral = |f: &ScalarFn| pairwise_sum_by(x.len(), |k| w[k] * f.eval(x[k]));
    match phi {
        Functional::Constant(c) => exact(*c),
        Functional::Linear(f) => exact(integral(f)),
        Functional::Composed { outer, inner } => exact(outer.eval(integral(inner))),
        Functional::Quadratic(kernel) => {
            let m = x.len();
            if m <= policy.exact_threshold {
                let rows: Vec<f64> = (0..m)
                    .map(|i| w[i] * pairwise_sum_by(m, |j| w[j] * kernel.eval(x[i], x[j])))
                    .collect();
                exact(pairwise_sum_by(m, |i| rows[i]))
            } else {
                // draws (i, j) from mu x mu, so the mean is unbiased for the double sum
                let cumulative: Vec<f64> = w
                    .iter()
                    .scan(0.0, |acc, wk| {
                        *acc += wk;
                        Some(*acc)
                    })
                    .collect();
                let pick = |u: f64| cumulative.partition_point(|c| *c < u).min(m - 1);
                let samples: Vec<f64> = (0..policy.sampled_pairs)
                    .map(|s| {
                        let mut stream = CounterStream::new(policy.seed, 0, StreamTag::PairSample, s as u32, 0, 0);
                        let i = pick(stream.uniform_open());
                        let j = pick(stream.uniform_open());
                        kernel.eval(x[i], x[j])
                    })
                    .collect();
                let (value, se) = mean_and_std_error(&samples);
                Ok(FunctionalValue {
                    value,
                    std_error: Some(se),
                })
            }
        }
    }
}

/// `Phi(N(m, v))`.
pub fn functional_on_gaussian(phi: &Functional, mean: f64, variance: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(domain(format!("variance {variance} is negative")));
    }
    match phi {
        Functional::Constant(c) => Ok(*c),
        Functional::Linear(f) => f.gaussian_mean(mean, variance),
        Functional::Composed { outer, inner } => Ok(outer.eval(inner.gaussian_mean(mean, variance)?)),
        Functional::Quadratic(kernel) => kernel.gaussian_mean(variance),
    }
}
