//! Monte Carlo error estimators and log-log rate regression.

mod sweep;

pub use sweep::{
    run_sweep, ReferenceMode, Replications, SweepAxis, SweepOutcome, SweepPlan, SweepStatus, TimeSelection,
    NOISE_GATE,
};

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Result};

/// Sampling rate `eps_N` of empirical measures in dimension `d`.
pub fn epsilon_n(particles: usize, dim: usize) -> Result<f64> {
    if particles < 2 || dim == 0 {
        return Err(domain(format!("epsilon_N needs N >= 2 and d >= 1, got N = {particles}, d = {dim}")));
    }
    let n = particles as f64;
    Ok(match dim {
        1..=3 => n.powf(-0.5),
        4 => n.powf(-0.5) * (n + 1.0).ln(),
        _ => n.powf(-2.0 / dim as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// `max_t E|X^{i,n}_t - Xbar^i_t|^2` over the time schedule.
    #[serde(rename = "strong-traj")]
    StrongTraj,
    /// `E[max_t |X^{i,n}_t - Xbar^i_t|^2]`, reported alongside `strong-traj`.
    #[serde(rename = "strong-traj-sup")]
    StrongTrajSup,
    /// `max_t E[W_2(mu^{N,n}_t, L(X_t))^2]`.
    #[serde(rename = "strong-W2")]
    StrongW2,
    /// `max_t |E[Phi(mu^{N,n}_t)] - Phi(L(X_t))|`.
    #[serde(rename = "weak-semigroup")]
    WeakSemigroup,
    /// `max_t E|Phi(mu^{N,n}_t) - Phi(L(X_t))|`.
    #[serde(rename = "strong-semigroup")]
    StrongSemigroup,
    /// `W_1(E[mu^{N,n}_t], L(X_t))` from the pooled replications.
    #[serde(rename = "mean-measure-W1")]
    MeanMeasureW1,
}

impl EstimatorKind {
    pub const ALL: [Self; 6] = [
        Self::StrongTraj,
        Self::StrongTrajSup,
        Self::StrongW2,
        Self::WeakSemigroup,
        Self::StrongSemigroup,
        Self::MeanMeasureW1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StrongTraj => "strong-traj",
            Self::StrongTrajSup => "strong-traj-sup",
            Self::StrongW2 => "strong-W2",
            Self::WeakSemigroup => "weak-semigroup",
            Self::StrongSemigroup => "strong-semigroup",
            Self::MeanMeasureW1 => "mean-measure-W1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn needs_functional(self) -> bool {
        matches!(self, Self::WeakSemigroup | Self::StrongSemigroup)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One estimated error at one design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub model: String,
    pub functional: Option<String>,
    pub kind: EstimatorKind,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "n")]
    pub steps: usize,
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Evaluation time at which the reported maximum is attained.
    pub time: f64,
    pub estimate: f64,
    pub std_error: f64,
    #[serde(rename = "R")]
    pub replications: usize,
    /// Sampling floor of the estimator, when it has one.
    pub floor: Option<f64>,
    /// Whether the point passes the noise gate `std_error <= 0.2 * estimate`.
    pub usable: bool,
}

impl ErrorPoint {
    pub fn noise_ratio(&self) -> f64 {
        if self.std_error == 0.0 {
            0.0
        } else {
            self.std_error / self.estimate.abs()
        }
    }
}

/// Writes points as CSV with the stable header
/// `model,functional,kind,N,n,h,T,time,estimate,std_error,R,floor,usable`.
pub fn write_points_csv<W: Write>(points: &[ErrorPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_points_csv<R: std::io::Read>(r: R) -> Result<Vec<ErrorPoint>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "h")]
    H,
    #[serde(rename = "N")]
    N,
}

impl Axis {
    pub fn value(self, p: &ErrorPoint) -> f64 {
        match self {
            Self::H => p.h,
            Self::N => p.particles as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::H => "h",
            Self::N => "N",
        }
    }
}

/// Least-squares fit of `log estimate` against `log axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub axis: Axis,
    pub slope: f64,
    pub intercept: f64,
    /// 95% half-width of the slope from the residual variance.
    #[serde(rename = "half_width")]
    pub slope_half_width: f64,
    /// Largest `std_error / estimate` over the points.
    pub noise_ratio: f64,
    /// `noise_ratio <= 0.2`.
    pub clean: bool,
    pub points: Vec<ErrorPoint>,
}

#[derive(Serialize)]
struct RateFitRow<'a> {
    axis: &'a str,
    slope: f64,
    intercept: f64,
    half_width: f64,
    noise_ratio: f64,
    clean: bool,
    points: usize,
}

impl RateFit {
    /// Single-row CSV `axis,slope,intercept,half_width,noise_ratio,clean,points`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(RateFitRow {
            axis: self.axis.as_str(),
            slope: self.slope,
            intercept: self.intercept,
            half_width: self.slope_half_width,
            noise_ratio: self.noise_ratio,
            clean: self.clean,
            points: self.points.len(),
        })?;
        out.flush()?;
        Ok(())
    }

    /// Fitted estimate at axis value `x`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn fit_rate(points: &[ErrorPoint], axis: Axis) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(domain(format!("a rate fit needs at least 4 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.estimate > 0.0) || !p.estimate.is_finite()) {
        return Err(domain(format!(
            "estimate {} at N = {}, n = {} is not positive; log-log fit refused",
            p.estimate, p.particles, p.steps
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| axis.value(p).ln()).collect();
    let increasing = x.windows(2).all(|w| w[1] > w[0]);
    let decreasing = x.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(domain(format!("{} values must be strictly monotone", axis.as_str())));
    }
    let y: Vec<f64> = points.iter().map(|p| p.estimate.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)).sum();
    let dof = k - 2.0;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| domain(e.to_string()))?
        .inverse_cdf(0.975);
    let slope_half_width = t * (ssr / dof / sxx).sqrt();
    let noise_ratio = points.iter().map(ErrorPoint::noise_ratio).fold(0.0, f64::max);
    Ok(RateFit {
        axis,
        slope,
        intercept,
        slope_half_width,
        noise_ratio,
        clean: noise_ratio <= NOISE_GATE,
        points: points.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(particles: usize, h: f64, estimate: f64, std_error: f64) -> ErrorPoint {
        ErrorPoint {
            model: "synthetic".into(),
            functional: None,
            kind: EstimatorKind::WeakSemigroup,
            particles,
            steps: (1.0 / h).round() as usize,
            h,
            horizon: 1.0,
            time: 1.0,
            estimate,
            std_error,
            replications: 100,
            floor: None,
            usable: true,
        }
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_n(10_000, 1).unwrap(), 0.01);
        assert!((epsilon_n(100, 4).unwrap() - 0.1 * 101f64.ln()).abs() < 1e-15);
        assert!((epsilon_n(100, 4).unwrap() - 0.46151).abs() < 1e-5);
        assert!((epsilon_n(1024, 8).unwrap() - 0.17678).abs() < 1e-5);
        assert!(epsilon_n(1, 1).is_err());
        assert!(epsilon_n(8, 0).is_err());
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<_> = [8, 16, 32, 64, 128]
            .iter()
            .map(|&n| {
                let h = 1.0 / n as f64;
                point(64, h, 3.0 * h, 0.0)
            })
            .collect();
        let fit = fit_rate(&pts, Axis::H).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.slope_half_width < 1e-10);
        assert!(fit.clean);
    }

    #[test]
    fn saturation_gives_flat_slope() {
        let pts: Vec<_> = [64, 128, 256, 512, 1024, 2048]
            .iter()
            .map(|&n| point(n, 0.01, 2.0 * (1.0 / n as f64 + 1.0), 0.0))
            .collect();
        let fit = fit_rate(&pts, Axis::N).unwrap();
        assert!(fit.slope.abs() < 0.01, "slope {}", fit.slope);
    }

    #[test]
    fn refusals() {
        let mut pts: Vec<_> = (0..4).map(|k| point(64 << k, 0.1, 1.0, 0.0)).collect();
        assert!(fit_rate(&pts[..3], Axis::N).is_err());
        pts[2].estimate = 0.0;
        assert!(fit_rate(&pts, Axis::N).is_err());
        pts[2].estimate = 1.0;
        pts[3].particles = 64;
        assert!(fit_rate(&pts, Axis::N).is_err());
    }

    #[test]
    fn points_csv_round_trip() {
        let mut pts = vec![point(64, 0.125, 0.5, 0.01), point(128, 0.125, 0.25, 0.02)];
        pts[1].functional = Some("mean".into());
        pts[1].floor = Some(0.1);
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,functional,kind,N,n,h,T,time,estimate,std_error,R,floor,usable\n"));
        assert_eq!(read_points_csv(&buf[..]).unwrap(), pts);
    }
}
