//! Helpers behind the `wasserstein` and `catalog` subcommands.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::analysis::EstimatorKind;
use crate::measures::{
    wasserstein_1d, wasserstein_exact, wasserstein_sliced, DiscreteMeasure, EXACT_SIZE_CAP, FUNCTIONAL_IDS,
};
use crate::reference::model_catalog;

/// Projections used by `--method sliced` unless overridden.
pub const DEFAULT_PROJECTIONS: usize = 256;

/// Reads a point cloud: one point per row, comma separated, no header,
/// `#` comment lines allowed. Rows must all have the same length.
pub fn read_point_cloud(path: &Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)?;
    parse_point_cloud(&text).map_err(|e| match e {
        Error::Config { line, msg } => Error::Config {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn parse_point_cloud(text: &str) -> Result<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut dim = None;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize);
        let bad = |msg: String| Error::Config { line, msg };
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(bad(format!("ragged row: {} columns, expected {d}", record.len())));
            }
            _ => {}
        }
        for field in &record {
            let x: f64 = field.parse().map_err(|_| bad(format!("not a number: {field:?}")))?;
            points.push(x);
        }
    }
    let Some(dim) = dim else {
        return Err(Error::Config {
            line: None,
            msg: "empty point cloud".into(),
        });
    };
    DiscreteMeasure::uniform(dim, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMethod {
    Exact,
    OneD,
    Sliced,
}

impl TransportMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(Self::Exact),
            "1d" => Some(Self::OneD),
            "sliced" => Some(Self::Sliced),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::OneD => "1d",
            Self::Sliced => "sliced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub distance: f64,
    pub p: u32,
    pub method: &'static str,
    pub dim: usize,
    pub size_a: usize,
    pub size_b: usize,
    pub approximate: bool,
    pub projections: Option<usize>,
}

/// W_p between two clouds with the requested method. The exact method never
/// falls back to an approximation.
pub fn wasserstein_between(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    p: u32,
    method: TransportMethod,
    projections: usize,
    seed: u64,
) -> Result<DistanceReport> {
    if a.dim() != b.dim() {
        return Err(Error::Config {
            line: None,
            msg: format!("point clouds have different dimensions ({} vs {})", a.dim(), b.dim()),
        });
    }
    let mut report = DistanceReport {
        distance: 0.0,
        p,
        method: method.as_str(),
        dim: a.dim(),
        size_a: a.len(),
        size_b: b.len(),
        approximate: false,
        projections: None,
    };
    match method {
        TransportMethod::Exact => {
            let size = a.len().max(b.len());
            if size > EXACT_SIZE_CAP {
                return Err(Error::SizeCap {
                    size,
                    cap: EXACT_SIZE_CAP,
                    hint: "use --method sliced (or 1d for one-dimensional clouds)",
                });
            }
            report.distance = if a.dim() == 1 && a.len() != b.len() {
                wasserstein_1d(a, b, p)?
            } else {
                wasserstein_exact(a, b, p)?
            };
        }
        TransportMethod::OneD => report.distance = wasserstein_1d(a, b, p)?,
        TransportMethod::Sliced => {
            let est = wasserstein_sliced(a, b, p, projections, seed)?;
            report.distance = est.value;
            report.approximate = est.approximate;
            report.projections = Some(est.projections);
        }
    }
    Ok(report)
}

pub fn wasserstein_files(
    a: &Path,
    b: &Path,
    p: u32,
    method: TransportMethod,
    projections: usize,
    seed: u64,
) -> Result<DistanceReport> {
    wasserstein_between(&read_point_cloud(a)?, &read_point_cloud(b)?, p, method, projections, seed)
}

/// Plain-text listing of models, functionals and estimators.
pub fn catalog_text() -> String {
    let mut out = String::from("models:\n");
    for e in model_catalog() {
        let truth = match (&e.linear, &e.flow) {
            (Some(_), _) => "exact law, exact coupled reference",
            (None, Some(_)) => "exact law",
            (None, None) => "fine-grid reference only",
        };
        let _ = writeln!(out, "  {:<14} {} [{truth}]", e.id, e.description);
    }
    out.push_str("functionals:\n");
    for (id, description) in FUNCTIONAL_IDS {
        let _ = writeln!(out, "  {id:<20} {description}");
    }
    out.push_str("estimators:\n");
    for k in EstimatorKind::ALL {
        let _ = writeln!(out, "  {}{}", k.as_str(), if k.needs_functional() { " (needs functional)" } else { "" });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clouds_parse_with_comments() {
        let mu = parse_point_cloud("# header\n0, 1\n2,3\n").unwrap();
        assert_eq!(mu.dim(), 2);
        assert_eq!(mu.points(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn ragged_rows_are_config_errors() {
        match parse_point_cloud("0,1\n2\n").unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, Some(2)),
            other => panic!("{other}"),
        }
        assert!(matches!(parse_point_cloud("0,x\n"), Err(Error::Config { .. })));
        assert!(matches!(parse_point_cloud("# only\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn single_points() {
        let a = parse_point_cloud("0\n").unwrap();
        let b = parse_point_cloud("2\n").unwrap();
        for m in [TransportMethod::Exact, TransportMethod::OneD, TransportMethod::Sliced] {
            let r = wasserstein_between(&a, &b, 2, m, 8, 1).unwrap();
            assert!((r.distance - 2.0).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn exact_over_cap() {
        let pts: Vec<f64> = (0..=EXACT_SIZE_CAP).map(|k| k as f64).collect();
        let mu = DiscreteMeasure::uniform(1, pts).unwrap();
        assert!(matches!(
            wasserstein_between(&mu, &mu, 1, TransportMethod::Exact, 1, 0),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn catalog_lists_everything() {
        let text = catalog_text();
        for id in crate::reference::MODEL_IDS {
            assert!(text.contains(id));
        }
        assert!(text.contains("second-moment"));
        assert!(text.contains("strong-W2"));
    }
}
