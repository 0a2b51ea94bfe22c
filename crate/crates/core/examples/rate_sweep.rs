//! A weak-error h-sweep with common random numbers, then a log-log rate fit.

use mckean::analysis::{fit_rate, run_sweep, Axis, EstimatorKind, ReferenceMode, Replications, SweepAxis, SweepPlan, TimeSelection};
use mckean::measures::Functional;
use mckean::catalog_entry;

fn main() -> mckean::Result<()> {
    let plan = SweepPlan {
        entry: catalog_entry("ou-linear", &Default::default(), 1)?,
        kind: EstimatorKind::WeakSemigroup,
        functional: Some(("second-moment".into(), Functional::from_id("second-moment")?)),
        horizon: 1.0,
        axis: SweepAxis::H {
            particles: 2048,
            steps: vec![4, 8, 16, 32],
        },
        finest: 32,
        reference: ReferenceMode::Exact,
        times: TimeSelection::Terminal,
        replications: Replications::Adaptive { initial: 16, cap: 1024 },
        seed: 5,
        workers: 0,
        progress: false,
    };
    let outcome = run_sweep(&plan)?;
    for p in &outcome.points {
        println!("n = {:>3}  R = {:>5}  error = {:.4e} +- {:.1e}", p.steps, p.replications, p.estimate, p.std_error);
    }
    let fit = fit_rate(&outcome.points, Axis::H)?;
    println!("slope in h: {:.3} +- {:.3} (noise ratio {:.3})", fit.slope, fit.slope_half_width, fit.noise_ratio);
    Ok(())
}
