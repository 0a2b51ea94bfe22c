//! Simulates the linear-interaction OU particle system and compares the
//! terminal empirical moments with the exact Gaussian flow.

use mckean::{catalog_entry, simulate, NoiseTableau, SnapshotSchedule, TimeGrid};

fn main() -> mckean::Result<()> {
    let entry = catalog_entry("ou-linear", &Default::default(), 1)?;
    let flow = entry.flow.expect("ou-linear has an exact law");
    let (particles, steps, seed) = (4096, 64, 42);

    let grid = TimeGrid::new(1.0, steps)?;
    let tableau = NoiseTableau::generate(seed, 0, particles, 1, grid.clone())?;
    let initial = entry.initial.sample(seed, 0, particles, 1)?;
    let record = simulate(entry.model.as_ref(), &initial, &grid, &tableau, &SnapshotSchedule::Nodes(vec![0, 16, 32, 64]))?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "mean", "exact", "variance", "exact");
    for snap in &record.snapshots {
        let view = snap.view();
        let (m, v) = flow.at(snap.time());
        println!("{:>6.3} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", snap.time(), view.mean()[0], m, view.variance(0), v);
    }
    Ok(())
}
