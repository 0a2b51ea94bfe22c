//! Pathwise error against the exactly coupled McKean-Vlasov particles.

use mckean::particles::simulate_coupled_ou;
use mckean::reference::LinearOu;
use mckean::{NoiseTableau, SnapshotSchedule, TimeGrid};

fn main() -> mckean::Result<()> {
    let model = LinearOu::attract(1.0, 1.0, 0.5);
    let particles = 1024;
    let fine = TimeGrid::new(1.0, 256)?;
    let tableau = NoiseTableau::generate(11, 0, particles, 1, fine)?;
    let initial = model.initial_law().sample(11, 0, particles, 1)?;
    for n in [8, 32, 128] {
        let grid = TimeGrid::new(1.0, n)?;
        let run = simulate_coupled_ou(&model, &initial, &grid, &tableau, &SnapshotSchedule::Terminal)?;
        let (x, xbar) = (run.scheme.terminal(), run.reference.terminal());
        let mse: f64 = x.positions().iter().zip(xbar.positions()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / particles as f64;
        println!("n = {n:>3}: mean squared gap at T = {mse:.3e}");
    }
    Ok(())
}
