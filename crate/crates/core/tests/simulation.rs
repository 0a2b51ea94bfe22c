use mckean::measures::wasserstein_1d;
use mckean::particles::{simulate_coupled_fine, simulate_coupled_ou};
use mckean::reference::{catalog_entry, model_catalog, ModelParams};
use mckean::{simulate, DiscreteMeasure, EmpiricalView, LinearOu, NoiseTableau, SnapshotSchedule, TimeGrid};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn terminal_gap(model: &LinearOu, particles: usize, n: usize, fine_steps: usize, rep: u64) -> f64 {
    let tableau = NoiseTableau::generate(17, rep, particles, 1, TimeGrid::new(1.0, fine_steps).unwrap()).unwrap();
    let initial = model.initial_law().sample(17, rep, particles, 1).unwrap();
    let run = simulate_coupled_ou(model, &initial, &TimeGrid::new(1.0, n).unwrap(), &tableau, &SnapshotSchedule::Terminal)
        .unwrap();
    let (x, y) = (run.scheme.terminal().positions(), run.reference.terminal().positions());
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / particles as f64
}

#[test]
fn permuting_particles_permutes_the_output() {
    let entry = catalog_entry("ou-linear", &ModelParams { v0: Some(1.0), ..Default::default() }, 1).unwrap();
    let (particles, steps) = (7, 5);
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let tableau = NoiseTableau::generate(3, 0, particles, 1, grid).unwrap();
    let initial = entry.initial.sample(3, 0, particles, 1).unwrap();
    let perm = [3, 0, 6, 1, 5, 2, 4];

    let dump = tableau.to_particle_major();
    let mut permuted = Vec::new();
    for &p in &perm {
        permuted.extend_from_slice(&dump[p * steps..(p + 1) * steps]);
    }
    let ptab = NoiseTableau::from_increments(3, 0, particles, 1, grid, permuted).unwrap();
    let pinit: Vec<f64> = perm.iter().map(|&p| initial[p]).collect();

    let a = simulate(entry.model.as_ref(), &initial, &grid, &tableau, &SnapshotSchedule::Terminal).unwrap();
    let b = simulate(entry.model.as_ref(), &pinit, &grid, &ptab, &SnapshotSchedule::Terminal).unwrap();
    for (k, &p) in perm.iter().enumerate() {
        let (x, y) = (a.terminal().positions()[p], b.terminal().positions()[k]);
        // the mean is summed in a different order, so allow rounding
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "particle {p}: {x} vs {y}");
    }
}

#[test]
fn thread_count_does_not_change_trajectories() {
    let entry = catalog_entry("ou-linear", &Default::default(), 1).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let grid = TimeGrid::new(1.0, 64).unwrap();
            let tableau = NoiseTableau::generate(8, 2, 3000, 1, grid).unwrap();
            let initial = entry.initial.sample(8, 2, 3000, 1).unwrap();
            simulate(entry.model.as_ref(), &initial, &grid, &tableau, &SnapshotSchedule::All).unwrap()
        })
    };
    let (one, many) = (run(1), run(4));
    let bytes = |r: &mckean::TrajectoryRecord| {
        let mut out = Vec::new();
        r.write_binary(&mut out).unwrap();
        out
    };
    assert_eq!(bytes(&one), bytes(&many));
}

#[test]
fn declared_lipschitz_bounds_hold_on_probes() {
    let probes: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..200)
        .map(|k| {
            let s = |j: usize| ((k * 7 + j * 13) as f64 * 0.618).sin() * 3.0;
            (s(0), s(1), (2..7).map(s).collect(), (7..10).map(s).collect())
        })
        .collect();
    let mut holder_unit = ModelParams::default();
    holder_unit.eta = Some(1.0);
    let mut entries = model_catalog();
    entries.push(catalog_entry("holder-drift", &holder_unit, 1).unwrap());
    for entry in entries {
        let card = entry.model.regularity();
        if !card.lipschitz_in_x_and_measure {
            continue;
        }
        let l = card.lipschitz_constant.expect("Lipschitz models declare a constant");
        for (x, y, mu, nu) in &probes {
            let (vm, vn) = (EmpiricalView::new(mu, 1).unwrap(), EmpiricalView::new(nu, 1).unwrap());
            let (mut bx, mut by) = ([0.0], [0.0]);
            entry.model.drift(0.3, &[*x], &vm, &mut bx);
            entry.model.drift(0.3, &[*y], &vn, &mut by);
            let w1 = wasserstein_1d(
                &DiscreteMeasure::uniform(1, mu.clone()).unwrap(),
                &DiscreteMeasure::uniform(1, nu.clone()).unwrap(),
                1,
            )
            .unwrap();
            assert!((bx[0] - by[0]).abs() <= l * ((x - y).abs() + w1) + 1e-12, "{}", entry.id);
        }
    }
}

#[test]
fn halving_the_mesh_does_not_increase_the_strong_error() {
    let model = LinearOu::attract(1.0, 1.0, 0.0);
    let (coarse, fine): (Vec<f64>, Vec<f64>) =
        (0..200).map(|r| (terminal_gap(&model, 1024, 8, 16, r), terminal_gap(&model, 1024, 16, 16, r))).unzip();
    let diffs: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| b - a).collect();
    let (m, se) = mean_se(&diffs);
    assert!(m <= 2.0 * se, "refinement increased the error by {m} (se {se})");
}

#[test]
fn exact_reference_keeps_the_stationary_variance() {
    // b = -x, sigma = 1 started in N(0, 1/2) stays there; no interaction
    let model = LinearOu::new(-1.0, 0.0, 1.0, 0.0, 0.5, 1);
    let particles = 100_000;
    let tableau = NoiseTableau::generate(4, 0, particles, 1, TimeGrid::new(1.0, 4).unwrap()).unwrap();
    let initial = model.initial_law().sample(4, 0, particles, 1).unwrap();
    let run =
        simulate_coupled_ou(&model, &initial, &TimeGrid::new(1.0, 1).unwrap(), &tableau, &SnapshotSchedule::Terminal)
            .unwrap();
    let xs = run.reference.terminal().positions();
    let m = xs.iter().sum::<f64>() / particles as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (particles as f64 - 1.0);
    assert!((v / 0.5 - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn exact_reference_without_noise_is_the_ode_solution() {
    let model = LinearOu::new(-0.7, 0.0, 0.0, 0.0, 0.0, 1);
    let initial = vec![1.0, -2.0];
    let tableau = NoiseTableau::generate(1, 0, 2, 1, TimeGrid::new(2.0, 8).unwrap()).unwrap();
    let run =
        simulate_coupled_ou(&model, &initial, &TimeGrid::new(2.0, 4).unwrap(), &tableau, &SnapshotSchedule::Terminal)
            .unwrap();
    let decay = (-0.7f64 * 2.0).exp();
    for (x, x0) in run.reference.terminal().positions().iter().zip(&initial) {
        assert!((x - x0 * decay).abs() < 1e-12);
    }
}

/// Scheme error at `n = 8` against a 64x finer run and against the exact
/// reference, replication by replication. Interaction is switched off so both
/// references approximate the same process.
fn fine_and_exact_gaps(factor: usize, reps: u64) -> (Vec<f64>, Vec<f64>) {
    let model = LinearOu::new(-1.0, 0.0, 1.0, 1.0, 0.0, 1);
    let (particles, n) = (256, 8);
    let coarse = TimeGrid::new(1.0, n).unwrap();
    (0..reps)
        .map(|r| {
            let tableau = NoiseTableau::generate(23, r, particles, 1, TimeGrid::new(1.0, n * factor).unwrap()).unwrap();
            let initial = model.initial_law().sample(23, r, particles, 1).unwrap();
            let gap = |run: mckean::particles::CoupledRecord| {
                let (x, y) = (run.scheme.terminal().positions(), run.reference.terminal().positions());
                x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / particles as f64
            };
            let fine = simulate_coupled_fine(&model, &initial, &coarse, factor, &tableau, &SnapshotSchedule::Terminal);
            let exact = simulate_coupled_ou(&model, &initial, &coarse, &tableau, &SnapshotSchedule::Terminal);
            (gap(fine.unwrap()), gap(exact.unwrap()))
        })
        .unzip()
}

#[test]
fn fine_reference_agrees_with_the_exact_one() {
    let (fine, exact) = fine_and_exact_gaps(64, 200);
    let (mf, sf) = mean_se(&fine);
    let (me, se) = mean_se(&exact);
    assert!((mf - me).abs() <= 3.0 * (sf * sf + se * se).sqrt(), "fine {mf} vs exact {me}");
}

#[test]
fn fine_reference_bias_has_saturated_at_factor_64() {
    let (f64_gaps, _) = fine_and_exact_gaps(64, 50);
    let (f128_gaps, _) = fine_and_exact_gaps(128, 50);
    let (a, b) = (mean_se(&f64_gaps).0, mean_se(&f128_gaps).0);
    assert!((a - b).abs() < 0.1 * b, "factor 64: {a}, factor 128: {b}");
}

#[test]
fn particle_moments_follow_the_flow() {
    let entry = catalog_entry("ou-linear", &Default::default(), 1).unwrap();
    let flow = entry.flow.unwrap();
    let (particles, n) = (4096, 256);
    let grid = TimeGrid::new(1.0, n).unwrap();
    let (means, vars): (Vec<f64>, Vec<f64>) = (0..20)
        .map(|r| {
            let tableau = NoiseTableau::generate(99, r, particles, 1, grid).unwrap();
            let initial = entry.initial.sample(99, r, particles, 1).unwrap();
            let rec = simulate(entry.model.as_ref(), &initial, &grid, &tableau, &SnapshotSchedule::Terminal).unwrap();
            let view = rec.terminal().view();
            (view.mean()[0], view.variance(0))
        })
        .unzip();
    let (m, v) = flow.at(1.0);
    let (mm, ms) = mean_se(&means);
    let (vm, vs) = mean_se(&vars);
    assert!((mm - m).abs() <= 3.0 * ms, "mean {mm} vs {m} (se {ms})");
    assert!((vm - v).abs() <= 3.0 * vs, "variance {vm} vs {v} (se {vs})");
}

#[test]
fn one_particle_without_noise_follows_the_mean_field_ode() {
    let params = ModelParams { sigma: Some(0.0), ..Default::default() };
    let entry = catalog_entry("ou-linear", &params, 1).unwrap();
    for n in [16, 64, 256] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let tableau = NoiseTableau::generate(0, 0, 1, 1, grid).unwrap();
        let rec = simulate(entry.model.as_ref(), &[1.0], &grid, &tableau, &SnapshotSchedule::Terminal).unwrap();
        let x = rec.terminal().positions()[0];
        let h = grid.mesh();
        assert!((x - (1.0 - 0.5 * h).powi(n as i32)).abs() < 1e-12);
        assert!((x - (-0.5f64).exp()).abs() < h, "n = {n}");
    }
}
