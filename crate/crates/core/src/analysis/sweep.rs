//! Replicated sweeps over `h` or `N` with common random numbers.
//!
//! Replication `r` materializes one tableau on the finest grid of the sweep
//! (with the largest `N`); every design point of that replication is driven by
//! aggregations or particle prefixes of it. Per-replication values are
//! collected in replication order and reduced with fixed-tree pairwise sums, so
//! the output does not depend on the worker count.

use rayon::prelude::*;

use super::{epsilon_n, Axis, ErrorPoint, EstimatorKind};
use crate::error::{domain, Error, Result};
use crate::grid::TimeGrid;
use crate::measures::{functional_eval, functional_on_gaussian, w1_to_gaussian, w2_squared_to_gaussian};
use crate::measures::{DiscreteMeasure, Functional};
use crate::noise::NoiseTableau;
use crate::particles::{simulate, ParticleEnsemble, simulate_coupled_fine, simulate_coupled_ou, SnapshotSchedule, TrajectoryRecord};
use crate::reference::CatalogEntry;
use crate::summation::{mean_and_std_error, pairwise_sum_by};

/// A point enters a fit only when `std_error <= NOISE_GATE * estimate`.
pub const NOISE_GATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Vary the step count at fixed `N`.
    H { particles: usize, steps: Vec<usize> },
    /// Vary `N` at a fixed step count.
    N { steps: usize, particles: Vec<usize> },
}

impl SweepAxis {
    /// `(N, n)` per design point, in sweep order.
    pub fn design(&self) -> Vec<(usize, usize)> {
        match self {
            Self::H { particles, steps } => steps.iter().map(|&n| (*particles, n)).collect(),
            Self::N { steps, particles } => particles.iter().map(|&p| (p, *steps)).collect(),
        }
    }

    pub fn axis(&self) -> Axis {
        match self {
            Self::H { .. } => Axis::H,
            Self::N { .. } => Axis::N,
        }
    }

    fn values(&self) -> &[usize] {
        match self {
            Self::H { steps, .. } => steps,
            Self::N { particles, .. } => particles,
        }
    }
}

/// Coupled reference for trajectory errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Exact transitions of a linear model on the finest grid.
    Exact,
    /// The scheme itself on a grid this many times finer than the finest `n`.
    Fine(usize),
}

/// Evaluation times; errors are maximized over the selected nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSelection {
    Terminal,
    /// Nodes nearest `k T / 16`, `k = 0..=16` (every node when `n < 16`).
    Schedule,
    /// The grid node nearest `t`.
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replications {
    Fixed(usize),
    /// Per design point, double `R` from `initial` until the point passes the
    /// noise gate or `cap` is reached.
    Adaptive { initial: usize, cap: usize },
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub entry: CatalogEntry,
    pub kind: EstimatorKind,
    /// Functional id and value, for the semigroup estimators.
    pub functional: Option<(String, Functional)>,
    pub horizon: f64,
    pub axis: SweepAxis,
    /// Finest step count; every swept `n` divides it.
    pub finest: usize,
    pub reference: ReferenceMode,
    pub times: TimeSelection,
    pub replications: Replications,
    pub seed: u64,
    /// Worker threads; 0 means the hardware parallelism.
    pub workers: usize,
    /// Print one progress line per completed batch to stderr.
    pub progress: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Complete,
    /// Point `point` (sweep order) missed the gate at the replication cap;
    /// later points were not run.
    NoiseExhausted { point: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub points: Vec<ErrorPoint>,
    /// Estimates computed from the same replications as `points`: the
    /// sup-inside trajectory error, or the other semigroup error.
    pub companions: Vec<ErrorPoint>,
    pub status: SweepStatus,
}

/// Values of one replication at one design point.
struct RepValue {
    /// Per evaluation node.
    nodes: Vec<f64>,
    /// Particle average of the max-over-nodes squared gap (trajectory errors).
    sup: f64,
    /// Terminal-law samples per node (mean-measure W1).
    samples: Vec<Vec<f64>>,
}

impl SweepPlan {
    pub fn fine_grid(&self) -> Result<TimeGrid> {
        let factor = match self.reference {
            ReferenceMode::Fine(f) if self.is_trajectory() => f,
            _ => 1,
        };
        TimeGrid::new(self.horizon, self.finest * factor)
    }

    fn is_trajectory(&self) -> bool {
        matches!(self.kind, EstimatorKind::StrongTraj | EstimatorKind::StrongTrajSup)
    }

    pub fn validate(&self) -> Result<()> {
        let values = self.axis.values();
        if values.is_empty() {
            return Err(domain("sweep has no design points"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain("sweep values must be strictly increasing"));
        }
        for (particles, n) in self.axis.design() {
            if particles == 0 || n == 0 {
                return Err(domain("N and n must be positive"));
            }
            if self.finest % n != 0 {
                return Err(domain(format!("n = {n} does not divide the finest step count {}", self.finest)));
            }
        }
        match self.replications {
            Replications::Fixed(r) if r < 2 => return Err(domain("at least 2 replications are needed")),
            Replications::Adaptive { initial, cap } if initial < 2 || cap < initial => {
                return Err(domain(format!("adaptive replications need 2 <= initial ({initial}) <= cap ({cap})")))
            }
            _ => {}
        }
        let id = self.entry.id;
        let needs_flow = || -> Result<()> {
            if self.entry.flow.is_none() {
                return Err(Error::Unsupported(format!("model {id} has no exact law")));
            }
            if self.entry.model.dim() != 1 {
                return Err(Error::Unsupported(format!("{} needs d = 1", self.kind)));
            }
            Ok(())
        };
        match self.kind {
            EstimatorKind::StrongTraj | EstimatorKind::StrongTrajSup => match self.reference {
                ReferenceMode::Exact if self.entry.linear.is_none() => Err(Error::Unsupported(format!(
                    "model {id} has no exact coupled reference; use a fine-grid reference"
                ))),
                ReferenceMode::Fine(f) if f < 2 => Err(domain("fine reference factor must be at least 2")),
                _ => Ok(()),
            },
            EstimatorKind::StrongW2 | EstimatorKind::MeanMeasureW1 => needs_flow(),
            EstimatorKind::WeakSemigroup | EstimatorKind::StrongSemigroup => {
                if self.functional.is_none() {
                    return Err(domain(format!("{} needs a functional", self.kind)));
                }
                needs_flow()
            }
        }
    }

    fn eval_nodes(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let n = grid.steps();
        Ok(match self.times {
            TimeSelection::Terminal => vec![n],
            TimeSelection::Schedule if n < 16 => (0..=n).collect(),
            TimeSelection::Schedule => {
                let mut nodes: Vec<usize> = (0..=16).map(|k| (k * n + 8) / 16).collect();
                nodes.dedup();
                nodes
            }
            TimeSelection::At(t) => {
                if !(0.0..=self.horizon).contains(&t) {
                    return Err(domain(format!("evaluation time {t} outside [0, {}]", self.horizon)));
                }
                vec![((t / grid.mesh()).round() as usize).min(n)]
            }
        })
    }

    /// Initial positions and finest tableau of replication `r` with `particles` particles.
    pub fn materialize(&self, replication: u64, particles: usize) -> Result<(Vec<f64>, NoiseTableau)> {
        let model = &self.entry.model;
        let tableau = NoiseTableau::generate(self.seed, replication, particles, model.noise_dim(), self.fine_grid()?)?;
        let initial = self.entry.initial.sample(self.seed, replication, particles, model.dim())?;
        Ok((initial, tableau))
    }

    /// Scheme run of design point `(particles, n)` on its evaluation nodes.
    pub fn simulate_point(
        &self,
        initial: &[f64],
        tableau: &NoiseTableau,
        n: usize,
    ) -> Result<TrajectoryRecord> {
        let grid = TimeGrid::new(self.horizon, n)?;
        let nodes = SnapshotSchedule::Nodes(self.eval_nodes(&grid)?);
        simulate(self.entry.model.as_ref(), initial, &grid, tableau, &nodes)
    }

    /// True when some design point is evaluated after time zero.
    fn steps_needed(&self, points: &[usize]) -> Result<bool> {
        let design = self.axis.design();
        for &k in points {
            let grid = TimeGrid::new(self.horizon, design[k].1)?;
            if self.eval_nodes(&grid)?.iter().any(|&j| j > 0) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// `tableau` may be `None` only when every evaluation node is 0.
    fn point_value(&self, initial: &[f64], tableau: Option<&NoiseTableau>, n: usize) -> Result<RepValue> {
        let grid = TimeGrid::new(self.horizon, n)?;
        let nodes = self.eval_nodes(&grid)?;
        let schedule = SnapshotSchedule::Nodes(nodes.clone());
        let model = self.entry.model.as_ref();
        let mut value = RepValue {
            nodes: Vec::with_capacity(nodes.len()),
            sup: 0.0,
            samples: Vec::new(),
        };
        let Some(tableau) = tableau else {
            // nothing has moved: scheme and reference coincide with the initial ensemble
            debug_assert!(nodes.iter().all(|&j| j == 0));
            let start = ParticleEnsemble::new(0.0, model.dim(), initial.to_vec())?;
            if self.is_trajectory() {
                value.nodes.push(0.0);
                return Ok(value);
            }
            return self.law_values(&[start], value);
        };
        if self.is_trajectory() {
            let coupled = match (self.reference, &self.entry.linear) {
                (ReferenceMode::Exact, Some(linear)) => simulate_coupled_ou(linear, initial, &grid, tableau, &schedule)?,
                (ReferenceMode::Fine(f), _) => simulate_coupled_fine(model, initial, &grid, f, tableau, &schedule)?,
                (ReferenceMode::Exact, None) => return Err(Error::Unsupported("no exact reference".into())),
            };
            let d = model.dim();
            let particles = initial.len() / d;
            let mut worst = vec![0.0f64; particles];
            for (x, xbar) in coupled.scheme.snapshots.iter().zip(&coupled.reference.snapshots) {
                let gap = |i: usize| {
                    let (a, b) = (x.particle(i), xbar.particle(i));
                    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
                };
                for (i, w) in worst.iter_mut().enumerate() {
                    *w = w.max(gap(i));
                }
                value.nodes.push(pairwise_sum_by(particles, gap) / particles as f64);
            }
            value.sup = pairwise_sum_by(particles, |i| worst[i]) / particles as f64;
            return Ok(value);
        }

        let record = simulate(model, initial, &grid, tableau, &schedule)?;
        self.law_values(&record.snapshots, value)
    }

    /// Per-node values of the law-level estimators.
    fn law_values(&self, snapshots: &[ParticleEnsemble], mut value: RepValue) -> Result<RepValue> {
        let flow = self.entry.flow.expect("validated");
        for snap in snapshots {
            let (m, v) = flow.at(snap.time());
            match self.kind {
                EstimatorKind::StrongW2 => {
                    let mu = DiscreteMeasure::uniform(1, snap.positions().to_vec())?;
                    value.nodes.push(w2_squared_to_gaussian(&mu, m, v)?);
                }
                EstimatorKind::WeakSemigroup | EstimatorKind::StrongSemigroup => {
                    let (_, phi) = self.functional.as_ref().expect("validated");
                    let mu = DiscreteMeasure::uniform(1, snap.positions().to_vec())?;
                    let exact = functional_on_gaussian(phi, m, v)?;
                    value.nodes.push(functional_eval(phi, &mu)?.value - exact);
                }
                EstimatorKind::MeanMeasureW1 => value.samples.push(snap.positions().to_vec()),
                EstimatorKind::StrongTraj | EstimatorKind::StrongTrajSup => unreachable!(),
            }
        }
        Ok(value)
    }

    /// Values of replications `reps` at the design points `points`.
    fn replicate(&self, pool: &rayon::ThreadPool, points: &[usize], reps: std::ops::Range<usize>) -> Result<Vec<Vec<RepValue>>> {
        let design = self.axis.design();
        let max_particles = points.iter().map(|&k| design[k].0).max().expect("nonempty");
        let stepping = self.steps_needed(points)?;
        let per_rep: Vec<Vec<RepValue>> = pool.install(|| {
            reps.into_par_iter()
                .map(|r| {
                    let d = self.entry.model.dim();
                    let (initial, tableau) = if stepping {
                        let (initial, tableau) = self.materialize(r as u64, max_particles)?;
                        (initial, Some(tableau))
                    } else {
                        (self.entry.initial.sample(self.seed, r as u64, max_particles, d)?, None)
                    };
                    points
                        .iter()
                        .map(|&k| {
                            let (particles, n) = design[k];
                            match &tableau {
                                Some(t) if particles < max_particles => {
                                    let prefix = t.truncate(particles)?;
                                    self.point_value(&initial[..particles * d], Some(&prefix), n)
                                }
                                t => self.point_value(&initial[..particles * d], t.as_ref(), n),
                            }
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        // transpose to [point][replication]
        let mut out: Vec<Vec<RepValue>> = points.iter().map(|_| Vec::with_capacity(per_rep.len())).collect();
        for rep in per_rep {
            for (slot, v) in out.iter_mut().zip(rep) {
                slot.push(v);
            }
        }
        Ok(out)
    }

    fn base_point(&self, k: usize, kind: EstimatorKind, time: f64, estimate: f64, std_error: f64, reps: usize) -> ErrorPoint {
        let (particles, steps) = self.axis.design()[k];
        let functional = match kind {
            EstimatorKind::WeakSemigroup | EstimatorKind::StrongSemigroup => {
                self.functional.as_ref().map(|(id, _)| id.clone())
            }
            _ => None,
        };
        ErrorPoint {
            model: self.entry.id.to_string(),
            functional,
            kind,
            particles,
            steps,
            h: self.horizon / steps as f64,
            horizon: self.horizon,
            time,
            estimate,
            std_error,
            replications: reps,
            floor: None,
            usable: passes_gate(estimate, std_error),
        }
    }

    /// Reduces the replication values of design point `k` to the requested
    /// estimate and its companion.
    fn aggregate(&self, k: usize, values: &[RepValue]) -> Result<(ErrorPoint, Option<ErrorPoint>)> {
        let (particles, n) = self.axis.design()[k];
        let grid = TimeGrid::new(self.horizon, n)?;
        let nodes = self.eval_nodes(&grid)?;
        let times: Vec<f64> = nodes.iter().map(|&j| grid.node(j)).collect();
        let reps = values.len();
        let column = |c: usize| -> Vec<f64> { values.iter().map(|v| v.nodes[c]).collect() };
        // largest mean over nodes, first one on ties
        let worst = |stats: &mut dyn Iterator<Item = (f64, f64)>| -> (usize, f64, f64) {
            stats.enumerate().fold((0, f64::NEG_INFINITY, 0.0), |best, (c, (m, se))| {
                if m > best.1 {
                    (c, m, se)
                } else {
                    best
                }
            })
        };
        match self.kind {
            EstimatorKind::StrongTraj | EstimatorKind::StrongTrajSup => {
                let (c, m, se) = worst(&mut (0..nodes.len()).map(|c| mean_and_std_error(&column(c))));
                let node_point = self.base_point(k, EstimatorKind::StrongTraj, times[c], m, se, reps);
                let sups: Vec<f64> = values.iter().map(|v| v.sup).collect();
                let (sm, sse) = mean_and_std_error(&sups);
                let sup_point = self.base_point(k, EstimatorKind::StrongTrajSup, self.horizon, sm, sse, reps);
                Ok(if self.kind == EstimatorKind::StrongTraj {
                    (node_point, Some(sup_point))
                } else {
                    (sup_point, Some(node_point))
                })
            }
            EstimatorKind::StrongW2 => {
                let (c, m, se) = worst(&mut (0..nodes.len()).map(|c| mean_and_std_error(&column(c))));
                Ok((self.base_point(k, self.kind, times[c], m, se, reps), None))
            }
            EstimatorKind::WeakSemigroup | EstimatorKind::StrongSemigroup => {
                let weak = worst(&mut (0..nodes.len()).map(|c| {
                    let (m, se) = mean_and_std_error(&column(c));
                    (m.abs(), se)
                }));
                let strong = worst(&mut (0..nodes.len()).map(|c| {
                    let abs: Vec<f64> = column(c).iter().map(|x| x.abs()).collect();
                    mean_and_std_error(&abs)
                }));
                let weak_point = self.base_point(k, EstimatorKind::WeakSemigroup, times[weak.0], weak.1, weak.2, reps);
                let strong_point =
                    self.base_point(k, EstimatorKind::StrongSemigroup, times[strong.0], strong.1, strong.2, reps);
                Ok(if self.kind == EstimatorKind::WeakSemigroup {
                    (weak_point, Some(strong_point))
                } else {
                    (strong_point, Some(weak_point))
                })
            }
            EstimatorKind::MeanMeasureW1 => {
                let flow = self.entry.flow.expect("validated");
                let pooled_size = reps * particles;
                let mut best = (0, f64::NEG_INFINITY, 0.0);
                for c in 0..nodes.len() {
                    let mut pooled = Vec::with_capacity(pooled_size);
                    for v in values {
                        pooled.extend_from_slice(&v.samples[c]);
                    }
                    let (m, var) = flow.at(times[c]);
                    let w1 = w1_to_gaussian(&DiscreteMeasure::uniform(1, pooled)?, m, var)?;
                    if w1 > best.1 {
                        best = (c, w1, (var / pooled_size as f64).sqrt());
                    }
                }
                let mut point = self.base_point(k, self.kind, times[best.0], best.1, best.2, reps);
                point.floor = Some(epsilon_n(pooled_size.max(2), 1)?);
                Ok((point, None))
            }
        }
    }
}

fn passes_gate(estimate: f64, std_error: f64) -> bool {
    std_error <= NOISE_GATE * estimate.abs()
}

/// Runs every design point of `plan`.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| domain(format!("worker pool: {e}")))?;
    let design = plan.axis.design();
    let mut points = Vec::with_capacity(design.len());
    let mut companions = Vec::new();
    let report = |p: &ErrorPoint| {
        if plan.progress {
            eprintln!(
                "[{}] N = {}, n = {}, R = {}: estimate {:.6e} +- {:.2e}",
                p.kind, p.particles, p.steps, p.replications, p.estimate, p.std_error
            );
        }
    };
    match plan.replications {
        Replications::Fixed(r) => {
            let all: Vec<usize> = (0..design.len()).collect();
            let values = plan.replicate(&pool, &all, 0..r)?;
            for (k, vals) in values.iter().enumerate() {
                let (p, c) = plan.aggregate(k, vals)?;
                report(&p);
                points.push(p);
                companions.extend(c);
            }
        }
        Replications::Adaptive { initial, cap } => {
            for k in 0..design.len() {
                let mut values: Vec<RepValue> = Vec::new();
                let mut target = initial;
                loop {
                    let batch = plan.replicate(&pool, &[k], values.len()..target)?;
                    values.extend(batch.into_iter().next().expect("one point"));
                    let (p, c) = plan.aggregate(k, &values)?;
                    report(&p);
                    if p.usable || target >= cap {
                        let exhausted = !p.usable;
                        points.push(p);
                        companions.extend(c);
                        if exhausted {
                            return Ok(SweepOutcome {
                                points,
                                companions,
                                status: SweepStatus::NoiseExhausted { point: k },
                            });
                        }
                        break;
                    }
                    target = (target * 2).min(cap);
                }
            }
        }
    }
    Ok(SweepOutcome {
        points,
        companions,
        status: SweepStatus::Complete,
    })
}
