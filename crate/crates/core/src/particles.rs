//! Euler-Maruyama integration of the interacting particle system and its
//! synchronously coupled references.
//!
//! One step maps every particle with coefficients frozen at the left node:
//!
//! ```text
//! X^i_{t_{j+1}} = X^i_{t_j} + b(t_j, X^i_{t_j}, mu^N_{t_j}) h + sigma(t_j, X^i_{t_j}, mu^N_{t_j}) dW^i_j
//! ```
//!
//! The empirical measure is built once per step and shared by all particles.
//! Only grid-node values are stored.

use std::io::{Read, Write};

use crate::error::{domain, Error, Result};
use crate::grid::TimeGrid;
use crate::model::{CoefficientModel, EmpiricalView};
use crate::noise::{keyed_normal, NoiseTableau, StreamTag};
use crate::reference::{phi1, LinearOu};

/// `N` particle positions in `R^d` at one time (row-major `N x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    time: f64,
    dim: usize,
    positions: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn new(time: f64, dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(domain(format!(
                "{} coordinates do not form a nonempty ensemble in dimension {dim}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::Integration {
                particle: i / dim,
                step: 0,
                time,
            });
        }
        Ok(Self { time, dim, positions })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> EmpiricalView<'_> {
        EmpiricalView::new(&self.positions, self.dim).expect("ensemble invariants hold")
    }
}

/// Scratch buffers for repeated steps with one model.
struct Stepper<'m> {
    model: &'m dyn CoefficientModel,
    drift: Vec<f64>,
    shock: Vec<f64>,
    next: Vec<f64>,
}

impl<'m> Stepper<'m> {
    fn new(model: &'m dyn CoefficientModel, particles: usize) -> Self {
        let d = model.dim();
        Self {
            model,
            drift: vec![0.0; particles * d],
            shock: vec![0.0; particles * d],
            next: vec![0.0; particles * d],
        }
    }

    /// Advances `positions` from `t` by `h` with the step's increments
    /// `noise` (`N x q`, particle-major).
    fn advance(&mut self, positions: &mut Vec<f64>, t: f64, h: f64, step: usize, noise: &[f64]) -> Result<()> {
        let d = self.model.dim();
        {
            let mu = EmpiricalView::new(positions, d)?;
            self.model.drift_batch(t, positions, &mu, &mut self.drift);
            self.model.diffusion_apply_batch(t, positions, &mu, noise, &mut self.shock);
        }
        let mut finite = true;
        for (((out, x), b), s) in self.next.iter_mut().zip(positions.iter()).zip(&self.drift).zip(&self.shock) {
            *out = x + b * h + s;
            finite &= out.is_finite();
        }
        if !finite {
            let k = self.next.iter().position(|v| !v.is_finite()).expect("some value is not finite");
            return Err(Error::Integration {
                particle: k / d,
                step,
                time: t,
            });
        }
        std::mem::swap(positions, &mut self.next);
        Ok(())
    }
}

/// One Euler-Maruyama step from `ensemble` (at `t_j`) with mesh `h`.
///
/// `increments` holds one `q`-vector per particle, particle-major.
pub fn em_step(
    ensemble: &ParticleEnsemble,
    h: f64,
    increments: &[f64],
    model: &dyn CoefficientModel,
) -> Result<ParticleEnsemble> {
    let n = ensemble.len();
    let q = model.noise_dim();
    if ensemble.dim() != model.dim() {
        return Err(domain(format!(
            "ensemble dimension {} does not match model dimension {}",
            ensemble.dim(),
            model.dim()
        )));
    }
    if increments.len() != n * q {
        return Err(domain(format!("expected {} increments, got {}", n * q, increments.len())));
    }
    let mut positions = ensemble.positions.clone();
    let mut stepper = Stepper::new(model, n);
    stepper.advance(&mut positions, ensemble.time, h, 0, increments)?;
    Ok(ParticleEnsemble {
        time: ensemble.time + h,
        dim: ensemble.dim,
        positions,
    })
}

/// Which grid nodes a simulation keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnapshotSchedule {
    All,
    Terminal,
    /// Increasing node indices.
    Nodes(Vec<usize>),
}

impl SnapshotSchedule {
    pub fn resolve(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        match self {
            Self::All => Ok((0..=grid.steps()).collect()),
            Self::Terminal => Ok(vec![grid.steps()]),
            Self::Nodes(nodes) => {
                if nodes.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(domain("snapshot nodes must be strictly increasing"));
                }
                if nodes.last().is_some_and(|&j| j > grid.steps()) {
                    return Err(domain("snapshot node beyond the grid"));
                }
                Ok(nodes.clone())
            }
        }
    }
}

/// Where a trajectory came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub replication: u64,
    pub model_id: String,
    pub particles: usize,
    pub steps: usize,
}

/// Snapshots of one simulated ensemble at selected grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub grid: TimeGrid,
    pub nodes: Vec<usize>,
    pub snapshots: Vec<ParticleEnsemble>,
    pub provenance: Provenance,
}

impl TrajectoryRecord {
    pub fn terminal(&self) -> &ParticleEnsemble {
        self.snapshots.last().expect("records hold at least one snapshot")
    }

    /// Snapshot at grid node `j`, if recorded.
    pub fn at_node(&self, j: usize) -> Option<&ParticleEnsemble> {
        self.nodes.binary_search(&j).ok().map(|k| &self.snapshots[k])
    }

    /// CSV with columns `replication,time,particle,coordinate,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replication", "time", "particle", "coordinate", "value"])?;
        for snap in &self.snapshots {
            for i in 0..snap.len() {
                for (k, v) in snap.particle(i).iter().enumerate() {
                    out.write_record([
                        self.provenance.replication.to_string(),
                        snap.time.to_string(),
                        i.to_string(),
                        k.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Little-endian binary: header `(seed, replication, N, d, snapshots, T)`
    /// as 64-bit fields, the snapshot node indices as `u64`, then positions
    /// particle-major, snapshot-minor, coordinate innermost.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.provenance;
        let dim = self.terminal().dim;
        for field in [p.seed, p.replication, p.particles as u64, dim as u64, self.nodes.len() as u64] {
            w.write_all(&field.to_le_bytes())?;
        }
        w.write_all(&self.grid.horizon().to_le_bytes())?;
        w.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        for &j in &self.nodes {
            w.write_all(&(j as u64).to_le_bytes())?;
        }
        for i in 0..p.particles {
            for snap in &self.snapshots {
                for v in snap.particle(i) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Reads [`write_binary`](Self::write_binary) output; the model id is not stored.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = move |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let replication = u64::from_le_bytes(next(&mut r)?);
        let particles = u64::from_le_bytes(next(&mut r)?) as usize;
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let count = u64::from_le_bytes(next(&mut r)?) as usize;
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let grid = TimeGrid::new(horizon, steps)?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            nodes.push(u64::from_le_bytes(next(&mut r)?) as usize);
        }
        let mut data = vec![vec![0.0; particles * dim]; count];
        for i in 0..particles {
            for snap in data.iter_mut() {
                for k in 0..dim {
                    snap[i * dim + k] = f64::from_le_bytes(next(&mut r)?);
                }
            }
        }
        let snapshots = nodes
            .iter()
            .zip(data)
            .map(|(&j, pos)| ParticleEnsemble::new(grid.node(j), dim, pos))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            nodes,
            snapshots,
            provenance: Provenance {
                seed,
                replication,
                model_id: String::new(),
                particles,
                steps,
            },
        })
    }
}

fn check_initial(model: &dyn CoefficientModel, initial: &[f64], tableau: &NoiseTableau) -> Result<usize> {
    let d = model.dim();
    if initial.is_empty() || initial.len() % d != 0 {
        return Err(domain(format!(
            "initial buffer of length {} is not a nonempty multiple of d = {d}",
            initial.len()
        )));
    }
    let n = initial.len() / d;
    if tableau.particles() != n {
        return Err(domain(format!(
            "tableau has {} particles, initial ensemble has {n}",
            tableau.particles()
        )));
    }
    if tableau.noise_dim() != model.noise_dim() {
        return Err(domain(format!(
            "tableau noise dimension {} does not match model noise dimension {}",
            tableau.noise_dim(),
            model.noise_dim()
        )));
    }
    Ok(n)
}

/// Runs the scheme on `grid`, driving it with `tableau` aggregated to `grid`.
pub fn simulate(
    model: &dyn CoefficientModel,
    initial: &[f64],
    grid: &TimeGrid,
    tableau: &NoiseTableau,
    schedule: &SnapshotSchedule,
) -> Result<TrajectoryRecord> {
    let n = check_initial(model, initial, tableau)?;
    let ratio = tableau.grid().ratio_to(grid)?;
    let nodes = schedule.resolve(grid)?;
    let d = model.dim();
    let h = grid.mesh();

    let mut positions = initial.to_vec();
    ParticleEnsemble::new(0.0, d, positions.clone())?;
    let mut snapshots = Vec::with_capacity(nodes.len());
    let mut wanted = nodes.iter().peekable();
    let mut stepper = Stepper::new(model, n);
    let mut row = vec![0.0; n * model.noise_dim()];
    for j in 0..=grid.steps() {
        if wanted.peek() == Some(&&j) {
            wanted.next();
            snapshots.push(ParticleEnsemble {
                time: grid.node(j),
                dim: d,
                positions: positions.clone(),
            });
        }
        if wanted.peek().is_none() {
            break;
        }
        let noise = if ratio == 1 {
            tableau.row(j)
        } else {
            tableau.coarse_row_into(j, ratio, &mut row);
            &row
        };
        stepper.advance(&mut positions, grid.node(j), h, j, noise)?;
    }
    Ok(TrajectoryRecord {
        grid: *grid,
        nodes,
        snapshots,
        provenance: Provenance {
            seed: tableau.seed(),
            replication: tableau.replication(),
            model_id: model.id().to_string(),
            particles: n,
            steps: grid.steps(),
        },
    })
}

/// Scheme and reference trajectories sharing initial conditions and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRecord {
    pub scheme: TrajectoryRecord,
    pub reference: TrajectoryRecord,
}

/// Coupled run against the exact McKean-Vlasov reference of a linear model.
///
/// Reference particles use the deterministic mean-field input `m(s)` of the
/// Gaussian flow and exact Ornstein-Uhlenbeck transitions over each fine step
/// of the tableau, driven by the same fine increments as the scheme. The part
/// of the stochastic convolution orthogonal to the increment comes from the
/// auxiliary stream of the same `(seed, replication)`.
pub fn simulate_coupled_ou(
    model: &LinearOu,
    initial: &[f64],
    grid: &TimeGrid,
    tableau: &NoiseTableau,
    schedule: &SnapshotSchedule,
) -> Result<CoupledRecord> {
    let scheme = simulate(model, initial, grid, tableau, schedule)?;
    let ratio = tableau.grid().ratio_to(grid)?;
    let fine = *tableau.grid();
    let d = model.dim();
    let n = initial.len() / d;
    let flow = model.flow();
    let hf = fine.mesh();
    let decay = (model.a * hf).exp();
    let var_conv = hf * phi1(2.0 * model.a * hf);
    let cov = hf * phi1(model.a * hf);
    let beta = cov / hf;
    let resid = (var_conv - cov * beta).max(0.0).sqrt();
    let forcing = model.bbar * decay * hf * phi1(model.bbar * hf);

    let mut positions = initial.to_vec();
    let mut snapshots = Vec::with_capacity(scheme.nodes.len());
    let mut wanted = scheme.nodes.iter().peekable();
    for jf in 0..=fine.steps() {
        if jf % ratio == 0 && wanted.peek() == Some(&&(jf / ratio)) {
            wanted.next();
            snapshots.push(ParticleEnsemble {
                time: grid.node(jf / ratio),
                dim: d,
                positions: positions.clone(),
            });
        }
        if wanted.peek().is_none() {
            break;
        }
        let shift = forcing * flow.mean(fine.node(jf));
        for i in 0..n {
            let dw = tableau.increment(i, jf);
            for k in 0..d {
                let aux = if resid > 0.0 {
                    keyed_normal(tableau.seed(), tableau.replication(), StreamTag::Aux, i, jf, k)
                } else {
                    0.0
                };
                let conv = beta * dw[k] + resid * aux;
                let x = &mut positions[i * d + k];
                *x = decay * *x + shift + model.sigma * conv;
                if !x.is_finite() {
                    return Err(Error::Integration {
                        particle: i,
                        step: jf,
                        time: fine.node(jf),
                    });
                }
            }
        }
    }
    let reference = TrajectoryRecord {
        grid: *grid,
        nodes: scheme.nodes.clone(),
        snapshots,
        provenance: Provenance {
            model_id: format!("{}:exact", model.id()),
            ..scheme.provenance.clone()
        },
    };
    Ok(CoupledRecord { scheme, reference })
}

/// Coupled run against the scheme itself on a grid `refinement` times finer.
pub fn simulate_coupled_fine(
    model: &dyn CoefficientModel,
    initial: &[f64],
    coarse: &TimeGrid,
    refinement: usize,
    tableau: &NoiseTableau,
    schedule: &SnapshotSchedule,
) -> Result<CoupledRecord> {
    if refinement < 2 {
        return Err(domain(format!("refinement factor {refinement} must be at least 2")));
    }
    let fine = TimeGrid::new(coarse.horizon(), coarse.steps() * refinement)?;
    let scheme = simulate(model, initial, coarse, tableau, schedule)?;
    let fine_nodes = SnapshotSchedule::Nodes(scheme.nodes.iter().map(|j| j * refinement).collect());
    let mut reference = simulate(model, initial, &fine, tableau, &fine_nodes)?;
    reference.grid = *coarse;
    reference.nodes = scheme.nodes.clone();
    reference.provenance.model_id = format!("{}:fine{refinement}", model.id());
    Ok(CoupledRecord { scheme, reference })
}
