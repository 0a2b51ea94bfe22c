//! Particle approximation of McKean-Vlasov SDEs by the Euler-Maruyama scheme,
//! with empirical estimation of strong and weak convergence rates.

pub mod analysis;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod measures;
pub mod model;
pub mod noise;
pub mod particles;
pub mod reference;
pub mod selftest;
pub mod summation;

pub use error::{Error, Result};
pub use grid::{k_n, TimeGrid};
pub use measures::DiscreteMeasure;
pub use model::{CoefficientModel, EmpiricalView, RegularityCard};
pub use noise::{InitialLaw, NoiseTableau};
pub use particles::{em_step, simulate, ParticleEnsemble, SnapshotSchedule, TrajectoryRecord};
pub use reference::{catalog_entry, model_catalog, GaussianFlow, LinearOu};
