//! Gradients of radiative-transfer-constrained objectives, three ways:
//! a correlated Monte Carlo adjoint, a score-function Monte Carlo estimator,
//! and an upwind finite-volume reference.

pub mod domain;
pub mod error;
pub mod forward;
pub mod objectives;
pub mod rng;

pub use domain::{
    cell_index, sigma_eval, uniform_velocity_sample, wrap_periodic, CellField, GridSpec,
    PhaseParticle, Position, SigmaField, SpatialDomain, Velocity, VelocityDomain,
};
pub use error::{Error, Result};
pub use forward::{
    collision_step, density_histogram, run_final_states, sample_initial, simulate,
    transport_step, DensityKind, SimulationConfig, StepRecord, StepVisitor, TrajectoryStore,
};
pub use objectives::{
    adjoint_final_condition, eval_j1, eval_j2_mc, ControlWeight, IndicatorFn,
    InitialDistribution, Measurement, Objective, Psi, SpeedWeight,
};
pub use rng::{MasterSeed, ParticleStream};
