//! Particle simulation of the forward transport equation.
//!
//! One step of one particle: move in a straight line for `dt`, then test for
//! a scattering event at the new position (`p >= alpha = exp(-sigma(x) dt)`
//! draws a fresh uniform velocity). Particles are independent, each owns a
//! replayable random stream, and every run is a pure function of
//! `(seed, config)` regardless of how work is partitioned across threads.

use rayon::prelude::*;

use crate::domain::{
    CellField, GridSpec, PhaseParticle, SigmaField, SpatialDomain, VelocityDomain,
};
use crate::error::{Error, Result};
use crate::objectives::InitialDistribution;
use crate::rng::{MasterSeed, ParticleStream};

/// Fixed particle-block size for parallel work. Results are merged in block
/// order, so output is independent of the worker count.
pub(crate) const BLOCK: usize = 8192;

/// Full description of one forward run.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub domain: SpatialDomain,
    pub velocity: VelocityDomain,
    pub sigma: SigmaField,
    pub initial: InitialDistribution,
    pub n_particles: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: MasterSeed,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("time.dt must be positive"));
        }
        if self.n_steps < 1 {
            return Err(Error::config("time: step count must be >= 1"));
        }
        if self.n_particles < 1 {
            return Err(Error::config("run.n_particles must be >= 1"));
        }
        self.initial.validate(&self.domain, &self.velocity)
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Total initial mass carried by density and gradient estimators.
    pub fn mass_weight(&self) -> f64 {
        self.initial.mass(&self.velocity)
    }
}

/// What happened to one particle in one step: the post-step state (position
/// after transport, velocity after the collision test), whether the velocity
/// was resampled, and the survival probability `alpha` used in the test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub particle: PhaseParticle,
    pub scattered: bool,
    pub alpha: f64,
}

/// Streaming observer of a simulation: called once per (particle, step) in
/// step order within each particle, then once per particle with the state at
/// the final time.
pub trait StepVisitor {
    fn visit_step(&mut self, n: usize, m: usize, record: &StepRecord)
        -> std::result::Result<(), String>;

    fn finish_particle(
        &mut self,
        _n: usize,
        _particle: &PhaseParticle,
    ) -> std::result::Result<(), String> {
        Ok(())
    }
}

/// Survival probability evaluator, with the exponential precomputed for
/// constant and piecewise-constant fields. All variants compute exactly
/// `exp(-sigma(x) * dt)`, bit for bit.
enum AlphaEval<'a> {
    Const(f64),
    PerCell { grid: &'a GridSpec, table: Vec<f64> },
    Analytic { sigma: &'a SigmaField, dt: f64 },
}

impl<'a> AlphaEval<'a> {
    fn new(sigma: &'a SigmaField, dt: f64) -> Self {
        match sigma {
            SigmaField::Constant(c) => AlphaEval::Const((-c * dt).exp()),
            SigmaField::PiecewiseConstant { grid, values } => AlphaEval::PerCell {
                grid,
                table: values.iter().map(|s| (-s * dt).exp()).collect(),
            },
            SigmaField::Analytic(_) => AlphaEval::Analytic { sigma, dt },
        }
    }

    #[inline]
    fn at(&self, x: [f64; 2]) -> f64 {
        match self {
            AlphaEval::Const(a) => *a,
            AlphaEval::PerCell { grid, table } => table[grid.cell_index(x)],
            AlphaEval::Analytic { sigma, dt } => (-sigma.eval(x) * dt).exp(),
        }
    }
}

/// Precomputed per-run stepping context.
pub struct StepKernel<'a> {
    domain: &'a SpatialDomain,
    velocity: &'a VelocityDomain,
    alpha: AlphaEval<'a>,
    dt: f64,
}

impl<'a> StepKernel<'a> {
    pub fn new(cfg: &'a SimulationConfig) -> Self {
        StepKernel {
            domain: &cfg.domain,
            velocity: &cfg.velocity,
            alpha: AlphaEval::new(&cfg.sigma, cfg.dt),
            dt: cfg.dt,
        }
    }

    /// Advance one particle by one step, consuming draws from its stream.
    #[inline]
    pub fn step(&self, p: &mut PhaseParticle, stream: &mut ParticleStream) -> StepRecord {
        let mut x = p.x;
        for axis in 0..self.domain.dim() {
            x[axis] += self.dt * p.v.vec[axis];
        }
        p.x = self.domain.wrap(x);

        let alpha = self.alpha.at(p.x);
        let draw = stream.uniform01();
        let scattered = draw >= alpha;
        if scattered {
            p.v = self.velocity.sample(stream);
        }
        StepRecord { particle: *p, scattered, alpha }
    }

    /// Initial state of particle `n` (draws the leading entries of its stream).
    #[inline]
    pub fn initial(&self, initial: &InitialDistribution, stream: &mut ParticleStream) -> PhaseParticle {
        let x = initial.sample_position(stream, self.domain);
        let v = self.velocity.sample(stream);
        PhaseParticle { x, v }
    }
}

/// Move a particle ballistically for `dt` and wrap; the velocity is kept.
#[inline]
pub fn transport_step(p: PhaseParticle, dt: f64, domain: &SpatialDomain) -> PhaseParticle {
    let mut x = p.x;
    for axis in 0..domain.dim() {
        x[axis] += dt * p.v.vec[axis];
    }
    PhaseParticle { x: domain.wrap(x), v: p.v }
}

/// Collision test at the (already transported) position: with probability
/// `1 - exp(-sigma(x) dt)` the velocity is resampled uniformly on `omega`.
#[inline]
pub fn collision_step(
    p: PhaseParticle,
    sigma: &SigmaField,
    dt: f64,
    omega: &VelocityDomain,
    stream: &mut ParticleStream,
) -> (PhaseParticle, StepRecord) {
    let alpha = (-sigma.eval(p.x) * dt).exp();
    let draw = stream.uniform01();
    let scattered = draw >= alpha;
    let v = if scattered { omega.sample(stream) } else { p.v };
    let out = PhaseParticle { x: p.x, v };
    (out, StepRecord { particle: out, scattered, alpha })
}

/// Draw the initial ensemble: positions i.i.d. from the normalized initial
/// density, velocities uniform on the velocity domain. Particle `n` uses the
/// leading draws of stream `n`, so a subsequent simulation continues the same
/// streams.
pub fn sample_initial(cfg: &SimulationConfig) -> Vec<PhaseParticle> {
    let kernel = StepKernel::new(cfg);
    (0..cfg.n_particles)
        .into_par_iter()
        .map(|n| {
            let mut stream = cfg.seed.stream(n as u64);
            kernel.initial(&cfg.initial, &mut stream)
        })
        .collect()
}

/// Re-run particle `n` from its initial sample through all steps, invoking
/// `on_step(m, record)` for m = 1..=n_steps. Returns the final state.
#[inline]
pub fn replay_particle(
    cfg: &SimulationConfig,
    kernel: &StepKernel,
    n: usize,
    mut on_step: impl FnMut(usize, &StepRecord),
) -> PhaseParticle {
    let mut stream = cfg.seed.stream(n as u64);
    let mut p = kernel.initial(&cfg.initial, &mut stream);
    for m in 1..=cfg.n_steps {
        let record = kernel.step(&mut p, &mut stream);
        on_step(m, &record);
    }
    p
}

/// Run the full simulation sequentially, feeding every step record and each
/// particle's final state to the visitor. Returns the final ensemble.
///
/// A visitor failure aborts the run with a diagnostic naming (n, m).
pub fn simulate(cfg: &SimulationConfig, visitor: &mut dyn StepVisitor) -> Result<Vec<PhaseParticle>> {
    cfg.validate()?;
    let kernel = StepKernel::new(cfg);
    let mut finals = Vec::with_capacity(cfg.n_particles);
    for n in 0..cfg.n_particles {
        let mut stream = cfg.seed.stream(n as u64);
        let mut p = kernel.initial(&cfg.initial, &mut stream);
        for m in 1..=cfg.n_steps {
            let record = kernel.step(&mut p, &mut stream);
            visitor
                .visit_step(n, m, &record)
                .map_err(|message| Error::Visitor { n, m, message })?;
        }
        visitor
            .finish_particle(n, &p)
            .map_err(|message| Error::Visitor { n, m: cfg.n_steps, message })?;
        finals.push(p);
    }
    Ok(finals)
}

/// Final states of all particles, computed in parallel. Bit-identical to the
/// ensemble returned by [`simulate`].
pub fn run_final_states(cfg: &SimulationConfig) -> Result<Vec<PhaseParticle>> {
    cfg.validate()?;
    let kernel = StepKernel::new(cfg);
    Ok((0..cfg.n_particles)
        .into_par_iter()
        .map(|n| replay_particle(cfg, &kernel, n, |_, _| {}))
        .collect())
}

/// Which density the histogram estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// Velocity-integrated phase density `<f>_v`.
    PhaseAverage,
    /// Spatial density `rho = |Omega|^-1 <f>_v`.
    Spatial,
}

/// Bin particle positions into a cell histogram.
///
/// Per cell: `mass_weight * count / (N |Q|)` for the phase average, divided
/// by `|Omega|` for the spatial density.
pub fn density_histogram(
    particles: &[PhaseParticle],
    grid: &GridSpec,
    kind: DensityKind,
    mass_weight: f64,
    omega: &VelocityDomain,
) -> Result<CellField> {
    if grid.n_cells() == 0 || particles.is_empty() {
        return Err(Error::config("density histogram needs particles and a non-empty grid"));
    }
    let mut counts = vec![0u64; grid.n_cells()];
    for p in particles {
        counts[grid.cell_index(p.x)] += 1;
    }
    let scale = match kind {
        DensityKind::PhaseAverage => {
            mass_weight / (particles.len() as f64 * grid.cell_volume())
        }
        DensityKind::Spatial => {
            mass_weight / (particles.len() as f64 * grid.cell_volume() * omega.measure())
        }
    };
    let values = counts.iter().map(|&c| c as f64 * scale).collect();
    CellField::new(*grid, values, mass_weight)
}

/// Dense storage of every particle state and step record, step-major.
///
/// Opt-in cross-check for the streaming replay path; capped at
/// `N * M <= 10^7` states.
pub struct TrajectoryStore {
    n_particles: usize,
    n_steps: usize,
    /// `states[m * N + n]` is particle n at time level m, `m = 0..=M`.
    states: Vec<PhaseParticle>,
    /// `(scattered, alpha)` for step m = 1..=M at `(m - 1) * N + n`.
    records: Vec<(bool, f64)>,
}

impl TrajectoryStore {
    pub const MAX_STATES: usize = 10_000_000;

    pub fn record(cfg: &SimulationConfig) -> Result<Self> {
        let total = cfg.n_particles.saturating_mul(cfg.n_steps);
        if total > Self::MAX_STATES {
            return Err(Error::config(format!(
                "trajectory store: N * M = {total} exceeds the {} cap",
                Self::MAX_STATES
            )));
        }
        struct Recorder {
            n_particles: usize,
            n_steps: usize,
            states: Vec<PhaseParticle>,
            records: Vec<(bool, f64)>,
        }
        impl StepVisitor for Recorder {
            fn visit_step(
                &mut self,
                n: usize,
                m: usize,
                record: &StepRecord,
            ) -> std::result::Result<(), String> {
                self.states[m * self.n_particles + n] = record.particle;
                self.records[(m - 1) * self.n_particles + n] = (record.scattered, record.alpha);
                Ok(())
            }
        }
        let placeholder = PhaseParticle {
            x: [0.0, 0.0],
            v: crate::domain::Velocity::interval(0.0),
        };
        let mut recorder = Recorder {
            n_particles: cfg.n_particles,
            n_steps: cfg.n_steps,
            states: vec![placeholder; cfg.n_particles * (cfg.n_steps + 1)],
            records: vec![(false, 1.0); cfg.n_particles * cfg.n_steps],
        };
        // Initial states are the leading draws of each stream.
        let initial = sample_initial(cfg);
        recorder.states[..cfg.n_particles].copy_from_slice(&initial);
        simulate(cfg, &mut recorder)?;
        Ok(TrajectoryStore {
            n_particles: recorder.n_particles,
            n_steps: recorder.n_steps,
            states: recorder.states,
            records: recorder.records,
        })
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// All particle states at time level `m` (0 = initial, M = final).
    pub fn states_at(&self, m: usize) -> &[PhaseParticle] {
        &self.states[m * self.n_particles..(m + 1) * self.n_particles]
    }

    /// `(scattered, alpha)` records for step `m` (1..=M).
    pub fn records_at(&self, m: usize) -> &[(bool, f64)] {
        &self.records[(m - 1) * self.n_particles..m * self.n_particles]
    }
}

/// Per-step access to the whole ensemble, either by replaying the seeds or
/// by reading a dense store. Both feed identical slices to the consumer, so
/// downstream accumulation is bit-identical.
pub enum EnsembleSource<'a> {
    Replay {
        cfg: &'a SimulationConfig,
        states: Vec<PhaseParticle>,
        streams: Vec<ParticleStream>,
    },
    Store(&'a TrajectoryStore),
}

impl<'a> EnsembleSource<'a> {
    pub fn replay(cfg: &'a SimulationConfig) -> Self {
        let kernel = StepKernel::new(cfg);
        let mut states = vec![
            PhaseParticle {
                x: [0.0, 0.0],
                v: crate::domain::Velocity::interval(0.0),
            };
            cfg.n_particles
        ];
        let mut streams = vec![cfg.seed.stream(0); cfg.n_particles];
        states
            .par_chunks_mut(BLOCK)
            .zip(streams.par_chunks_mut(BLOCK))
            .enumerate()
            .for_each(|(block, (ps, ss))| {
                for i in 0..ps.len() {
                    let n = block * BLOCK + i;
                    let mut stream = cfg.seed.stream(n as u64);
                    ps[i] = kernel.initial(&cfg.initial, &mut stream);
                    ss[i] = stream;
                }
            });
        EnsembleSource::Replay { cfg, states, streams }
    }

    pub fn from_store(store: &'a TrajectoryStore) -> Self {
        EnsembleSource::Store(store)
    }

    pub fn n_steps(&self) -> usize {
        match self {
            EnsembleSource::Replay { cfg, .. } => cfg.n_steps,
            EnsembleSource::Store(store) => store.n_steps,
        }
    }

    /// Visit the ensemble at every step m = 1..=M, in order.
    pub fn for_each_step(&mut self, mut f: impl FnMut(usize, &[PhaseParticle])) {
        match self {
            EnsembleSource::Replay { cfg, states, streams } => {
                let kernel = StepKernel::new(cfg);
                for m in 1..=cfg.n_steps {
                    states
                        .par_chunks_mut(BLOCK)
                        .zip(streams.par_chunks_mut(BLOCK))
                        .for_each(|(ps, ss)| {
                            for (p, stream) in ps.iter_mut().zip(ss.iter_mut()) {
                                kernel.step(p, stream);
                            }
                        });
                    f(m, states);
                }
            }
            EnsembleSource::Store(store) => {
                for m in 1..=store.n_steps {
                    f(m, store.states_at(m));
                }
            }
        }
    }
}
