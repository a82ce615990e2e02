//! Objective functionals, measurement data, control weights and the adjoint
//! final condition derived from each objective.
//!
//! Two objectives are supported: the inverse / data-matching functional
//! `J1 = 1/2 * integral |rho_T - d|^2` over the spatial domain, and the
//! terminal control functional `J2 = integral r(x,v) f(T,x,v)`.

use crate::domain::{CellField, Position, SpatialDomain, Velocity, VelocityDomain};
use crate::error::{Error, Result};
use crate::rng::ParticleStream;

/// Initial phase-space distribution, velocity-independent Gaussian in x.
///
/// `amplitude * exp(-decay * |x|^2)` on the domain, uniform in v. Particles
/// are sampled from the normalized density (Gaussian wrapped into the box),
/// and the total mass is carried separately as [`InitialDistribution::mass`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    Gauss1D { amplitude: f64, decay: f64 },
    Gauss2D { amplitude: f64, decay: f64 },
}

impl InitialDistribution {
    pub fn validate(&self, domain: &SpatialDomain, omega: &VelocityDomain) -> Result<()> {
        let (amplitude, decay, dim) = match *self {
            InitialDistribution::Gauss1D { amplitude, decay } => (amplitude, decay, 1),
            InitialDistribution::Gauss2D { amplitude, decay } => (amplitude, decay, 2),
        };
        if domain.dim() != dim || omega.dim() != dim {
            return Err(Error::config(format!(
                "initial distribution is {dim}D but domain/velocity are {}D/{}D",
                domain.dim(),
                omega.dim()
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::config("initial.amplitude must be positive"));
        }
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::config("initial.decay must be positive"));
        }
        Ok(())
    }

    /// Total initial mass `rho_tot = integral f_in dx dv`, computed
    /// analytically (Gaussian integral over the real line; the paper's
    /// presets put negligible mass outside the box, and sampling wraps the
    /// tails back in so the particle count stays exact).
    pub fn mass(&self, omega: &VelocityDomain) -> f64 {
        let pi = std::f64::consts::PI;
        match *self {
            InitialDistribution::Gauss1D { amplitude, decay } => {
                amplitude * (pi / decay).sqrt() * omega.measure()
            }
            InitialDistribution::Gauss2D { amplitude, decay } => {
                amplitude * (pi / decay) * omega.measure()
            }
        }
    }

    /// Density value `f_in(x, v)` (velocity-independent).
    #[inline]
    pub fn eval(&self, x: Position) -> f64 {
        match *self {
            InitialDistribution::Gauss1D { amplitude, decay } => {
                amplitude * (-decay * x[0] * x[0]).exp()
            }
            InitialDistribution::Gauss2D { amplitude, decay } => {
                amplitude * (-decay * (x[0] * x[0] + x[1] * x[1])).exp()
            }
        }
    }

    /// Draw one position from the normalized spatial density, then wrap.
    #[inline]
    pub fn sample_position(&self, stream: &mut ParticleStream, domain: &SpatialDomain) -> Position {
        match *self {
            InitialDistribution::Gauss1D { decay, .. } => {
                let std = (0.5 / decay).sqrt();
                let (z, _) = stream.normal_pair();
                domain.wrap([std * z, 0.0])
            }
            InitialDistribution::Gauss2D { decay, .. } => {
                let std = (0.5 / decay).sqrt();
                let (z0, z1) = stream.normal_pair();
                domain.wrap([std * z0, std * z1])
            }
        }
    }
}

/// Measurement density d(x) for the inverse objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// `amplitude * exp(-sum_i decay_i (x_i - center_i)^2)`; unit mass is
    /// checked by quadrature at construction.
    Gauss { amplitude: f64, decay: [f64; 2], center: [f64; 2] },
    /// Piecewise-constant data on a grid (e.g. a recorded density), read
    /// back at the containing cell. Used for matched-data experiments.
    Grid(CellField),
}

impl Measurement {
    pub fn gauss(
        domain: &SpatialDomain,
        amplitude: f64,
        decay: [f64; 2],
        center: [f64; 2],
    ) -> Result<Self> {
        let m = Measurement::Gauss { amplitude, decay, center };
        let mass = m.quadrature_mass(domain, 10_000);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::config(format!(
                "measurement: integral of d over the domain is {mass}, expected 1 within 1e-6"
            )));
        }
        Ok(m)
    }

    pub fn grid(field: CellField) -> Self {
        Measurement::Grid(field)
    }

    /// Midpoint-rule mass of d over the box with `n` points per axis.
    pub fn quadrature_mass(&self, domain: &SpatialDomain, n: usize) -> f64 {
        match domain.dim() {
            1 => {
                let [a, b] = domain.bounds(0);
                let h = (b - a) / n as f64;
                (0..n)
                    .map(|i| self.eval([a + (i as f64 + 0.5) * h, 0.0]))
                    .sum::<f64>()
                    * h
            }
            _ => {
                let [a0, b0] = domain.bounds(0);
                let [a1, b1] = domain.bounds(1);
                let n1 = (n as f64).sqrt().round() as usize;
                let h0 = (b0 - a0) / n1 as f64;
                let h1 = (b1 - a1) / n1 as f64;
                let mut sum = 0.0;
                for i in 0..n1 {
                    for j in 0..n1 {
                        sum += self.eval([
                            a0 + (i as f64 + 0.5) * h0,
                            a1 + (j as f64 + 0.5) * h1,
                        ]);
                    }
                }
                sum * h0 * h1
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: Position) -> f64 {
        match self {
            Measurement::Gauss { amplitude, decay, center } => {
                let d0 = x[0] - center[0];
                let d1 = x[1] - center[1];
                amplitude * (-(decay[0] * d0 * d0 + decay[1] * d1 * d1)).exp()
            }
            Measurement::Grid(field) => field.values[field.grid.cell_index(x)],
        }
    }
}

/// Velocity part s(v) of the control weight, `s(v) >= 0` on the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedWeight {
    Const(f64),
    /// `v^2` (1D).
    SquaredSpeed,
    /// `v_1^2`, the square of the first velocity component (2D).
    SquaredFirstComponent,
}

impl SpeedWeight {
    #[inline]
    pub fn eval(&self, v: &Velocity) -> f64 {
        match self {
            SpeedWeight::Const(c) => *c,
            SpeedWeight::SquaredSpeed => v.coord * v.coord,
            SpeedWeight::SquaredFirstComponent => v.vec[0] * v.vec[0],
        }
    }
}

/// Smooth approximate indicator of the measurement set E.
///
/// The bump is a product, per axis, of two logistic ramps with the given
/// sharpness; it is ~1 inside `center +- half_width` and decays smoothly to 0
/// outside. Values are always in (0, 1). The bump is not periodized, so E
/// should sit well inside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndicatorFn {
    One,
    Bump { center: [f64; 2], half_width: [f64; 2], sharpness: f64 },
}

impl IndicatorFn {
    #[inline]
    pub fn eval(&self, x: Position, dim: usize) -> f64 {
        match self {
            IndicatorFn::One => 1.0,
            IndicatorFn::Bump { center, half_width, sharpness } => {
                let mut value = 1.0;
                for axis in 0..dim {
                    let lo = center[axis] - half_width[axis];
                    let hi = center[axis] + half_width[axis];
                    let up = 1.0 / (1.0 + (-sharpness * (x[axis] - lo)).exp());
                    let down = 1.0 / (1.0 + (-sharpness * (hi - x[axis])).exp());
                    value *= up * down;
                }
                value
            }
        }
    }
}

/// Control weight `r(x, v) = s(v) * I_E(x)` for the J2 objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlWeight {
    pub speed: SpeedWeight,
    pub indicator: IndicatorFn,
    dim: usize,
}

impl ControlWeight {
    pub fn new(speed: SpeedWeight, indicator: IndicatorFn, dim: usize) -> Result<Self> {
        if let SpeedWeight::Const(c) = speed {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::config("control.speed const must be >= 0"));
            }
        }
        if let IndicatorFn::Bump { half_width, sharpness, .. } = indicator {
            if half_width[..dim].iter().any(|w| *w <= 0.0) || sharpness <= 0.0 {
                return Err(Error::config(
                    "control.indicator: half_width and sharpness must be positive",
                ));
            }
        }
        Ok(ControlWeight { speed, indicator, dim })
    }

    #[inline]
    pub fn eval(&self, x: Position, v: &Velocity) -> f64 {
        self.speed.eval(v) * self.indicator.eval(x, self.dim)
    }
}

/// Which objective drives the adjoint and the gradient.
#[derive(Debug, Clone)]
pub enum Objective {
    J1 { measurement: Measurement },
    J2 { control: ControlWeight },
}

/// Inverse objective `J1 = 1/2 sum_j (rho_T(c_j) - d(c_j))^2 |Q_j|`
/// (midpoint rule on the density grid).
///
/// An analytic measurement is sampled at cell centers; a grid measurement
/// must live on the same grid.
pub fn eval_j1(rho_t: &CellField, d: &Measurement) -> Result<f64> {
    if let Measurement::Grid(field) = d {
        if field.grid != rho_t.grid {
            return Err(Error::GridMismatch(
                "measurement grid differs from density grid".into(),
            ));
        }
    }
    let volume = rho_t.grid.cell_volume();
    let sum: f64 = (0..rho_t.grid.n_cells())
        .map(|idx| {
            let diff = rho_t.values[idx] - d.eval(rho_t.grid.center(idx));
            diff * diff
        })
        .sum();
    Ok(0.5 * sum * volume)
}

/// Monte Carlo value of J2: `mass_weight * (1/N) sum_n r(x_n, v_n)` over the
/// final ensemble.
pub fn eval_j2_mc(ensemble: &[crate::domain::PhaseParticle], r: &ControlWeight, mass_weight: f64) -> f64 {
    let sum: f64 = ensemble.iter().map(|p| r.eval(p.x, &p.v)).sum();
    mass_weight * sum / ensemble.len() as f64
}

/// Adjoint final condition psi(x, v) = -dJ/df(T, x, v).
#[derive(Debug, Clone)]
pub enum Psi {
    /// J1: `|Omega|^-1 (d(x) - rho_T(cell of x))`, velocity-independent.
    MatchData { inv_omega: f64, measurement: Measurement, rho_t: CellField },
    /// J2: `-r(x, v)`.
    Control { control: ControlWeight },
    /// Identically zero (testing hook).
    Zero,
}

impl Psi {
    #[inline]
    pub fn eval(&self, x: Position, v: &Velocity) -> f64 {
        match self {
            Psi::MatchData { inv_omega, measurement, rho_t } => {
                let rho = rho_t.values[rho_t.grid.cell_index(x)];
                inv_omega * (measurement.eval(x) - rho)
            }
            Psi::Control { control } => -control.eval(x, v),
            Psi::Zero => 0.0,
        }
    }
}

/// Build the adjoint final condition for an objective.
///
/// J1 needs the estimated final spatial density `rho_t`; passing `None` for
/// a J1 objective is an error. J2 ignores `rho_t`.
pub fn adjoint_final_condition(
    objective: &Objective,
    omega: &VelocityDomain,
    rho_t: Option<&CellField>,
) -> Result<Psi> {
    match objective {
        Objective::J1 { measurement } => {
            let rho_t = rho_t.ok_or_else(|| {
                Error::config("J1 adjoint final condition requires a density estimate")
            })?;
            Ok(Psi::MatchData {
                inv_omega: 1.0 / omega.measure(),
                measurement: measurement.clone(),
                rho_t: rho_t.clone(),
            })
        }
        Objective::J2 { control } => Ok(Psi::Control { control: control.clone() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PhaseParticle;
    use crate::rng::MasterSeed;

    fn domain_1d() -> SpatialDomain {
        SpatialDomain::new_1d(-2.0, 2.0).unwrap()
    }

    fn measurement_1d() -> Measurement {
        Measurement::gauss(&domain_1d(), (5.0f64 / std::f64::consts::PI).sqrt(), [5.0, 0.0], [0.6, 0.0])
            .unwrap()
    }

    #[test]
    fn builtin_measurements_have_unit_mass() {
        measurement_1d();
        let domain2 = SpatialDomain::new_2d([-1.0, 1.0], [-1.0, 1.0]).unwrap();
        Measurement::gauss(
            &domain2,
            5.0 / std::f64::consts::PI,
            [5.0, 5.0],
            [0.3, -0.3],
        )
        .unwrap();
    }

    #[test]
    fn j1_zero_on_match_and_constant_offset() {
        let grid = GridSpec::new(domain_1d(), &[8]).unwrap();
        let d = measurement_1d();
        let matched: Vec<f64> = (0..8).map(|i| d.eval(grid.center(i))).collect();
        let rho = CellField::new(grid, matched.clone(), 1.0).unwrap();
        assert_eq!(eval_j1(&rho, &d).unwrap(), 0.0);

        let offset: Vec<f64> = matched.iter().map(|v| v + 0.1).collect();
        let rho = CellField::new(grid, offset, 1.0).unwrap();
        let j = eval_j1(&rho, &d).unwrap();
        assert!((j - 0.02).abs() < 1e-14, "j = {j}");
    }

    #[test]
    fn j1_against_fine_quadrature_oracle() {
        // rho_T = 0 so J1 = 1/2 * integral d^2 over the box; oracle is a
        // 10^4-point midpoint rule.
        let domain = domain_1d();
        let d = measurement_1d();
        let n = 10_000;
        let [a, b] = domain.bounds(0);
        let h = (b - a) / n as f64;
        let oracle: f64 = 0.5
            * h
            * (0..n)
                .map(|i| {
                    let x = a + (i as f64 + 0.5) * h;
                    d.eval([x, 0.0]).powi(2)
                })
                .sum::<f64>();

        // Evaluate J1 on a fine evaluation grid so the midpoint sums agree.
        let grid = GridSpec::new(domain, &[n]).unwrap();
        let rho = CellField::zeros(grid);
        let j = eval_j1(&rho, &d).unwrap();
        assert!((j - oracle).abs() < 1e-12, "j = {j}, oracle = {oracle}");
    }

    #[test]
    fn j2_mc_normalization_is_exact() {
        let particles: Vec<PhaseParticle> = (0..100)
            .map(|i| PhaseParticle {
                x: [i as f64 * 0.01, 0.0],
                v: Velocity::interval(0.5),
            })
            .collect();
        let r_one = ControlWeight::new(SpeedWeight::Const(1.0), IndicatorFn::One, 1).unwrap();
        assert_eq!(eval_j2_mc(&particles, &r_one, 1.0), 1.0);
        assert_eq!(eval_j2_mc(&particles, &r_one, 2.0), 2.0);
    }

    #[test]
    fn j2_mc_second_moment() {
        // r = v^2, v-uniform ensemble: E = 1/3, Var(v^2) = 4/45.
        let mut stream = MasterSeed(5).stream(0);
        let n = 1_000_000;
        let particles: Vec<PhaseParticle> = (0..n)
            .map(|_| PhaseParticle {
                x: [0.0, 0.0],
                v: VelocityDomain::Interval1D.sample(&mut stream),
            })
            .collect();
        let r = ControlWeight::new(SpeedWeight::SquaredSpeed, IndicatorFn::One, 1).unwrap();
        let mw = 2.0;
        let j = eval_j2_mc(&particles, &r, mw);
        let tol = 3.0 * mw * (4.0f64 / 45.0).sqrt() / 1e3;
        assert!((j - mw / 3.0).abs() < tol, "j = {j}");
    }

    #[test]
    fn psi_variants() {
        let omega = VelocityDomain::Interval1D;
        let grid = GridSpec::new(domain_1d(), &[4]).unwrap();

        // J1 with matched data is identically zero.
        let rho = CellField::new(grid, vec![0.1, 0.2, 0.3, 0.4], 1.0).unwrap();
        let objective = Objective::J1 { measurement: Measurement::grid(rho.clone()) };
        let psi = adjoint_final_condition(&objective, &omega, Some(&rho)).unwrap();
        for i in 0..4 {
            let x = grid.center(i);
            assert_eq!(psi.eval(x, &Velocity::interval(0.3)), 0.0);
        }

        // J1 formula plug-in: |Omega| = 2, d = 0.5, rho = 0.3 -> 0.1.
        let rho = CellField::new(grid, vec![0.3; 4], 1.0).unwrap();
        let d = CellField::new(grid, vec![0.5; 4], 1.0).unwrap();
        let objective = Objective::J1 { measurement: Measurement::grid(d) };
        let psi = adjoint_final_condition(&objective, &omega, Some(&rho)).unwrap();
        let value = psi.eval(grid.center(2), &Velocity::interval(-0.7));
        assert!((value - 0.1).abs() < 1e-15);

        // psi for J1 is v-independent, bit-exactly.
        assert_eq!(
            psi.eval(grid.center(1), &Velocity::interval(-1.0)).to_bits(),
            psi.eval(grid.center(1), &Velocity::interval(0.9)).to_bits()
        );

        // J2 with constant r: psi = -c everywhere.
        let r = ControlWeight::new(SpeedWeight::Const(0.7), IndicatorFn::One, 1).unwrap();
        let objective = Objective::J2 { control: r };
        let psi = adjoint_final_condition(&objective, &omega, None).unwrap();
        assert_eq!(psi.eval([0.3, 0.0], &Velocity::interval(0.2)), -0.7);

        // J1 without a density estimate is a configuration error.
        let objective = Objective::J1 { measurement: measurement_1d() };
        assert!(adjoint_final_condition(&objective, &omega, None).is_err());
    }

    #[test]
    fn indicator_bump_range() {
        let bump = IndicatorFn::Bump {
            center: [0.0, 0.0],
            half_width: [0.5, 0.5],
            sharpness: 20.0,
        };
        for i in -20..=20 {
            let x = [i as f64 * 0.1, 0.0];
            let v = bump.eval(x, 1);
            assert!((0.0..=1.0).contains(&v));
        }
        // Deep inside ~1, far outside ~0.
        assert!(bump.eval([0.0, 0.0], 1) > 0.99);
        assert!(bump.eval([1.5, 0.0], 1) < 1e-8);
    }

    #[test]
    fn initial_mass_matches_paper_presets() {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let f1 = InitialDistribution::Gauss1D { amplitude: 2.0 * inv_sqrt_pi, decay: 4.0 };
        assert!((f1.mass(&VelocityDomain::Interval1D) - 2.0).abs() < 1e-12);

        let f2 = InitialDistribution::Gauss2D {
            amplitude: 4.0 / std::f64::consts::PI,
            decay: 4.0,
        };
        assert!((f2.mass(&VelocityDomain::UnitCircle2D) - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn initial_sampling_moments() {
        let domain = domain_1d();
        let f_in = InitialDistribution::Gauss1D { amplitude: 2.0 / std::f64::consts::PI.sqrt(), decay: 4.0 };
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let seed = MasterSeed(11);
        for i in 0..n {
            let mut stream = seed.stream(i);
            let x = f_in.sample_position(&mut stream, &domain)[0];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // Gaussian with variance 1/8.
        assert!(mean.abs() < 3.0 * 0.125f64.sqrt() / 1e3, "mean {mean}");
        assert!((var - 0.125).abs() < 0.002, "var {var}");
    }

    #[test]
    fn initial_sampling_moments_2d() {
        let domain = SpatialDomain::new_2d([-1.0, 1.0], [-1.0, 1.0]).unwrap();
        let f_in = InitialDistribution::Gauss2D { amplitude: 4.0 / std::f64::consts::PI, decay: 4.0 };
        let n = 1_000_000;
        let mut sums = [0.0f64; 2];
        let seed = MasterSeed(12);
        for i in 0..n {
            let mut stream = seed.stream(i);
            let x = f_in.sample_position(&mut stream, &domain);
            sums[0] += x[0];
            sums[1] += x[1];
        }
        let tol = 3.0 * 0.125f64.sqrt() / 1e3;
        assert!((sums[0] / n as f64).abs() < tol);
        assert!((sums[1] / n as f64).abs() < tol);
    }
}
