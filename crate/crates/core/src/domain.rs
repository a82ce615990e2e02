//! Geometry, fields and phase-space primitives shared by all solvers.
//!
//! Positions are stored as `[f64; 2]` regardless of dimension; in 1D the
//! second component is fixed to zero and the second axis is a unit-width
//! placeholder, so cell volumes and indexing share one code path.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::ParticleStream;

pub type Position = [f64; 2];

/// Periodic spatial box, 1D interval or 2D rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialDomain {
    dim: usize,
    bounds: [[f64; 2]; 2],
}

impl SpatialDomain {
    pub fn new_1d(a: f64, b: f64) -> Result<Self> {
        Self::new(1, [[a, b], [0.0, 1.0]])
    }

    pub fn new_2d(axis0: [f64; 2], axis1: [f64; 2]) -> Result<Self> {
        Self::new(2, [axis0, axis1])
    }

    fn new(dim: usize, bounds: [[f64; 2]; 2]) -> Result<Self> {
        for axis in 0..dim {
            let [a, b] = bounds[axis];
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::config(format!(
                    "domain axis {axis}: bounds [{a}, {b}] must be finite with b > a"
                )));
            }
        }
        Ok(SpatialDomain { dim, bounds })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn bounds(&self, axis: usize) -> [f64; 2] {
        self.bounds[axis]
    }

    #[inline]
    pub fn length(&self, axis: usize) -> f64 {
        self.bounds[axis][1] - self.bounds[axis][0]
    }

    /// Volume of the box (length in 1D, area in 2D).
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|axis| self.length(axis)).product()
    }

    /// Map a position into `[a, b)` per axis.
    ///
    /// Total and idempotent: interior points are returned unchanged
    /// bit-for-bit, so `wrap(wrap(x)) == wrap(x)` exactly.
    #[inline]
    pub fn wrap(&self, mut x: Position) -> Position {
        for axis in 0..self.dim {
            let [a, b] = self.bounds[axis];
            let xi = x[axis];
            if xi >= a && xi < b {
                continue;
            }
            let len = b - a;
            let mut w = a + (xi - a).rem_euclid(len);
            // rem_euclid can round up to the period itself.
            if w >= b {
                w = a;
            }
            x[axis] = w;
        }
        x
    }
}

/// Map `x` into the periodic box. Free-function form of [`SpatialDomain::wrap`].
#[inline]
pub fn wrap_periodic(x: Position, domain: &SpatialDomain) -> Position {
    domain.wrap(x)
}

/// Velocity space: the interval `[-1, 1]` or the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityDomain {
    Interval1D,
    UnitCircle2D,
}

impl VelocityDomain {
    /// Lebesgue measure |Omega| of the velocity domain.
    #[inline]
    pub fn measure(&self) -> f64 {
        match self {
            VelocityDomain::Interval1D => 2.0,
            VelocityDomain::UnitCircle2D => std::f64::consts::TAU,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        match self {
            VelocityDomain::Interval1D => 1,
            VelocityDomain::UnitCircle2D => 2,
        }
    }

    /// Draw a velocity uniformly on the domain.
    ///
    /// 1D: uniform speed on `[-1, 1]`. 2D: uniform angle on `[-pi, pi)`
    /// mapped to `(cos, sin)`, unit norm up to rounding.
    #[inline]
    pub fn sample(&self, stream: &mut ParticleStream) -> Velocity {
        let u = stream.uniform01();
        match self {
            VelocityDomain::Interval1D => Velocity::interval(2.0 * u - 1.0),
            VelocityDomain::UnitCircle2D => {
                Velocity::circle(std::f64::consts::PI * (2.0 * u - 1.0))
            }
        }
    }
}

/// Draw a velocity uniformly on `omega`. Free-function form of
/// [`VelocityDomain::sample`].
#[inline]
pub fn uniform_velocity_sample(stream: &mut ParticleStream, omega: &VelocityDomain) -> Velocity {
    omega.sample(stream)
}

/// Velocity of one particle.
///
/// `coord` is the scalar coordinate used for quadrature in velocity space:
/// the speed `v` itself in 1D, the angle `theta` in 2D. `vec` is the motion
/// vector used for transport (`[v, 0]` in 1D, `[cos theta, sin theta]` in 2D,
/// cached so the unit norm is exact up to rounding).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub coord: f64,
    pub vec: [f64; 2],
}

impl Velocity {
    #[inline]
    pub fn interval(v: f64) -> Self {
        Velocity { coord: v, vec: [v, 0.0] }
    }

    #[inline]
    pub fn circle(theta: f64) -> Self {
        Velocity { coord: theta, vec: [theta.cos(), theta.sin()] }
    }
}

/// One photon sample in phase space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseParticle {
    pub x: Position,
    pub v: Velocity,
}

/// Uniform cell grid tiling a spatial domain, left-closed right-open cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    domain: SpatialDomain,
    n: [usize; 2],
}

impl GridSpec {
    /// `n_cells` must have one entry per domain axis.
    pub fn new(domain: SpatialDomain, n_cells: &[usize]) -> Result<Self> {
        if n_cells.len() != domain.dim() {
            return Err(Error::config(format!(
                "grid needs {} cell counts, got {}",
                domain.dim(),
                n_cells.len()
            )));
        }
        let mut n = [1usize; 2];
        for (axis, &count) in n_cells.iter().enumerate() {
            if count == 0 {
                return Err(Error::config(format!("grid axis {axis}: zero cells")));
            }
            n[axis] = count;
        }
        Ok(GridSpec { domain, n })
    }

    #[inline]
    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    #[inline]
    pub fn cells_along(&self, axis: usize) -> usize {
        self.n[axis]
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    #[inline]
    pub fn width(&self, axis: usize) -> f64 {
        self.domain.length(axis) / self.n[axis] as f64
    }

    /// Cell volume `|Q|` (width in 1D, area in 2D).
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|axis| self.width(axis)).product()
    }

    /// Flattened (row-major) index of the cell containing `x`.
    ///
    /// `x` must already be wrapped into the domain; the left domain edge
    /// falls in cell 0 and interior boundaries belong to the right cell.
    #[inline]
    pub fn cell_index(&self, x: Position) -> usize {
        let mut idx = 0usize;
        for axis in 0..self.dim() {
            let [a, _] = self.domain.bounds(axis);
            let i = ((x[axis] - a) / self.width(axis)) as usize;
            // Right-edge rounding guard.
            let i = i.min(self.n[axis] - 1);
            idx = idx * self.n[axis] + i;
        }
        idx
    }

    /// Per-axis cell coordinates of a flattened index.
    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => [idx / self.n[1], idx % self.n[1]],
        }
    }

    /// Center of the cell with flattened index `idx`.
    pub fn center(&self, idx: usize) -> Position {
        let ij = self.unflatten(idx);
        let mut c = [0.0; 2];
        for axis in 0..self.dim() {
            let [a, _] = self.domain.bounds(axis);
            c[axis] = a + (ij[axis] as f64 + 0.5) * self.width(axis);
        }
        c
    }

    /// True if `fine` refines this grid by an integer factor per axis.
    pub fn divides(&self, fine: &GridSpec) -> bool {
        self.domain == fine.domain
            && (0..self.dim()).all(|axis| fine.n[axis] % self.n[axis] == 0)
    }
}

/// Flattened cell index of a wrapped position. Free-function form of
/// [`GridSpec::cell_index`].
#[inline]
pub fn cell_index(x: Position, grid: &GridSpec) -> usize {
    grid.cell_index(x)
}

/// Scattering coefficient field sigma(x) >= 0, units 1/time.
#[derive(Clone)]
pub enum SigmaField {
    Constant(f64),
    PiecewiseConstant { grid: GridSpec, values: Vec<f64> },
    Analytic(Arc<dyn Fn(Position) -> f64 + Send + Sync>),
}

impl SigmaField {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::config(format!(
                "sigma.value = {value}: must be finite and >= 0"
            )));
        }
        Ok(SigmaField::Constant(value))
    }

    pub fn piecewise(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::config(format!(
                "sigma.values has {} entries, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::config(format!(
                "sigma.values contains {bad}: must be finite and >= 0"
            )));
        }
        Ok(SigmaField::PiecewiseConstant { grid, values })
    }

    /// Caller guarantees `f >= 0` on the domain; analytic fields are not
    /// validated pointwise.
    pub fn analytic(f: impl Fn(Position) -> f64 + Send + Sync + 'static) -> Self {
        SigmaField::Analytic(Arc::new(f))
    }

    /// Evaluate at a wrapped position. Piecewise fields return the value of
    /// the containing cell.
    #[inline]
    pub fn eval(&self, x: Position) -> f64 {
        match self {
            SigmaField::Constant(c) => *c,
            SigmaField::PiecewiseConstant { grid, values } => values[grid.cell_index(x)],
            SigmaField::Analytic(f) => f(x),
        }
    }
}

/// Evaluate `field` at a wrapped position. Free-function form of
/// [`SigmaField::eval`].
#[inline]
pub fn sigma_eval(field: &SigmaField, x: Position) -> f64 {
    field.eval(x)
}

impl fmt::Debug for SigmaField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaField::Constant(c) => write!(f, "SigmaField::Constant({c})"),
            SigmaField::PiecewiseConstant { grid, .. } => {
                write!(f, "SigmaField::PiecewiseConstant({} cells)", grid.n_cells())
            }
            SigmaField::Analytic(_) => write!(f, "SigmaField::Analytic(..)"),
        }
    }
}

/// Cell-centered scalar field: density estimates and gradients.
///
/// `values` are fully scaled (the mass weight has already been applied);
/// `mass_weight` records the total initial mass rho_tot that was folded in,
/// 1.0 for fields that are physical as constructed (e.g. finite-volume
/// output).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub mass_weight: f64,
}

impl CellField {
    pub fn new(grid: GridSpec, values: Vec<f64>, mass_weight: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalGuard("cell field contains non-finite value".into()));
        }
        Ok(CellField { grid, values, mass_weight })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n_cells();
        CellField { grid, values: vec![0.0; n], mass_weight: 1.0 }
    }

    /// Plain Euclidean 2-norm of the difference over cells.
    ///
    /// With `scaled` the sum is weighted by the cell volume (an L2(D) norm).
    pub fn l2_diff(&self, other: &CellField, scaled: bool) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("l2_diff between different grids".into()));
        }
        let w = if scaled { self.grid.cell_volume() } else { 1.0 };
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b) * w)
            .sum();
        Ok(sum.sqrt())
    }

    /// Average this field's cells down onto a coarser grid that divides it.
    ///
    /// Gradient fields are cell averages of the continuous density, so the
    /// coarse value is the mean of the fine values inside each coarse cell.
    pub fn block_average_to(&self, coarse: &GridSpec) -> Result<CellField> {
        if !coarse.divides(&self.grid) {
            return Err(Error::GridMismatch(
                "coarse grid does not divide the fine grid".into(),
            ));
        }
        let mut sums = vec![0.0; coarse.n_cells()];
        let mut counts = vec![0u64; coarse.n_cells()];
        for idx in 0..self.grid.n_cells() {
            let c = coarse.cell_index(self.grid.center(idx));
            sums[c] += self.values[idx];
            counts[c] += 1;
        }
        let values = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        CellField::new(*coarse, values, self.mass_weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::MasterSeed;
    use proptest::prelude::*;

    fn domain_1d() -> SpatialDomain {
        SpatialDomain::new_1d(-2.0, 2.0).unwrap()
    }

    #[test]
    fn wrap_interior_point_unchanged() {
        let d = domain_1d();
        assert_eq!(d.wrap([0.5, 0.0]), [0.5, 0.0]);
    }

    #[test]
    fn wrap_one_period() {
        let d = domain_1d();
        let w = d.wrap([2.005, 0.0]);
        assert!((w[0] - (-1.995)).abs() < 1e-12, "{}", w[0]);
    }

    #[test]
    fn wrap_multi_period_hits_left_edge_exactly() {
        let d = domain_1d();
        assert_eq!(d.wrap([-6.0, 0.0])[0], -2.0);
    }

    #[test]
    fn cell_index_convention() {
        let grid = GridSpec::new(domain_1d(), &[4]).unwrap();
        assert_eq!(grid.cell_index([-2.0, 0.0]), 0);
        // Boundary belongs to the right cell.
        assert_eq!(grid.cell_index([0.0, 0.0]), 2);
        assert_eq!(grid.cell_index([1.999, 0.0]), 3);
    }

    #[test]
    fn cells_tile_domain() {
        for (domain, n) in [
            (domain_1d(), vec![40]),
            (SpatialDomain::new_2d([-1.0, 1.0], [-1.0, 1.0]).unwrap(), vec![13, 7]),
        ] {
            let grid = GridSpec::new(domain, &n).unwrap();
            let total = grid.cell_volume() * grid.n_cells() as f64;
            assert!((total - domain.volume()).abs() <= 1e-12 * domain.volume());
        }
    }

    #[test]
    fn sigma_constant_and_piecewise() {
        let sigma = SigmaField::constant(2.0).unwrap();
        assert_eq!(sigma.eval([0.3, 0.0]), 2.0);
        assert_eq!(SigmaField::constant(0.0).unwrap().eval([1.0, 0.0]), 0.0);

        let grid = GridSpec::new(domain_1d(), &[2]).unwrap();
        let pw = SigmaField::piecewise(grid, vec![1.0, 3.0]).unwrap();
        assert_eq!(pw.eval([1.0, 0.0]), 3.0);

        assert!(SigmaField::constant(-1.0).is_err());
        assert!(SigmaField::piecewise(grid, vec![1.0, -0.5]).is_err());
    }

    #[test]
    fn velocity_sample_moments_1d() {
        let mut s = MasterSeed(7).stream(0);
        let omega = VelocityDomain::Interval1D;
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let v = omega.sample(&mut s);
            sum += v.coord;
            sum_sq += v.coord * v.coord;
        }
        let mean = sum / n as f64;
        let second = sum_sq / n as f64;
        // Var(v) = 1/3, so 3*sigma/sqrt(n) = 3*(1/sqrt 3)/1e3.
        assert!(mean.abs() < 3.0 * (1.0 / 3.0f64.sqrt()) / 1e3, "mean {mean}");
        // E[v^2] = 1/3.
        assert!((second - 1.0 / 3.0).abs() < 0.005, "second moment {second}");
    }

    #[test]
    fn velocity_sample_unit_norm_2d() {
        let mut s = MasterSeed(7).stream(1);
        let omega = VelocityDomain::UnitCircle2D;
        for _ in 0..10_000 {
            let v = omega.sample(&mut s);
            let norm_sq = v.vec[0] * v.vec[0] + v.vec[1] * v.vec[1];
            assert!((norm_sq - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_sample_ks_uniformity() {
        // KS statistic of 1e5 1D samples under the 1% critical value for at
        // least 95% of seeds (asymptotic critical value 1.6276/sqrt(n)).
        let n = 100_000usize;
        let critical = 1.6276 / (n as f64).sqrt();
        let mut passing = 0;
        for seed in 0..20u64 {
            let mut s = MasterSeed(seed).stream(0);
            let mut xs: Vec<f64> = (0..n)
                .map(|_| VelocityDomain::Interval1D.sample(&mut s).coord)
                .collect();
            xs.sort_unstable_by(f64::total_cmp);
            let mut ks = 0.0f64;
            for (i, &x) in xs.iter().enumerate() {
                let cdf = (x + 1.0) / 2.0;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
            }
            if ks < critical {
                passing += 1;
            }
        }
        assert!(passing >= 19, "only {passing}/20 seeds passed KS");
    }

    #[test]
    fn block_average_identity_and_mean() {
        let fine = GridSpec::new(domain_1d(), &[8]).unwrap();
        let coarse = GridSpec::new(domain_1d(), &[4]).unwrap();
        let field = CellField::new(
            fine,
            vec![1.0, 3.0, 2.0, 2.0, 0.0, 4.0, -1.0, 1.0],
            1.0,
        )
        .unwrap();
        let avg = field.block_average_to(&coarse).unwrap();
        assert_eq!(avg.values, vec![2.0, 2.0, 2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(x in -100.0f64..100.0, y in -100.0f64..100.0) {
            let d = SpatialDomain::new_2d([-2.0, 2.0], [-1.5, 0.5]).unwrap();
            let w = d.wrap([x, y]);
            prop_assert_eq!(d.wrap(w), w);
            for axis in 0..2 {
                let [a, b] = d.bounds(axis);
                prop_assert!(w[axis] >= a && w[axis] < b);
            }
        }

        #[test]
        fn cell_index_total_after_wrap(x in -100.0f64..100.0, n in 1usize..64) {
            let d = SpatialDomain::new_1d(-2.0, 2.0).unwrap();
            let grid = GridSpec::new(d, &[n]).unwrap();
            let idx = grid.cell_index(d.wrap([x, 0.0]));
            prop_assert!(idx < grid.n_cells());
        }
    }
}
