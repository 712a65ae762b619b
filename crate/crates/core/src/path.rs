//! Time grids and discretized trajectories in `H = L^2(0, L)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{BasisSpec, SpectralField};

/// Uniform grid on `[0, T]` with `n_steps` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    n_steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(horizon: T, n_steps: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::invalid(format!("time horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Grid on `[0, T]` with step at most `dt_max`.
    pub fn with_max_step(horizon: T, dt_max: T) -> Result<Self> {
        if !(dt_max > T::zero()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt_max}")));
        }
        let n = (horizon / dt_max).ceil().to_usize().unwrap_or(0).max(1);
        Self::new(horizon, n)
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.n_steps)
    }

    pub fn time(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dt()
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self { horizon: self.horizon, n_steps: self.n_steps * factor }
    }
}

/// Trajectory sampled at every node of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathH<T> {
    grid: TimeGrid<T>,
    fields: Vec<SpectralField<T>>,
}

impl<T: Scalar> PathH<T> {
    pub fn new(grid: TimeGrid<T>, fields: Vec<SpectralField<T>>) -> Result<Self> {
        if fields.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "path has {} nodes, grid needs {}",
                fields.len(),
                grid.n_nodes()
            )));
        }
        let basis = *fields[0].basis();
        if fields.iter().any(|f| *f.basis() != basis) {
            return Err(Error::GridMismatch("path nodes use different bases".into()));
        }
        Ok(Self { grid, fields })
    }

    /// Samples `phi(t)` at every node.
    pub fn from_fn(grid: TimeGrid<T>, phi: impl Fn(T) -> SpectralField<T>) -> Result<Self> {
        Self::new(grid, (0..grid.n_nodes()).map(|k| phi(grid.time(k))).collect())
    }

    pub fn constant(grid: TimeGrid<T>, u: SpectralField<T>) -> Self {
        Self { grid, fields: vec![u; grid.n_nodes()] }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn basis(&self) -> &BasisSpec<T> {
        self.fields[0].basis()
    }

    pub fn fields(&self) -> &[SpectralField<T>] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [SpectralField<T>] {
        &mut self.fields
    }

    pub fn at(&self, k: usize) -> &SpectralField<T> {
        &self.fields[k]
    }

    pub fn last(&self) -> &SpectralField<T> {
        self.fields.last().expect("paths are nonempty")
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("paths live on different time grids".into()));
        }
        if self.basis() != other.basis() {
            return Err(Error::GridMismatch("paths use different spectral bases".into()));
        }
        Ok(())
    }

    /// `rho_{0T}(self, other) = max_t ||self(t) - other(t)||_0` over the grid nodes.
    pub fn rho(&self, other: &Self) -> Result<T> {
        self.check_compatible(other)?;
        Ok(self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.distance(b))
            .fold(T::zero(), T::max))
    }

    pub fn sup_norm(&self) -> T {
        self.fields.iter().map(|f| f.norm()).fold(T::zero(), T::max)
    }

    /// Node-wise `a * self + b * other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.check_compatible(other)?;
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(x, y)| {
                let mut out = x.scaled(a);
                out.axpy(b, y);
                out
            })
            .collect();
        Ok(Self { grid: self.grid, fields })
    }

    /// Time series of the `e_i` coefficient (1-based `i`).
    pub fn mode_series(&self, i: usize) -> Vec<T> {
        self.fields.iter().map(|f| f.coeff(i)).collect()
    }
}

/// Control `h in L^2(0, T; H)` sampled at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath<T> {
    grid: TimeGrid<T>,
    controls: Vec<SpectralField<T>>,
}

impl<T: Scalar> ControlPath<T> {
    pub fn new(grid: TimeGrid<T>, controls: Vec<SpectralField<T>>) -> Result<Self> {
        if controls.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "control has {} nodes, grid needs {}",
                controls.len(),
                grid.n_nodes()
            )));
        }
        Ok(Self { grid, controls })
    }

    pub fn zeros(grid: TimeGrid<T>, basis: BasisSpec<T>) -> Self {
        Self { grid, controls: vec![SpectralField::zeros(basis); grid.n_nodes()] }
    }

    pub fn from_fn(grid: TimeGrid<T>, h: impl Fn(T) -> SpectralField<T>) -> Self {
        Self { grid, controls: (0..grid.n_nodes()).map(|k| h(grid.time(k))).collect() }
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn controls(&self) -> &[SpectralField<T>] {
        &self.controls
    }

    pub fn at(&self, k: usize) -> &SpectralField<T> {
        &self.controls[k]
    }

    /// `1/2 int_0^T ||h||_0^2 dt` by the trapezoid rule.
    pub fn energy(&self) -> T {
        trapezoid(&self.controls.iter().map(|h| h.norm_sq()).collect::<Vec<_>>(), self.grid.dt())
            / T::lit(2.0)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { grid: self.grid, controls: self.controls.iter().map(|h| h.scaled(c)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            grid: self.grid,
            controls: self.controls.iter().zip(&other.controls).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Sublevel set `K_T(r) = { phi : I(phi) <= r }` of the action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSet<T> {
    pub r: T,
}

impl<T: Scalar> LevelSet<T> {
    pub fn new(r: T) -> Result<Self> {
        if !(r >= T::zero()) {
            return Err(Error::invalid(format!("level must be nonnegative, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn contains_action(&self, action: T) -> bool {
        action <= self.r
    }
}

pub(crate) fn trapezoid<T: Scalar>(values: &[T], dt: T) -> T {
    let n = values.len();
    if n < 2 {
        return T::zero();
    }
    let inner: T = values[1..n - 1].iter().copied().sum();
    dt * (inner + (values[0] + values[n - 1]) / T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0_f64, 8).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.n_nodes(), 9);
        assert!(TimeGrid::new(0.0_f64, 3).is_err());
        assert!(TimeGrid::new(1.0_f64, 0).is_err());
        assert_eq!(TimeGrid::with_max_step(1.0_f64, 0.3).unwrap().n_steps(), 4);
    }

    #[test]
    fn rho_is_max_over_nodes() {
        let b = BasisSpec::unit_pi(2);
        let g = TimeGrid::new(1.0_f64, 2).unwrap();
        let p = PathH::from_fn(g, |t| SpectralField::from_coeffs(b, vec![t, 0.0]).unwrap()).unwrap();
        let z = PathH::constant(g, SpectralField::zeros(b));
        assert_eq!(p.rho(&z).unwrap(), 1.0);
        let other = PathH::constant(TimeGrid::new(1.0, 3).unwrap(), SpectralField::zeros(b));
        assert!(matches!(p.rho(&other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn control_energy_trapezoid() {
        let b = BasisSpec::unit_pi(1);
        let g = TimeGrid::new(1.0_f64, 1000).unwrap();
        let h = ControlPath::from_fn(g, |t| SpectralField::from_coeffs(b, vec![t]).unwrap());
        assert!((h.energy() - 1.0 / 6.0).abs() < 1e-6);
        assert!((h.scaled(3.0).energy() - 9.0 * h.energy()).abs() < 1e-12);
        assert!(LevelSet::new(0.2).unwrap().contains_action(h.energy()));
    }
}
