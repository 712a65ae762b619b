//! Exponential time integration of the coupled slow-fast system
//!
//! ```text
//! du = [A u + f(u, v)] dt
//! dv = (1/eps) [A v + g(u, v)] dt + (sigma / sqrt(eps)) dW
//! ```
//!
//! with `W` a Q-Wiener process, and sampling of the frozen-slow fast dynamics.

mod hypotheses;
mod reaction;

use std::sync::Arc;

pub use hypotheses::{check_hypotheses, HypothesisConstants, HypothesisReport};
pub use reaction::{ExampleReaction, Reaction};

use crate::error::{Error, Result};
use crate::path::{PathH, TimeGrid};
use crate::scalar::{phi1, Scalar};
use crate::spectral::{apply_resolvent, BasisSpec, Collocation, SpectralField};
use crate::stats;
use crate::stochastic::{QSpec, RngStream};

/// Full parameterization of a slow-fast system.
#[derive(Clone)]
pub struct SystemSpec<T: Scalar> {
    pub epsilon: T,
    pub sigma: T,
    pub lambda: T,
    pub q: QSpec<T>,
    pub basis: BasisSpec<T>,
    pub hypotheses: Option<HypothesisConstants<T>>,
    reaction: Arc<dyn Reaction<T>>,
    collocation: Arc<Collocation<T>>,
}

impl<T: Scalar> std::fmt::Debug for SystemSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("epsilon", &self.epsilon)
            .field("sigma", &self.sigma)
            .field("lambda", &self.lambda)
            .field("q", &self.q)
            .field("basis", &self.basis)
            .field("reaction", &self.reaction)
            .finish()
    }
}

impl<T: Scalar> SystemSpec<T> {
    /// The `lambda sin u - v` / `u - v` system on `(0, pi)` with `q_i = i^{-2}`.
    pub fn example(epsilon: T, sigma: T, lambda: T, n_modes: usize) -> Result<Self> {
        Self::new(epsilon, sigma, lambda, QSpec::decaying(n_modes), BasisSpec::unit_pi(n_modes))
    }

    pub fn new(epsilon: T, sigma: T, lambda: T, q: QSpec<T>, basis: BasisSpec<T>) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !sigma.is_finite() || !lambda.is_finite() {
            return Err(Error::invalid("sigma and lambda must be finite"));
        }
        if q.len() != basis.n_modes() {
            return Err(Error::invalid(format!(
                "Q spectrum has {} entries for {} modes",
                q.len(),
                basis.n_modes()
            )));
        }
        Ok(Self {
            epsilon,
            sigma,
            lambda,
            q,
            basis,
            hypotheses: None,
            reaction: Arc::new(ExampleReaction { lambda }),
            collocation: Collocation::new(basis),
        })
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn with_sigma(&self, sigma: T) -> Self {
        Self { sigma, ..self.clone() }
    }

    pub fn with_q(&self, q: QSpec<T>) -> Result<Self> {
        Self::new(self.epsilon, self.sigma, self.lambda, q, self.basis).map(|s| Self {
            reaction: self.reaction.clone(),
            hypotheses: self.hypotheses,
            ..s
        })
    }

    /// Swaps in a different reaction pair; closed-form averaged quantities are
    /// then unavailable unless it reports [`Reaction::example_lambda`].
    pub fn with_reaction(&self, reaction: Arc<dyn Reaction<T>>) -> Self {
        Self { reaction, ..self.clone() }
    }

    pub fn with_hypotheses(&self, h: HypothesisConstants<T>) -> Self {
        Self { hypotheses: Some(h), ..self.clone() }
    }

    pub fn reaction(&self) -> &dyn Reaction<T> {
        self.reaction.as_ref()
    }

    pub fn collocation(&self) -> &Collocation<T> {
        &self.collocation
    }

    /// `lambda` of the closed-form example, or an error for other reactions.
    pub fn example_lambda(&self) -> Result<T> {
        self.reaction
            .example_lambda()
            .ok_or_else(|| Error::Unsupported("closed-form quantities need the example reaction".into()))
    }

    /// Fast linear decay rates `lambda_i + kappa`.
    pub fn fast_rates(&self) -> Vec<T> {
        let kappa = self.reaction.fast_damping();
        self.basis.eigenvalues().into_iter().map(|l| l + kappa).collect()
    }

    /// Default full-system step `eps / 20`.
    pub fn default_dt(&self) -> T {
        self.epsilon / T::lit(20.0)
    }
}

/// Slow and fast components at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub u: SpectralField<T>,
    pub v: SpectralField<T>,
    pub t: T,
}

impl<T: Scalar> State<T> {
    pub fn new(u: SpectralField<T>, v: SpectralField<T>) -> Result<Self> {
        if u.basis() != v.basis() {
            return Err(Error::invalid("u and v must share a basis"));
        }
        Ok(Self { u, v, t: T::zero() })
    }

    /// `v0 = (I - A)^{-1} u0`, the centre of the frozen-fast law of the example.
    pub fn slaved(u: SpectralField<T>) -> Self {
        let v = apply_resolvent(&u);
        Self { u, v, t: T::zero() }
    }
}

/// Precomputed per-mode exponential-integrator weights for a fixed `dt`.
#[derive(Clone, Debug)]
pub struct Stepper<T> {
    dt: T,
    slow_decay: Vec<T>,
    slow_weight: Vec<T>,
    fast_decay: Vec<T>,
    fast_weight: Vec<T>,
    noise_std: Vec<T>,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(spec: &SystemSpec<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let lam = spec.basis.eigenvalues();
        let mu = spec.fast_rates();
        let two = T::lit(2.0);
        let eps = spec.epsilon;
        let slow_decay = lam.iter().map(|&l| (-l * dt).exp()).collect();
        let slow_weight = lam.iter().map(|&l| dt * phi1(l * dt)).collect();
        let fast_decay = mu.iter().map(|&m| (-m * dt / eps).exp()).collect();
        let fast_weight = mu.iter().map(|&m| dt / eps * phi1(m * dt / eps)).collect();
        let noise_std = mu
            .iter()
            .zip(spec.q.values())
            .map(|(&m, &q)| {
                // sigma^2 q (1 - e^{-2 m dt / eps}) / (2 m)
                let var = spec.sigma * spec.sigma * q * (two * dt / eps) * phi1(two * m * dt / eps) / two;
                var.sqrt()
            })
            .collect();
        Ok(Self { dt, slow_decay, slow_weight, fast_decay, fast_weight, noise_std })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Per-mode fast noise standard deviation over one step.
    pub fn noise_std(&self) -> &[T] {
        &self.noise_std
    }

    /// Advances `state` in place; `xi` holds one standard normal per mode.
    pub fn advance_with(&self, spec: &SystemSpec<T>, state: &mut State<T>, xi: &[T]) -> Result<()> {
        let col = spec.collocation();
        let reaction = spec.reaction();
        let f = reaction.slow_field(col, &state.u, &state.v);
        let g = reaction.fast_remainder_field(col, &state.u, &state.v);
        for k in 0..spec.basis.n_modes() {
            let u = &mut state.u.coeffs_mut()[k];
            *u = self.slow_decay[k] * *u + self.slow_weight[k] * f.coeffs()[k];
            let v = &mut state.v.coeffs_mut()[k];
            *v = self.fast_decay[k] * *v + self.fast_weight[k] * g.coeffs()[k] + self.noise_std[k] * xi[k];
        }
        state.t += self.dt;
        if !state.u.is_finite() || !state.v.is_finite() {
            return Err(Error::blow_up(state.t.to_f64_lossy(), "non-finite slow or fast coefficients"));
        }
        Ok(())
    }

    pub fn advance(&self, spec: &SystemSpec<T>, state: &mut State<T>, rng: &mut RngStream) -> Result<()> {
        let xi: Vec<T> = (0..spec.basis.n_modes()).map(|_| rng.normal()).collect();
        self.advance_with(spec, state, &xi)
    }
}

/// One exponential-Euler step of both components.
pub fn step<T: Scalar>(state: &State<T>, spec: &SystemSpec<T>, dt: T, rng: &mut RngStream) -> Result<State<T>> {
    let mut next = state.clone();
    Stepper::new(spec, dt)?.advance(spec, &mut next, rng)?;
    Ok(next)
}

/// Runs the system over `grid`, calling `visit(k, state)` at every node.
pub fn simulate_with<T: Scalar>(
    initial: State<T>,
    spec: &SystemSpec<T>,
    grid: &TimeGrid<T>,
    rng: &mut RngStream,
    mut visit: impl FnMut(usize, &State<T>),
) -> Result<State<T>> {
    let stepper = Stepper::new(spec, grid.dt())?;
    let mut state = initial;
    visit(0, &state);
    for k in 1..=grid.n_steps() {
        stepper.advance(spec, &mut state, rng)?;
        visit(k, &state);
    }
    Ok(state)
}

/// Full trajectory of `(u, v)` at every grid node.
pub fn simulate_path<T: Scalar>(
    u0: &SpectralField<T>,
    v0: &SpectralField<T>,
    spec: &SystemSpec<T>,
    grid: &TimeGrid<T>,
    rng: &mut RngStream,
) -> Result<(PathH<T>, PathH<T>)> {
    let mut us = Vec::with_capacity(grid.n_nodes());
    let mut vs = Vec::with_capacity(grid.n_nodes());
    simulate_with(State::new(u0.clone(), v0.clone())?, spec, grid, rng, |_, s| {
        us.push(s.u.clone());
        vs.push(s.v.clone());
    })?;
    Ok((PathH::new(*grid, us)?, PathH::new(*grid, vs)?))
}

/// Sampling schedule for the frozen-slow fast dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenFastOptions<T> {
    pub burn_in: T,
    pub n_samples: usize,
    pub sample_interval: T,
    pub max_step: T,
}

impl<T: Scalar> FrozenFastOptions<T> {
    /// Burn-in of `14 eps / (lambda_1 + kappa)` and samples spaced five slowest
    /// correlation times apart, so consecutive samples are nearly independent.
    pub fn for_spec(spec: &SystemSpec<T>, n_samples: usize) -> Self {
        let rates = spec.fast_rates();
        let tau = spec.epsilon / rates[0];
        let max_step = if spec.reaction().fast_remainder_is_v_free() {
            T::lit(5.0) * tau
        } else {
            spec.epsilon / (T::lit(4.0) * rates[rates.len() - 1])
        };
        Self { burn_in: T::lit(14.0) * tau, n_samples, sample_interval: T::lit(5.0) * tau, max_step }
    }
}

/// Draws from the frozen-slow fast dynamics.
#[derive(Clone, Debug)]
pub struct FrozenFastSamples<T> {
    pub samples: Vec<SpectralField<T>>,
    /// Largest first-half vs second-half mean shift of the slowest mode, in SE units.
    pub drift_z: f64,
    /// Set when `drift_z` exceeds 3.
    pub insufficient_burn_in: bool,
}

impl<T: Scalar> FrozenFastSamples<T> {
    /// Per-mode `(mean, se)`.
    pub fn mode_mean(&self, i: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.coeff(i).to_f64_lossy()).collect();
        stats::mean_se(&xs)
    }

    /// Per-mode `(variance, se)`.
    pub fn mode_variance(&self, i: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.coeff(i).to_f64_lossy()).collect();
        stats::variance_with_se(&xs)
    }
}

/// Samples the stationary law of `v` with `u` frozen.
pub fn frozen_fast_stationary<T: Scalar>(
    u_frozen: &SpectralField<T>,
    spec: &SystemSpec<T>,
    opts: &FrozenFastOptions<T>,
    rng: &mut RngStream,
) -> Result<FrozenFastSamples<T>> {
    let rates = spec.fast_rates();
    let slowest = rates[0];
    if (-(slowest * opts.burn_in / spec.epsilon)).exp() >= T::lit(1e-6) {
        return Err(Error::invalid(format!(
            "burn-in {} too short for relaxation rate {}",
            opts.burn_in,
            slowest / spec.epsilon
        )));
    }
    if opts.n_samples < 2 {
        return Err(Error::invalid("need at least two frozen-fast samples"));
    }
    let frozen = FrozenFast::new(u_frozen.clone(), spec, opts.max_step);
    let mut v = SpectralField::zeros(spec.basis);
    frozen.advance(&mut v, opts.burn_in, rng)?;
    let mut samples = Vec::with_capacity(opts.n_samples);
    for _ in 0..opts.n_samples {
        frozen.advance(&mut v, opts.sample_interval, rng)?;
        samples.push(v.clone());
    }
    let half = opts.n_samples / 2;
    let first: Vec<f64> = samples[..half].iter().map(|s| s.coeff(1).to_f64_lossy()).collect();
    let second: Vec<f64> = samples[half..].iter().map(|s| s.coeff(1).to_f64_lossy()).collect();
    let (m1, s1) = stats::mean_se(&first);
    let (m2, s2) = stats::mean_se(&second);
    let drift_z = (m1 - m2).abs() / (s1 * s1 + s2 * s2).sqrt().max(f64::MIN_POSITIVE);
    Ok(FrozenFastSamples { samples, drift_z, insufficient_burn_in: drift_z > 3.0 })
}

/// Fast equation with a frozen slow field, advanced by exact-in-linear-part steps.
pub(crate) struct FrozenFast<'a, T: Scalar> {
    u: SpectralField<T>,
    spec: &'a SystemSpec<T>,
    max_step: T,
}

impl<'a, T: Scalar> FrozenFast<'a, T> {
    pub(crate) fn new(u: SpectralField<T>, spec: &'a SystemSpec<T>, max_step: T) -> Self {
        Self { u, spec, max_step }
    }

    /// Advances `v` by `duration`, splitting into steps no longer than `max_step`.
    pub(crate) fn advance(&self, v: &mut SpectralField<T>, duration: T, rng: &mut RngStream) -> Result<()> {
        if duration <= T::zero() {
            return Ok(());
        }
        let n = (duration / self.max_step).ceil().to_usize().unwrap_or(1).max(1);
        let h = duration / T::from_usize_lossy(n);
        let spec = self.spec;
        let eps = spec.epsilon;
        let two = T::lit(2.0);
        let rates = spec.fast_rates();
        let col = spec.collocation();
        for _ in 0..n {
            let g = spec.reaction().fast_remainder_field(col, &self.u, v);
            for (k, c) in v.coeffs_mut().iter_mut().enumerate() {
                let m = rates[k];
                let x = m * h / eps;
                let std = (spec.sigma * spec.sigma * spec.q.values()[k] * (two * h / eps) * phi1(two * x) / two).sqrt();
                *c = (-x).exp() * *c + h / eps * phi1(x) * g.coeffs()[k] + std * rng.normal::<T>();
            }
            if !v.is_finite() {
                return Err(Error::blow_up(f64::NAN, "frozen fast dynamics diverged"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(eps: f64, sigma: f64, lambda: f64, n: usize) -> SystemSpec<f64> {
        SystemSpec::example(eps, sigma, lambda, n).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SystemSpec::<f64>::example(0.0, 1.0, 1.0, 4).is_err());
        assert!(SystemSpec::<f64>::example(0.1, f64::NAN, 1.0, 4).is_err());
        let b = BasisSpec::unit_pi(4);
        assert!(SystemSpec::new(0.1, 1.0, 1.0, QSpec::decaying(3), b).is_err());
        let s = spec(0.1, 1.0, 1.0, 4);
        assert!(step(&State::slaved(SpectralField::zeros(b)), &s, 0.0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn linear_decoupled_deterministic_check() {
        // sigma = 0, lambda = 0, u0 = e1, v0 = 0: u1' = -u1 - v1, eps v1' = -2 v1 + u1
        let s = spec(0.01, 0.0, 0.0, 4);
        let b = s.basis;
        let grid = TimeGrid::new(1.0, 4000).unwrap();
        let (u, v) = simulate_path(&SpectralField::mode(b, 1), &SpectralField::zeros(b), &s, &grid, &mut RngStream::new(0, 0))
            .unwrap();
        // after the fast layer v tracks (I - A)^{-1} u
        let k = grid.n_steps();
        assert!((v.at(k).coeff(1) - 0.5 * u.at(k).coeff(1)).abs() < 0.02 * u.at(k).coeff(1).abs());
        // slow decay rate of the coupled linear mode is lambda_1 + 1/(1 + lambda_1) + O(eps)
        let rate = (u.at(k / 2).coeff(1) / u.at(k).coeff(1)).ln() / 0.5;
        assert!((rate - 1.5).abs() < 0.05, "rate {rate}");
        // without the v feedback u would decay exactly as e^{-t}; with it, faster
        assert!(u.at(k).coeff(1) < (-1.0_f64).exp());
        for i in 2..=4 {
            assert_eq!(u.at(k).coeff(i), 0.0);
        }
    }

    #[test]
    fn zero_data_stays_zero_and_runs_are_reproducible() {
        let s0 = spec(0.1, 0.0, 0.0, 6);
        let b = s0.basis;
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let z = SpectralField::zeros(b);
        let (u, _) = simulate_path(&z, &z, &s0, &grid, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(u.sup_norm(), 0.0);

        let s = spec(0.1, 1.0, 1.0, 6);
        let a = simulate_path(&z, &z, &s, &grid, &mut RngStream::new(3, 9)).unwrap();
        let c = simulate_path(&z, &z, &s, &grid, &mut RngStream::new(3, 9)).unwrap();
        assert_eq!(a, c);
        assert!(a.0.sup_norm() > 0.0 && a.0.sup_norm().is_finite());
    }

    #[test]
    fn blow_up_is_reported_not_clipped() {
        let s = spec(0.1, 0.0, 0.0, 2);
        let b = s.basis;
        let mut st = State::new(SpectralField::from_coeffs(b, vec![f64::INFINITY, 0.0]).unwrap(), SpectralField::zeros(b)).unwrap();
        let err = Stepper::new(&s, 0.01).unwrap().advance(&s, &mut st, &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn energy_decreases_without_noise_or_reaction() {
        let s = spec(0.05, 0.0, 0.0, 8);
        let b = s.basis;
        let u0 = SpectralField::from_coeffs(b, vec![1.0, -0.5, 0.3, 0.2, 0.0, 0.1, -0.1, 0.05]).unwrap();
        let grid = TimeGrid::new(2.0, 800).unwrap();
        let mut last = f64::INFINITY;
        simulate_with(State::new(u0.clone(), SpectralField::zeros(b)).unwrap(), &s, &grid, &mut RngStream::new(0, 0), |_, st| {
            let e = st.u.norm_sq();
            assert!(e <= last + 1e-15);
            last = e;
        })
        .unwrap();
    }

    #[test]
    fn frozen_fast_mean_and_variance_at_zero() {
        let s = spec(0.1, 1.0, 1.0, 4);
        let b = s.basis;
        let opts = FrozenFastOptions::for_spec(&s, 4000);
        let out = frozen_fast_stationary(&SpectralField::zeros(b), &s, &opts, &mut RngStream::new(21, 0)).unwrap();
        for i in 1..=4 {
            let (m, se) = out.mode_mean(i);
            assert!(m.abs() < 3.5 * se, "mode {i} mean {m} se {se}");
        }
        let bad = FrozenFastOptions { burn_in: 1e-3, ..opts };
        assert!(frozen_fast_stationary(&SpectralField::zeros(b), &s, &bad, &mut RngStream::new(0, 0)).is_err());
    }
}
