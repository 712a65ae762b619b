//! Amplitude equations on the stochastic superslow manifold of the example
//! system near its pitchfork at `lambda = 3/2 + lambda'`, and checks of them
//! against the full slow-fast simulation.

mod coefficients;

pub use coefficients::{drift_difference, exact, fixed_point, LedgerEntry, Model, Rational, SsmCoefficients};

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::TimeGrid;
use crate::scalar::Scalar;
use crate::slowfast::{simulate_with, State, SystemSpec};
use crate::spectral::{BasisSpec, SpectralField};
use crate::stats;
use crate::stochastic::{ExpFilterState, OuChannel, OuKernel, QSpec, RngStream};

/// Parameters shared by both amplitude models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplitudeParams<T> {
    pub model: Model,
    pub lambda_p: T,
    pub epsilon: T,
    pub sigma: T,
}

/// Amplitude `a` with the filters of the three noise channels.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeState<T> {
    pub a: T,
    pub t: T,
    /// `Z^{-2} dW2`, `Z^{-3} dW3`.
    pub slow: [ExpFilterState<T>; 2],
    /// `Z^{-k/eps} dW_k` for `k = 1, 2, 3`; absent when `eps = 0`.
    pub fast: Option<[ExpFilterState<T>; 3]>,
    /// `Z^{-k/eps} Z^{-k/eps} dW_k`.
    pub fast_cascade: [T; 3],
}

impl<T: Scalar> AmplitudeState<T> {
    /// Filters at rest.
    pub fn new(a: T, epsilon: T) -> Result<Self> {
        let slow = [ExpFilterState::new(T::lit(2.0))?, ExpFilterState::new(T::lit(3.0))?];
        let fast = if epsilon > T::zero() {
            let f = |k: f64| ExpFilterState::new(T::lit(k) / epsilon);
            Some([f(1.0)?, f(2.0)?, f(3.0)?])
        } else {
            None
        };
        Ok(Self { a, t: T::zero(), slow, fast, fast_cascade: [T::zero(); 3] })
    }

    fn fast_value(&self, k: usize) -> T {
        self.fast.as_ref().map_or(T::zero(), |f| f[k].value())
    }
}

/// Precomputed coefficients and joint noise samplers for a fixed step.
#[derive(Clone, Debug)]
pub struct AmplitudeStepper<T> {
    params: AmplitudeParams<T>,
    dt: T,
    poly: (T, T, T),
    noise1: T,
    noise3: T,
    quad: (T, T, T),
    channels: [OuChannel<T>; 3],
}

fn lit<T: Scalar>(q: &Rational) -> T {
    T::lit(q.to_f64().unwrap_or(f64::NAN))
}

impl<T: Scalar> AmplitudeStepper<T> {
    /// Requires `dt <= 0.01 / |lambda'|` and, for the slow-fast model,
    /// `dt <= eps / 10`.
    pub fn new(params: AmplitudeParams<T>, dt: T) -> Result<Self> {
        let eps = params.epsilon;
        if !(dt > T::zero()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if !(eps >= T::zero()) {
            return Err(Error::invalid(format!("epsilon must be nonnegative, got {eps}")));
        }
        if params.lambda_p != T::zero() && dt > T::lit(0.01) / params.lambda_p.abs() {
            return Err(Error::invalid(format!("time step {dt} too long for lambda' = {}", params.lambda_p)));
        }
        if params.model == Model::SlowFast && eps > T::zero() && dt > eps / T::lit(10.0) {
            return Err(Error::invalid(format!("slow-fast amplitude model needs dt <= eps/10, got {dt}")));
        }
        let c = SsmCoefficients::default();
        let (c1, c3, c5) = c.drift_poly(params.model, params.lambda_p.to_f64_lossy(), eps.to_f64_lossy());
        let e = exact(eps.to_f64_lossy());
        let mut channels = Vec::with_capacity(3);
        for k in 1..=3usize {
            let mut kernels = Vec::new();
            if k > 1 {
                kernels.push(OuKernel { rate: T::from_usize_lossy(k), power: 0 });
            }
            if eps > T::zero() {
                let r = T::from_usize_lossy(k) / eps;
                kernels.push(OuKernel { rate: r, power: 0 });
                kernels.push(OuKernel { rate: r, power: 1 });
            }
            channels.push(OuChannel::with_kernels(&kernels, dt)?);
        }
        let channels: [OuChannel<T>; 3] = channels.try_into().expect("three channels");
        Ok(Self {
            params,
            dt,
            poly: (T::lit(c1), T::lit(c3), T::lit(c5)),
            noise1: lit(&c.noise1_exact(params.model, &e)),
            noise3: lit(&c.noise3),
            quad: (lit(&c.quad22), lit(&c.quad13), lit(&c.quad33)),
            channels,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn params(&self) -> &AmplitudeParams<T> {
        &self.params
    }

    /// Euler-Maruyama on `a`, exact updates of every filter. Quadratic noise
    /// terms use the filter value from before the increment.
    pub fn advance(&self, s: &mut AmplitudeState<T>, rng: &mut RngStream) -> Result<()> {
        let dt = self.dt;
        let p = &self.params;
        let mut dw = [T::zero(); 3];
        let mut inc = [[T::zero(); 3]; 3];
        for k in 0..3 {
            dw[k] = self.channels[k].sample(rng, &mut inc[k][..self.channels[k].rates().len()]);
        }
        let a = s.a;
        let (c1, c3, c5) = self.poly;
        let a2 = a * a;
        let drift = a * (c1 - c3 * a2 + c5 * a2 * a2);
        let additive = -(p.epsilon.sqrt() * p.sigma) * (self.noise1 * dw[0] + self.noise3 * a2 * dw[2]);
        let (q22, q13, q33) = self.quad;
        let z2 = s.slow[0].value();
        let z3 = s.slow[1].value();
        let quadratic = p.epsilon * p.sigma * p.sigma * a * (q22 * dw[1] * z2 + q13 * dw[0] * z3 + q33 * dw[2] * z3);
        s.a = a + drift * dt + additive + quadratic;
        s.t += dt;

        s.slow[0].step_noise(inc[1][0], dt);
        s.slow[1].step_noise(inc[2][0], dt);
        if let Some(fast) = s.fast.as_mut() {
            for k in 0..3 {
                let off = usize::from(k > 0);
                let decay = (-fast[k].rate() * dt).exp();
                s.fast_cascade[k] = decay * (s.fast_cascade[k] + dt * fast[k].value()) + inc[k][off + 1];
                fast[k].step_noise(inc[k][off], dt);
            }
        }
        if !s.a.is_finite() || s.a.abs() > T::lit(10.0) {
            return Err(Error::blow_up(s.t.to_f64_lossy(), format!("amplitude left |a| <= 10: {}", s.a)));
        }
        Ok(())
    }
}

/// One step; see [`AmplitudeStepper::advance`].
pub fn step_amplitude<T: Scalar>(
    state: &AmplitudeState<T>,
    params: AmplitudeParams<T>,
    dt: T,
    rng: &mut RngStream,
) -> Result<AmplitudeState<T>> {
    let mut next = state.clone();
    AmplitudeStepper::new(params, dt)?.advance(&mut next, rng)?;
    Ok(next)
}

/// Amplitude at every node of `grid`, started with filters at rest.
pub fn simulate_amplitude<T: Scalar>(
    params: AmplitudeParams<T>,
    a0: T,
    grid: &TimeGrid<T>,
    rng: &mut RngStream,
) -> Result<Vec<AmplitudeState<T>>> {
    let stepper = AmplitudeStepper::new(params, grid.dt())?;
    let mut s = AmplitudeState::new(a0, params.epsilon)?;
    let mut out = Vec::with_capacity(grid.n_nodes());
    out.push(s.clone());
    for _ in 0..grid.n_steps() {
        stepper.advance(&mut s, rng)?;
        out.push(s.clone());
    }
    Ok(out)
}

fn check_basis<T: Scalar>(basis: &BasisSpec<T>) -> Result<()> {
    if basis.n_modes() < 3 || (basis.length() - T::PI()).abs() > T::lit(1e-12) {
        return Err(Error::invalid("manifold fields need the (0, pi) basis with at least three modes"));
    }
    Ok(())
}

fn sines<T: Scalar>(basis: BasisSpec<T>, amps: [T; 3]) -> SpectralField<T> {
    let mut u = SpectralField::zeros(basis);
    for (k, &amp) in amps.iter().enumerate() {
        u.axpy(T::one(), &SpectralField::sine(basis, k + 1, amp));
    }
    u
}

/// Slow field on the manifold assembled from the amplitude and filter states.
pub fn reconstruct_field<T: Scalar>(
    state: &AmplitudeState<T>,
    params: &AmplitudeParams<T>,
    basis: BasisSpec<T>,
) -> Result<SpectralField<T>> {
    check_basis(&basis)?;
    let c = SsmCoefficients::default();
    let a = state.a;
    let s = params.epsilon.sqrt() * params.sigma;
    let fast = |k| if params.model == Model::SlowFast { state.fast_value(k) } else { T::zero() };
    let amp1 = a + lit::<T>(&c.u_fast1) * s * fast(0);
    let amp2 = -s * lit::<T>(&c.u_mode2) * (state.slow[0].value() - fast(1));
    let amp3 = lit::<T>(&c.u_cubic3) * a * a * a - s * lit::<T>(&c.u_mode3) * (state.slow[1].value() - fast(2));
    Ok(sines(basis, [amp1, amp2, amp3]))
}

/// Fast field of the slow-fast model on the manifold.
pub fn reconstruct_fast_field<T: Scalar>(
    state: &AmplitudeState<T>,
    params: &AmplitudeParams<T>,
    basis: BasisSpec<T>,
) -> Result<SpectralField<T>> {
    check_basis(&basis)?;
    if params.model != Model::SlowFast {
        return Err(Error::invalid("the fast field belongs to the slow-fast model"));
    }
    let c = SsmCoefficients::default();
    let a = state.a;
    let eps = params.epsilon;
    let mut amps = [lit::<T>(&c.v_lin) * a, T::zero(), lit::<T>(&c.v_cubic3) * a * a * a];
    if eps > T::zero() {
        let s = params.sigma / eps.sqrt();
        for k in 0..3 {
            let e = lit::<T>(&c.v_eps[k]) * eps;
            let slow = if k == 0 { T::zero() } else { state.slow[k - 1].value() };
            amps[k] += s * ((T::one() + e) * state.fast_value(k) - e * slow + lit::<T>(&c.v_sq[k]) * state.fast_cascade[k]);
        }
    }
    Ok(sines(basis, amps))
}

/// Settings for [`ssm_vs_full`].
#[derive(Clone, Debug, PartialEq)]
pub struct SsmCompareOptions {
    pub lambda_p: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub n_modes: usize,
    /// Length of the noise-free transient used to fit the attraction rate.
    pub decay_horizon: f64,
    /// Length of the noise-free run to the steady amplitude.
    pub steady_horizon: f64,
    /// Length of the noisy runs for the amplitude variance; zero skips them.
    pub stat_horizon: f64,
    pub seed: u64,
}

impl Default for SsmCompareOptions {
    fn default() -> Self {
        Self {
            lambda_p: 0.1,
            epsilon: 0.05,
            sigma: 0.1,
            n_modes: 8,
            decay_horizon: 4.0,
            steady_horizon: 150.0,
            stat_horizon: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SsmComparison {
    pub lambda_p: f64,
    pub epsilon: f64,
    pub sigma: f64,
    /// Fitted decay rate of the `sin 2x` component off the manifold.
    pub decay_rate: f64,
    pub steady_full: f64,
    pub steady_slow_fast: f64,
    pub steady_averaged: f64,
    pub variance_full: Option<(f64, f64)>,
    pub variance_slow_fast: Option<(f64, f64)>,
    pub variance_within_3se: Option<bool>,
}

/// Full system at `lambda = 3/2 + lambda'` with noise on the first three
/// modes, scaled so that each channel is `sigma sin(kx) dW_k`.
pub fn ssm_full_spec(opts: &SsmCompareOptions) -> Result<SystemSpec<f64>> {
    if opts.n_modes < 3 {
        return Err(Error::invalid("comparison needs at least three modes"));
    }
    let q = QSpec::leading(opts.n_modes, 3, std::f64::consts::FRAC_PI_2);
    SystemSpec::new(opts.epsilon, opts.sigma, 1.5 + opts.lambda_p, q, BasisSpec::unit_pi(opts.n_modes))
}

/// Variance of a long series from the means of 20 batch variances.
fn batch_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() / 20;
    let vars: Vec<f64> = xs.chunks_exact(n.max(2)).map(|c| stats::variance_with_se(c).0).collect();
    stats::mean_se(&vars)
}

/// Compares the amplitude models with the full slow-fast system.
pub fn ssm_vs_full(opts: &SsmCompareOptions) -> Result<SsmComparison> {
    let spec = ssm_full_spec(opts)?;
    let quiet = spec.with_sigma(0.0);
    let basis = spec.basis;
    let dt = spec.default_dt();
    let mut rng = RngStream::new(opts.seed, 0x_55_0000);

    // transient off the manifold: sin 2x component of a small perturbation
    let mut u0 = SpectralField::sine(basis, 1, 0.1);
    u0.axpy(1.0, &SpectralField::sine(basis, 2, 0.05));
    let grid = TimeGrid::with_max_step(opts.decay_horizon, dt)?;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    simulate_with(State::slaved(u0), &quiet, &grid, &mut rng, |k, st| {
        let t = grid.time(k);
        let c = st.u.coeff(2).abs();
        if t >= 0.5 && c > 1e-12 {
            ts.push(t);
            logs.push(c.ln());
        }
    })?;
    if ts.len() < 10 {
        return Err(Error::invalid("transient too short to fit a decay rate"));
    }
    let (slope, _) = stats::linear_fit(&ts, &logs);

    let grid = TimeGrid::with_max_step(opts.steady_horizon, dt)?;
    let end = simulate_with(State::slaved(SpectralField::sine(basis, 1, 0.5)), &quiet, &grid, &mut rng, |_, _| {})?;
    let steady_full = end.u.sine_amplitude(1);
    let steady_slow_fast = fixed_point(Model::SlowFast, opts.lambda_p, opts.epsilon).unwrap_or(0.0);
    let steady_averaged = fixed_point(Model::Averaged, opts.lambda_p, opts.epsilon).unwrap_or(0.0);

    let (mut variance_full, mut variance_slow_fast, mut variance_within_3se) = (None, None, None);
    if opts.stat_horizon > 0.0 {
        let burn = 0.2 * opts.stat_horizon;
        let grid = TimeGrid::with_max_step(opts.stat_horizon, dt)?;
        let stride = (0.05 / grid.dt()).round().max(1.0) as usize;
        let mut xs = Vec::new();
        let mut full_rng = RngStream::new(opts.seed, 0x_55_0001);
        simulate_with(
            State::slaved(SpectralField::sine(basis, 1, steady_slow_fast)),
            &spec,
            &grid,
            &mut full_rng,
            |k, st| {
                if k % stride == 0 && grid.time(k) >= burn {
                    xs.push(st.u.sine_amplitude(1));
                }
            },
        )?;
        let params = AmplitudeParams { model: Model::SlowFast, lambda_p: opts.lambda_p, epsilon: opts.epsilon, sigma: opts.sigma };
        let agrid = TimeGrid::with_max_step(opts.stat_horizon, (opts.epsilon / 10.0).min(0.01))?;
        let astride = (0.05 / agrid.dt()).round().max(1.0) as usize;
        let mut amp_rng = RngStream::new(opts.seed, 0x_55_0002);
        let path = simulate_amplitude(params, steady_slow_fast, &agrid, &mut amp_rng)?;
        let ys: Vec<f64> = path
            .iter()
            .enumerate()
            .filter(|(k, s)| k % astride == 0 && s.t >= burn)
            .map(|(_, s)| reconstruct_field(s, &params, basis).map(|u| u.sine_amplitude(1)))
            .collect::<Result<_>>()?;
        let vf = batch_variance(&xs);
        let vs = batch_variance(&ys);
        variance_within_3se = Some((vf.0 - vs.0).abs() <= 3.0 * (vf.1 * vf.1 + vs.1 * vs.1).sqrt());
        variance_full = Some(vf);
        variance_slow_fast = Some(vs);
    }

    Ok(SsmComparison {
        lambda_p: opts.lambda_p,
        epsilon: opts.epsilon,
        sigma: opts.sigma,
        decay_rate: -slope,
        steady_full,
        steady_slow_fast,
        steady_averaged,
        variance_full,
        variance_slow_fast,
        variance_within_3se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(model: Model, lambda_p: f64, epsilon: f64, sigma: f64) -> AmplitudeParams<f64> {
        AmplitudeParams { model, lambda_p, epsilon, sigma }
    }

    #[test]
    fn deterministic_amplitude_settles_on_quintic_root() {
        let p = params(Model::SlowFast, 0.1, 0.0, 0.0);
        let grid = TimeGrid::new(200.0, 20_000).unwrap();
        let path = simulate_amplitude(p, 0.05, &grid, &mut RngStream::new(0, 0)).unwrap();
        let a = path.last().unwrap().a;
        let root = fixed_point(Model::SlowFast, 0.1, 0.0).unwrap();
        assert!((a - root).abs() < 1e-6, "{a} vs {root}");
        let cubic = (16.0 * 0.1_f64 / 3.0).sqrt();
        assert!((a - cubic).abs() < 0.03 * cubic);
    }

    #[test]
    fn subcritical_amplitude_decays() {
        let p = params(Model::Averaged, -0.2, 0.05, 0.0);
        let grid = TimeGrid::new(60.0, 6000).unwrap();
        let path = simulate_amplitude(p, 0.5, &grid, &mut RngStream::new(0, 0)).unwrap();
        assert!(path.last().unwrap().a.abs() < 1e-4);
    }

    #[test]
    fn fixed_point_gap_is_linear_in_eps() {
        let eps = [0.1, 0.05, 0.02];
        let gaps: Vec<f64> = eps
            .iter()
            .map(|&e| (fixed_point(Model::SlowFast, 0.1, e).unwrap() - fixed_point(Model::Averaged, 0.1, e).unwrap()).abs())
            .collect();
        let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let (slope, _) = stats::linear_fit(&lx, &ly);
        assert!((slope - 1.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn step_rejects_bad_dt_and_blows_up_far_out() {
        assert!(AmplitudeStepper::new(params(Model::SlowFast, 0.1, 0.05, 0.1), 0.01).is_err());
        assert!(AmplitudeStepper::new(params(Model::Averaged, 0.1, 0.05, 0.1), 0.2).is_err());
        let s = AmplitudeState::new(9.99, 0.05).unwrap();
        let r = step_amplitude(&s, params(Model::Averaged, 0.1, 0.05, 0.0), 0.001, &mut RngStream::new(0, 0));
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn noise_free_fields_are_exact() {
        let b = BasisSpec::unit_pi(4);
        let p = params(Model::SlowFast, 0.1, 0.05, 0.0);
        let mut s = AmplitudeState::new(0.6, 0.05).unwrap();
        let u = reconstruct_field(&s, &p, b).unwrap();
        assert_eq!(u.sine_amplitude(1), 0.6);
        assert!((u.sine_amplitude(3) - 5.0 / 608.0 * 0.216).abs() < 1e-16);
        assert!(u.sine_amplitude(2).abs() < 1e-300 && u.sine_amplitude(4) == 0.0);
        let v = reconstruct_fast_field(&s, &p, b).unwrap();
        assert_eq!(v.sine_amplitude(1), 0.3);
        assert!((v.sine_amplitude(3) - 0.216 / 1216.0).abs() < 1e-16);
        s.a = 0.0;
        assert_eq!(reconstruct_field(&s, &p, b).unwrap().norm(), 0.0);
        assert!(reconstruct_field(&s, &p, BasisSpec::unit_pi(2)).is_err());
        assert!(reconstruct_fast_field(&s, &params(Model::Averaged, 0.1, 0.05, 0.0), b).is_err());
    }

    #[test]
    fn filters_reach_their_stationary_variance() {
        let p = params(Model::SlowFast, 0.1, 0.05, 0.0);
        let grid = TimeGrid::new(400.0, 80_000).unwrap();
        let path = simulate_amplitude(p, 0.0, &grid, &mut RngStream::new(3, 0)).unwrap();
        let z2: Vec<f64> = path.iter().skip(2000).step_by(200).map(|s| s.slow[0].value()).collect();
        let (v, se) = stats::variance_with_se(&z2);
        assert!((v - 0.25).abs() < 3.0 * se, "Z2 variance {v} ± {se}");
        // fast cascade: int s^2 e^{-2 s/eps} ds = eps^3 / 4
        let c1: Vec<f64> = path.iter().skip(2000).step_by(20).map(|s| s.fast_cascade[0]).collect();
        let (v, se) = stats::variance_with_se(&c1);
        let target = 0.05_f64.powi(3) / 4.0;
        assert!((v - target).abs() < 3.0 * se, "cascade variance {v} vs {target} ± {se}");
    }

    #[test]
    fn paired_field_difference_shrinks_like_eps() {
        let b = BasisSpec::unit_pi(3);
        let eps = [0.08, 0.04, 0.02];
        let mut rms = Vec::new();
        for &e in &eps {
            let grid = TimeGrid::new(30.0, (30.0 / (e / 10.0)) as usize).unwrap();
            let sf = params(Model::SlowFast, 0.1, e, 0.3);
            let ld = params(Model::Averaged, 0.1, e, 0.3);
            let a0 = fixed_point(Model::Averaged, 0.1, e).unwrap();
            let ps = simulate_amplitude(sf, a0, &grid, &mut RngStream::new(21, 0)).unwrap();
            let pl = simulate_amplitude(ld, a0, &grid, &mut RngStream::new(21, 0)).unwrap();
            let mut acc = 0.0;
            let mut n = 0.0;
            for (x, y) in ps.iter().zip(&pl).step_by(10) {
                let d = reconstruct_field(x, &sf, b).unwrap().distance(&reconstruct_field(y, &ld, b).unwrap());
                acc += d * d;
                n += 1.0;
            }
            rms.push((acc / n).sqrt());
        }
        let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = rms.iter().map(|g| g.ln()).collect();
        let (slope, _) = stats::linear_fit(&lx, &ly);
        assert!(slope > 0.7 && slope < 1.3, "slope {slope}, rms {rms:?}");
    }

    #[test]
    fn full_system_is_attracted_at_the_predicted_rate() {
        let opts = SsmCompareOptions { steady_horizon: 120.0, ..Default::default() };
        let rep = ssm_vs_full(&opts).unwrap();
        assert!((rep.decay_rate - 2.7).abs() < 0.3, "rate {}", rep.decay_rate);
        let tol = 2.0 * (opts.lambda_p.powf(1.5) + opts.epsilon);
        assert!((rep.steady_full - rep.steady_slow_fast).abs() < tol, "{rep:?}");
    }
}
