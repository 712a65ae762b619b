//! Averaged drift, the averaged equation, and Monte-Carlo measurement of the
//! averaging error `rho_{0T}(u^eps, u)` across a sweep of `eps`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::path::{PathH, TimeGrid};
use crate::scalar::{phi1, Scalar};
use crate::slowfast::{simulate_with, FrozenFast, FrozenFastOptions, State, SystemSpec};
use crate::spectral::{apply_resolvent, SpectralField};
use crate::stats;
use crate::stochastic::RngStream;

/// How `fbar(u) = int f(u, v) mu^u(dv)` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AveragedDrift {
    /// `lambda sin u - (I - A)^{-1} u`, valid for the example reaction only.
    Analytic,
    /// Time average of `f(u, v)` along one stationary frozen-fast trajectory.
    /// The seed is fixed so the estimate is a deterministic function of `u`.
    Empirical { n_samples: usize, seed: u64 },
}

/// Empirical average with per-mode standard errors.
#[derive(Clone, Debug)]
pub struct DriftEstimate<T> {
    pub value: SpectralField<T>,
    pub stderr: Vec<f64>,
}

pub fn fbar<T: Scalar>(u: &SpectralField<T>, drift: &AveragedDrift, spec: &SystemSpec<T>) -> Result<SpectralField<T>> {
    match drift {
        AveragedDrift::Analytic => fbar_analytic(u, spec),
        AveragedDrift::Empirical { .. } => Ok(fbar_with_stderr(u, drift, spec)?.value),
    }
}

fn fbar_analytic<T: Scalar>(u: &SpectralField<T>, spec: &SystemSpec<T>) -> Result<SpectralField<T>> {
    let lambda = spec.example_lambda()?;
    let mut out = spec.collocation().map(u, |x| lambda * x.sin());
    out.axpy(-T::one(), &apply_resolvent(u));
    Ok(out)
}

/// `fbar(u)` together with standard errors (zero for the analytic form).
pub fn fbar_with_stderr<T: Scalar>(
    u: &SpectralField<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<DriftEstimate<T>> {
    let (n_samples, seed) = match *drift {
        AveragedDrift::Analytic => {
            return Ok(DriftEstimate { value: fbar_analytic(u, spec)?, stderr: vec![0.0; spec.basis.n_modes()] })
        }
        AveragedDrift::Empirical { n_samples, seed } => (n_samples, seed),
    };
    if n_samples < 100 {
        return Err(Error::invalid(format!("empirical averaging needs at least 100 samples, got {n_samples}")));
    }
    let opts = FrozenFastOptions::for_spec(spec, n_samples);
    // a tenth of the decorrelation spacing: consecutive samples are correlated,
    // which batch means accounts for
    let interval = opts.sample_interval / T::lit(10.0);
    let frozen = FrozenFast::new(u.clone(), spec, opts.max_step.min(interval));
    let mut rng = RngStream::new(seed, 0x_f0a7);
    let mut v = apply_resolvent(u);
    frozen.advance(&mut v, opts.burn_in, &mut rng)?;
    let n = spec.basis.n_modes();
    let mut series = vec![Vec::with_capacity(n_samples); n];
    let col = spec.collocation();
    for _ in 0..n_samples {
        frozen.advance(&mut v, interval, &mut rng)?;
        let f = spec.reaction().slow_field(col, u, &v);
        for (k, s) in series.iter_mut().enumerate() {
            s.push(f.coeffs()[k].to_f64_lossy());
        }
    }
    let mut value = SpectralField::zeros(spec.basis);
    let mut stderr = Vec::with_capacity(n);
    for (k, s) in series.iter().enumerate() {
        let (m, se) = stats::batch_mean_se(s, 20);
        value.coeffs_mut()[k] = T::lit(m);
        stderr.push(se);
    }
    Ok(DriftEstimate { value, stderr })
}

/// Directional derivative `D fbar(u)[y]` for the analytic drift:
/// `lambda P_N[cos(u) y] - (I - A)^{-1} y`. Symmetric in `y`.
pub fn fbar_derivative<T: Scalar>(u: &SpectralField<T>, y: &SpectralField<T>, spec: &SystemSpec<T>) -> Result<SpectralField<T>> {
    let lambda = spec.example_lambda()?;
    let mut out = spec.collocation().multiply(u, |x| lambda * x.cos(), y);
    out.axpy(-T::one(), &apply_resolvent(y));
    Ok(out)
}

/// Deterministic exponential-Euler solution of `du = [A u + fbar(u)] dt`.
pub fn solve_averaged<T: Scalar>(
    u0: &SpectralField<T>,
    spec: &SystemSpec<T>,
    grid: &TimeGrid<T>,
    drift: &AveragedDrift,
) -> Result<PathH<T>> {
    let dt = grid.dt();
    let lam = spec.basis.eigenvalues();
    let decay: Vec<T> = lam.iter().map(|&l| (-l * dt).exp()).collect();
    let weight: Vec<T> = lam.iter().map(|&l| dt * phi1(l * dt)).collect();
    let mut fields = Vec::with_capacity(grid.n_nodes());
    let mut u = u0.clone();
    fields.push(u.clone());
    for k in 1..=grid.n_steps() {
        let f = fbar(&u, drift, spec)?;
        for (i, c) in u.coeffs_mut().iter_mut().enumerate() {
            *c = decay[i] * *c + weight[i] * f.coeffs()[i];
        }
        if !u.is_finite() {
            return Err(Error::blow_up(grid.time(k).to_f64_lossy(), "averaged equation diverged"));
        }
        fields.push(u.clone());
    }
    PathH::new(*grid, fields)
}

/// Residual `A u + fbar(u)` of the averaged equation.
pub fn averaged_residual<T: Scalar>(u: &SpectralField<T>, spec: &SystemSpec<T>) -> Result<SpectralField<T>> {
    let mut r = fbar_analytic(u, spec)?;
    for (k, c) in r.coeffs_mut().iter_mut().enumerate() {
        *c -= spec.basis.eigenvalue(k + 1) * u.coeffs()[k];
    }
    Ok(r)
}

/// Newton iteration for an equilibrium `A u* + fbar(u*) = 0` of the averaged
/// equation, started from `guess`.
pub fn find_equilibrium<T: Scalar>(guess: &SpectralField<T>, spec: &SystemSpec<T>, tol: T) -> Result<SpectralField<T>> {
    let n = spec.basis.n_modes();
    let mut u = guess.clone();
    for _ in 0..100 {
        let r = averaged_residual(&u, spec)?;
        if r.norm() < tol {
            return Ok(u);
        }
        let mut jac = Matrix::zeros(n);
        for j in 1..=n {
            let e = SpectralField::mode(spec.basis, j);
            let col = fbar_derivative(&u, &e, spec)?;
            for i in 0..n {
                jac[(i, j - 1)] = col.coeffs()[i];
            }
            jac[(j - 1, j - 1)] -= spec.basis.eigenvalue(j);
        }
        let delta = jac.solve(r.coeffs())?;
        for (c, d) in u.coeffs_mut().iter_mut().zip(delta) {
            *c -= d;
        }
    }
    Err(Error::invalid("equilibrium search did not converge"))
}

/// Sweep parameters for the averaging-error measurement.
#[derive(Clone, Debug)]
pub struct AveragingRateOptions<T> {
    /// Strictly decreasing.
    pub epsilons: Vec<T>,
    pub horizon: T,
    pub n_replicas: usize,
    /// Time step is `eps / steps_per_epsilon`.
    pub steps_per_epsilon: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    pub mean_error: f64,
    pub stderr: f64,
    pub n_ok: usize,
    pub n_blowup: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Weighted log-log slope of the mean error against `eps`.
    pub slope: f64,
}

/// `rho_{0T}(u^eps, u)` over replicas for each `eps`, with `v0 = (I - A)^{-1} u0`.
pub fn averaging_error<T: Scalar>(
    spec: &SystemSpec<T>,
    u0: &SpectralField<T>,
    opts: &AveragingRateOptions<T>,
) -> Result<RateTable> {
    if opts.epsilons.is_empty() || opts.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("epsilon list must be nonempty and strictly decreasing"));
    }
    if opts.n_replicas == 0 {
        return Err(Error::invalid("need at least one replica"));
    }
    let mut rows = Vec::with_capacity(opts.epsilons.len());
    for (e_idx, &eps) in opts.epsilons.iter().enumerate() {
        let s = spec.with_epsilon(eps)?;
        let grid = TimeGrid::with_max_step(opts.horizon, eps / T::from_usize_lossy(opts.steps_per_epsilon))?;
        let avg = solve_averaged(u0, &s, &grid, &AveragedDrift::Analytic)?;
        let base = RngStream::new(opts.seed, e_idx as u64);
        let outcomes: Vec<Result<f64>> = (0..opts.n_replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = base.derive(r as u64);
                let mut worst = T::zero();
                simulate_with(State::slaved(u0.clone()), &s, &grid, &mut rng, |k, st| {
                    worst = worst.max(st.u.distance(avg.at(k)));
                })?;
                Ok(worst.to_f64_lossy())
            })
            .collect();
        let mut errs = Vec::with_capacity(outcomes.len());
        let mut n_blowup = 0;
        for o in outcomes {
            match o {
                Ok(e) => errs.push(e),
                Err(Error::BlowUp { .. }) => n_blowup += 1,
                Err(e) => return Err(e),
            }
        }
        if n_blowup * 20 > opts.n_replicas {
            return Err(Error::blow_up(
                opts.horizon.to_f64_lossy(),
                format!("{n_blowup} of {} replicas diverged at eps = {eps}", opts.n_replicas),
            ));
        }
        let (mean_error, stderr) = stats::mean_se(&errs);
        rows.push(RateRow { epsilon: eps.to_f64_lossy(), mean_error, stderr, n_ok: errs.len(), n_blowup });
    }
    let slope = if rows.len() >= 2 {
        let e: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
        let m: Vec<f64> = rows.iter().map(|r| r.mean_error).collect();
        let se: Vec<f64> = rows.iter().map(|r| r.stderr).collect();
        stats::loglog_slope(&e, &m, &se)
    } else {
        f64::NAN
    };
    Ok(RateTable { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(lambda: f64, n: usize) -> SystemSpec<f64> {
        SystemSpec::example(0.05, 1.0, lambda, n).unwrap()
    }

    #[test]
    fn fbar_zero_and_linearization() {
        let s = spec(1.3, 8);
        let z = SpectralField::zeros(s.basis);
        assert_eq!(fbar(&z, &AveragedDrift::Analytic, &s).unwrap().norm(), 0.0);
        let a = 1e-4;
        let u = SpectralField::sine(s.basis, 1, a);
        let f = fbar(&u, &AveragedDrift::Analytic, &s).unwrap();
        assert!((f.sine_amplitude(1) - (1.3 - 0.5) * a).abs() < 1e-10);
    }

    #[test]
    fn empirical_needs_enough_samples() {
        let s = spec(1.0, 4);
        let u = SpectralField::mode(s.basis, 1);
        let d = AveragedDrift::Empirical { n_samples: 50, seed: 1 };
        assert!(fbar(&u, &d, &s).is_err());
    }

    #[test]
    fn empirical_agrees_with_analytic() {
        let s = spec(1.0, 6);
        let u = SpectralField::from_coeffs(s.basis, vec![0.8, -0.3, 0.2, 0.0, 0.1, 0.0]).unwrap();
        let exact = fbar(&u, &AveragedDrift::Analytic, &s).unwrap();
        let est = fbar_with_stderr(&u, &AveragedDrift::Empirical { n_samples: 20_000, seed: 4 }, &s).unwrap();
        for k in 0..6 {
            let d = (est.value.coeffs()[k] - exact.coeffs()[k]).abs();
            assert!(d < 3.5 * est.stderr[k] + 1e-12, "mode {}: diff {d}, se {}", k + 1, est.stderr[k]);
        }
    }

    #[test]
    fn analytic_drift_needs_example_reaction() {
        #[derive(Debug)]
        struct Cubic;
        impl crate::slowfast::Reaction<f64> for Cubic {
            fn slow(&self, u: f64, v: f64) -> f64 {
                -u * u * u - v
            }
            fn fast(&self, u: f64, v: f64) -> f64 {
                u - v
            }
        }
        let s = spec(1.0, 4).with_reaction(std::sync::Arc::new(Cubic));
        let u = SpectralField::mode(s.basis, 1);
        assert!(matches!(fbar(&u, &AveragedDrift::Analytic, &s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn averaged_path_approaches_nontrivial_fixed_point() {
        let lp = 0.1;
        let s = spec(1.5 + lp, 8);
        let grid = TimeGrid::new(120.0, 12_000).unwrap();
        let path = solve_averaged(&SpectralField::sine(s.basis, 1, 0.1), &s, &grid, &AveragedDrift::Analytic).unwrap();
        let a_end = path.last().sine_amplitude(1);
        let cubic = (16.0 * lp / 3.0).sqrt();
        assert!((a_end - cubic).abs() < 0.1 * cubic, "{a_end} vs {cubic}");
        let eq = find_equilibrium(path.last(), &s, 1e-12).unwrap();
        assert!(averaged_residual(&eq, &s).unwrap().norm() < 1e-8);
        assert!(eq.distance(path.last()) < 1e-3);
        let zero = SpectralField::zeros(s.basis);
        let path0 = solve_averaged(&zero, &s, &TimeGrid::new(1.0, 10).unwrap(), &AveragedDrift::Analytic).unwrap();
        assert_eq!(path0.sup_norm(), 0.0);
        let _ = PI;
    }

    #[test]
    fn averaged_solver_is_first_order_in_dt() {
        let s = spec(1.2, 6);
        let u0 = SpectralField::from_coeffs(s.basis, vec![1.0, 0.5, -0.4, 0.2, 0.0, 0.1]).unwrap();
        let end = |n| {
            solve_averaged(&u0, &s, &TimeGrid::new(1.0, n).unwrap(), &AveragedDrift::Analytic)
                .unwrap()
                .last()
                .clone()
        };
        let (a, b, c) = (end(100), end(200), end(400));
        let order = (a.distance(&b) / b.distance(&c)).log2();
        assert!((order - 1.0).abs() < 0.15, "order {order}");
    }

    #[test]
    fn fbar_is_lipschitz() {
        let s = spec(1.4, 8);
        let mut rng = RngStream::new(8, 0);
        let bound = 1.4 + 0.5;
        for _ in 0..50 {
            let u1 = SpectralField::from_coeffs(s.basis, (0..8).map(|_| rng.normal()).collect()).unwrap();
            let u2 = SpectralField::from_coeffs(s.basis, (0..8).map(|_| rng.normal()).collect()).unwrap();
            let d = fbar(&u1, &AveragedDrift::Analytic, &s).unwrap().distance(&fbar(&u2, &AveragedDrift::Analytic, &s).unwrap());
            assert!(d <= bound * u1.distance(&u2) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn deterministic_layer_error_is_order_eps() {
        let base = SystemSpec::example(0.1, 0.0, 1.0, 6).unwrap();
        let u0 = SpectralField::sine(base.basis, 1, 1.0);
        let opts = AveragingRateOptions { epsilons: vec![0.04, 0.02, 0.01], horizon: 1.0, n_replicas: 1, steps_per_epsilon: 20, seed: 0 };
        let table = averaging_error(&base, &u0, &opts).unwrap();
        let r: Vec<f64> = table.rows.iter().map(|r| r.mean_error).collect();
        assert!(r[0] > r[1] && r[1] > r[2]);
        assert!((table.slope - 1.0).abs() < 0.15, "slope {}", table.slope);
        let bad = AveragingRateOptions { epsilons: vec![0.01, 0.02], ..opts };
        assert!(averaging_error(&base, &u0, &bad).is_err());
    }
}
