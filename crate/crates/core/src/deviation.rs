//! Deviation process `z^eps = (u^eps - u) / sqrt(eps)`, its Gaussian limit
//! driven by the integrated autocovariance operator `B(u)`, and the
//! averaged-plus-deviation model.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::averaging::{fbar, fbar_derivative, solve_averaged, AveragedDrift};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::path::{PathH, TimeGrid};
use crate::scalar::{phi1, Scalar};
use crate::slowfast::{FrozenFast, State, Stepper, SystemSpec};
use crate::spectral::{apply_resolvent, SpectralField};
use crate::stats;
use crate::stochastic::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    AnalyticExample,
    Empirical,
}

/// Provenance of an empirical estimate.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeta {
    pub u_fingerprint: String,
    pub n_samples: usize,
    pub lag_horizon: f64,
    /// Lag at which the integral was truncated.
    pub cutoff_lag: f64,
}

/// `B = sqrtB sqrtB^T` on the truncated basis.
#[derive(Clone, Debug)]
pub struct CovOperator<T> {
    pub mode: CovMode,
    b: Matrix<T>,
    sqrt_b: Matrix<T>,
    /// Per-entry standard error of `B` (empirical mode only).
    pub stderr: Option<Matrix<f64>>,
    pub meta: Option<EmpiricalMeta>,
    pub warnings: Vec<String>,
}

impl<T: Scalar> CovOperator<T> {
    /// `sqrtB = sigma (I - A)^{-1} sqrt(Q)`, diagonal.
    pub fn analytic(spec: &SystemSpec<T>) -> Result<Self> {
        spec.example_lambda()?;
        let diag: Vec<T> = spec
            .basis
            .eigenvalues()
            .iter()
            .zip(spec.q.values())
            .map(|(&l, &q)| spec.sigma * q.sqrt() / (T::one() + l))
            .collect();
        let sqrt_b = Matrix::diagonal(&diag);
        Ok(Self {
            mode: CovMode::AnalyticExample,
            b: sqrt_b.gram(),
            sqrt_b,
            stderr: None,
            meta: None,
            warnings: Vec::new(),
        })
    }

    /// Builds the operator from a raw estimate: symmetrizes, clips negative
    /// eigenvalues at zero, and takes the symmetric square root.
    pub fn from_matrix(raw: &Matrix<T>, mode: CovMode) -> Self {
        let sym = raw.symmetrized();
        let (w, v) = sym.symmetric_eigen();
        let mut warnings = Vec::new();
        let negative = w.iter().filter(|&&x| x < T::zero()).count();
        if negative > 0 {
            let worst = w.iter().cloned().fold(T::zero(), T::min);
            warnings.push(format!("clipped {negative} negative eigenvalue(s) of B, most negative {worst:e}"));
        }
        let b = Matrix::spectral_map(&w, &v, |x| x.max(T::zero()));
        let sqrt_b = Matrix::spectral_map(&w, &v, |x| x.max(T::zero()).sqrt());
        Self { mode, b, sqrt_b, stderr: None, meta: None, warnings }
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn sqrt_b(&self) -> &Matrix<T> {
        &self.sqrt_b
    }

    /// Smallest eigenvalue of `B` restricted to the given 0-based modes; the
    /// nondegeneracy constant `c0` on the noise-active subspace.
    pub fn min_eigenvalue_on(&self, modes: &[usize]) -> T {
        let m = modes.len();
        if m == 0 {
            return T::zero();
        }
        let mut sub = Matrix::zeros(m);
        for (a, &i) in modes.iter().enumerate() {
            for (c, &j) in modes.iter().enumerate() {
                sub[(a, c)] = self.b[(i, j)];
            }
        }
        sub.symmetric_eigen().0[0]
    }

    /// `sqrt(sum SE_ij^2)`, zero for the analytic form.
    pub fn aggregate_se(&self) -> f64 {
        self.stderr.as_ref().map_or(0.0, |s| s.frobenius())
    }

    /// `sqrtB x`.
    pub fn apply_sqrt(&self, x: &[T]) -> Vec<T> {
        if self.sqrt_b.is_diagonal(T::zero()) {
            return x.iter().enumerate().map(|(i, &xi)| self.sqrt_b[(i, i)] * xi).collect();
        }
        self.sqrt_b.mul_vec(x)
    }
}

/// `(u_eps - u_avg) / sqrt(eps)` node by node.
pub fn z_epsilon_path<T: Scalar>(u_eps: &PathH<T>, u_avg: &PathH<T>, epsilon: T) -> Result<PathH<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let s = T::one() / epsilon.sqrt();
    u_eps.combine(s, u_avg, -s)
}

fn fingerprint<T: Scalar>(u: &SpectralField<T>) -> String {
    let mut h = Sha256::new();
    for c in u.coeffs() {
        h.update(c.to_f64_lossy().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Lags `0 = tau_0 < tau_1 < ...` with steps growing geometrically from
/// `0.05 / mu_max` up to at most `0.05 / mu_min`, ending at `horizon`.
fn lag_grid(mu_min: f64, mu_max: f64, horizon: f64) -> Vec<f64> {
    let mut lags = vec![0.0];
    let mut h = 0.05 / mu_max;
    let cap = 0.05 / mu_min;
    while *lags.last().unwrap() < horizon {
        let next = (lags.last().unwrap() + h).min(horizon);
        lags.push(next);
        h = (h * 1.1).min(cap);
    }
    lags
}

/// Per-sample fluctuation series `f(u, eta(tau_k)) - center` along `lags`,
/// started from a stationary draw.
fn fluctuation_series<T: Scalar>(
    u: &SpectralField<T>,
    spec1: &SystemSpec<T>,
    lags: &[f64],
    burn_in: T,
    max_step: T,
    center: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    let frozen = FrozenFast::new(u.clone(), spec1, max_step);
    let mut v = apply_resolvent(u);
    frozen.advance(&mut v, burn_in, rng)?;
    let col = spec1.collocation();
    let mut out = Vec::with_capacity(lags.len());
    let mut prev = 0.0;
    for &tau in lags {
        frozen.advance(&mut v, T::lit(tau - prev), rng)?;
        prev = tau;
        let f = spec1.reaction().slow_field(col, u, &v);
        out.push(f.coeffs().iter().zip(center).map(|(&c, &m)| c.to_f64_lossy() - m).collect());
    }
    Ok(out)
}

/// Estimates `B_ij = 2 int_0^inf E[df_i(t) df_j(0)] dt` with `df = f(u, eta) - fbar(u)`,
/// `eta` the frozen fast process at `eps = 1`.
///
/// A pilot run (a tenth of the samples, separate stream) fixes the centering
/// `fbar` and the truncation lag, where the trace of the autocovariance first
/// drops below `1e-3` of its lag-0 value. The main run then draws
/// `n_samples` independent stationary trajectories and integrates each one's
/// lagged products with the trapezoidal rule, so per-entry standard errors
/// come from the spread of per-trajectory integrals.
pub fn b_empirical<T: Scalar>(
    u: &SpectralField<T>,
    spec: &SystemSpec<T>,
    lag_horizon: T,
    n_samples: usize,
    rng: &RngStream,
) -> Result<CovOperator<T>> {
    let spec1 = spec.with_epsilon(T::one())?;
    let rates: Vec<f64> = spec1.fast_rates().iter().map(|r| r.to_f64_lossy()).collect();
    let mu_min = rates[0];
    let mu_max = *rates.last().unwrap();
    let horizon = lag_horizon.to_f64_lossy();
    if horizon < 7.0 / mu_min {
        return Err(Error::invalid(format!(
            "lag horizon {horizon} is not long against the mixing time {}",
            1.0 / mu_min
        )));
    }
    if n_samples < 100 {
        return Err(Error::invalid(format!("B estimate needs at least 100 samples, got {n_samples}")));
    }
    let n = spec.basis.n_modes();
    let burn_in = T::lit(14.0 / mu_min);
    let max_step = if spec1.reaction().fast_remainder_is_v_free() {
        T::lit(5.0 / mu_min)
    } else {
        T::lit(0.25 / mu_max)
    };
    let lags = lag_grid(mu_min, mu_max, horizon);

    let n_pilot = (n_samples / 10).max(50);
    let zero = vec![0.0; n];
    let pilot: Vec<Vec<Vec<f64>>> = (0..n_pilot)
        .into_par_iter()
        .map(|s| {
            let mut r = rng.derive(0x_b0_0000 + s as u64);
            fluctuation_series(u, &spec1, &lags, burn_in, max_step, &zero, &mut r)
        })
        .collect::<Result<_>>()?;
    let total = (n_pilot * lags.len()) as f64;
    let center: Vec<f64> = (0..n)
        .map(|i| pilot.iter().flat_map(|s| s.iter().map(move |x| x[i])).sum::<f64>() / total)
        .collect();
    let trace_at = |k: usize| -> f64 {
        pilot
            .iter()
            .map(|s| (0..n).map(|i| (s[k][i] - center[i]) * (s[0][i] - center[i])).sum::<f64>())
            .sum::<f64>()
            / n_pilot as f64
    };
    let c0 = trace_at(0).abs();
    let mut cutoff = lags.len() - 1;
    for k in 1..lags.len() {
        if trace_at(k).abs() < 1e-3 * c0 {
            cutoff = k;
            break;
        }
    }
    let lags = &lags[..=cutoff];

    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng.derive(s as u64);
            let series = fluctuation_series(u, &spec1, lags, burn_in, max_step, &center, &mut r)?;
            let mut y = vec![0.0; n * n];
            for k in 1..lags.len() {
                let w = 0.5 * (lags[k] - lags[k - 1]);
                for i in 0..n {
                    let a = series[k][i] + series[k - 1][i];
                    for j in 0..n {
                        y[i * n + j] += w * a * series[0][j];
                    }
                }
            }
            // symmetrized, times two
            let mut sym = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    sym[i * n + j] = y[i * n + j] + y[j * n + i];
                }
            }
            Ok(sym)
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![T::zero(); n * n];
    let mut se = vec![0.0; n * n];
    for e in 0..n * n {
        let xs: Vec<f64> = per_sample.iter().map(|y| y[e]).collect();
        let (m, s) = stats::mean_se(&xs);
        mean[e] = T::lit(m);
        se[e] = s;
    }
    let mut cov = CovOperator::from_matrix(&Matrix::from_row_major(n, mean)?, CovMode::Empirical);
    cov.stderr = Some(Matrix::from_row_major(n, se)?);
    cov.meta = Some(EmpiricalMeta {
        u_fingerprint: fingerprint(u),
        n_samples,
        lag_horizon: horizon,
        cutoff_lag: *lags.last().unwrap(),
    });
    Ok(cov)
}

/// `D sqrtB xi sqrt(dt)` with `D_i = sqrt(phi1(2 lambda_i dt))`, which makes
/// the stochastic convolution exact when `sqrtB` is diagonal.
fn linear_noise<T: Scalar>(cov: &CovOperator<T>, damp: &[T], dt: T, rng: &mut RngStream) -> Vec<T> {
    let xi: Vec<T> = (0..damp.len()).map(|_| rng.normal::<T>() * dt.sqrt()).collect();
    let mut out = cov.apply_sqrt(&xi);
    for (o, &d) in out.iter_mut().zip(damp) {
        *o *= d;
    }
    out
}

fn linear_weights<T: Scalar>(spec: &SystemSpec<T>, dt: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let lam = spec.basis.eigenvalues();
    let decay = lam.iter().map(|&l| (-l * dt).exp()).collect();
    let weight = lam.iter().map(|&l| dt * phi1(l * dt)).collect();
    let damp = lam.iter().map(|&l| phi1(T::lit(2.0) * l * dt).sqrt()).collect();
    (decay, weight, damp)
}

/// Limit process `dz = [A z + fbar'(u(t)) z] dt + sqrtB dW`, `z(0) = 0`,
/// on the grid of `u_avg`.
pub fn simulate_dev_limit<T: Scalar>(
    u_avg: &PathH<T>,
    cov: &CovOperator<T>,
    spec: &SystemSpec<T>,
    rng: &mut RngStream,
) -> Result<PathH<T>> {
    let grid = *u_avg.grid();
    let dt = grid.dt();
    let (decay, weight, damp) = linear_weights(spec, dt);
    let mut z = SpectralField::zeros(spec.basis);
    let mut fields = Vec::with_capacity(grid.n_nodes());
    fields.push(z.clone());
    for k in 1..=grid.n_steps() {
        let lin = fbar_derivative(u_avg.at(k - 1), &z, spec)?;
        let noise = linear_noise(cov, &damp, dt, rng);
        for (i, c) in z.coeffs_mut().iter_mut().enumerate() {
            *c = decay[i] * *c + weight[i] * lin.coeffs()[i] + noise[i];
        }
        if !z.is_finite() {
            return Err(Error::blow_up(grid.time(k).to_f64_lossy(), "deviation limit diverged"));
        }
        fields.push(z.clone());
    }
    PathH::new(grid, fields)
}

/// `du = [A u + fbar(u)] dt + sqrt(eps) sqrtB dW`, with `sqrtB` held fixed
/// (it does not depend on `u` for the example reaction).
pub fn simulate_avg_plus_dev<T: Scalar>(
    u0: &SpectralField<T>,
    spec: &SystemSpec<T>,
    cov: &CovOperator<T>,
    grid: &TimeGrid<T>,
    rng: &mut RngStream,
) -> Result<PathH<T>> {
    let dt = grid.dt();
    let (decay, weight, damp) = linear_weights(spec, dt);
    let scale = spec.epsilon.sqrt();
    let mut u = u0.clone();
    let mut fields = Vec::with_capacity(grid.n_nodes());
    fields.push(u.clone());
    for k in 1..=grid.n_steps() {
        let f = fbar(&u, &AveragedDrift::Analytic, spec)?;
        let noise = linear_noise(cov, &damp, dt, rng);
        for (i, c) in u.coeffs_mut().iter_mut().enumerate() {
            *c = decay[i] * *c + weight[i] * f.coeffs()[i] + scale * noise[i];
        }
        if !u.is_finite() {
            return Err(Error::blow_up(grid.time(k).to_f64_lossy(), "averaged-plus-deviation model diverged"));
        }
        fields.push(u.clone());
    }
    PathH::new(*grid, fields)
}

#[derive(Clone, Debug, Serialize)]
pub struct SameNoiseRow {
    pub epsilon: f64,
    /// Mean of `rho_{0T}(u^eps, u~^eps)`.
    pub mean_gap: f64,
    pub stderr: f64,
    /// `mean_gap / sqrt(eps)`; decreasing when the gap is `o(sqrt(eps))`.
    pub ratio_to_sqrt_eps: f64,
}

/// Drives the full system and the averaged-plus-deviation model (analytic
/// `sqrtB`) with the same normals. There is no pathwise theorem behind this
/// comparison; the table is a diagnostic only.
pub fn same_noise_comparison<T: Scalar>(
    u0: &SpectralField<T>,
    spec: &SystemSpec<T>,
    epsilons: &[T],
    horizon: T,
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<SameNoiseRow>> {
    let mut rows = Vec::with_capacity(epsilons.len());
    for (e_idx, &eps) in epsilons.iter().enumerate() {
        let s = spec.with_epsilon(eps)?;
        let cov = CovOperator::analytic(&s)?;
        let grid = TimeGrid::with_max_step(horizon, s.default_dt())?;
        let dt = grid.dt();
        let stepper = Stepper::new(&s, dt)?;
        let (decay, weight, damp) = linear_weights(&s, dt);
        let scale = eps.sqrt() * dt.sqrt();
        let base = RngStream::new(seed, 0x_5a_0000 + e_idx as u64);
        let gaps: Vec<f64> = (0..n_replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = base.derive(r as u64);
                let mut full = State::slaved(u0.clone());
                let mut approx = u0.clone();
                let mut worst = T::zero();
                for _ in 0..grid.n_steps() {
                    let xi: Vec<T> = (0..s.basis.n_modes()).map(|_| rng.normal()).collect();
                    stepper.advance_with(&s, &mut full, &xi)?;
                    let f = fbar(&approx, &AveragedDrift::Analytic, &s)?;
                    let noise = cov.apply_sqrt(&xi);
                    for (i, c) in approx.coeffs_mut().iter_mut().enumerate() {
                        *c = decay[i] * *c + weight[i] * f.coeffs()[i] + scale * damp[i] * noise[i];
                    }
                    worst = worst.max(full.u.distance(&approx));
                }
                Ok(worst.to_f64_lossy())
            })
            .collect::<Result<_>>()?;
        let (m, se) = stats::mean_se(&gaps);
        let e = eps.to_f64_lossy();
        rows.push(SameNoiseRow { epsilon: e, mean_gap: m, stderr: se, ratio_to_sqrt_eps: m / e.sqrt() });
    }
    Ok(rows)
}

/// Averaged path on `grid` plus `n_replicas` draws of `z^eps(T)` and of the
/// limit `z(T)`, both as full fields.
pub fn deviation_samples<T: Scalar>(
    u0: &SpectralField<T>,
    spec: &SystemSpec<T>,
    cov: &CovOperator<T>,
    grid: &TimeGrid<T>,
    n_replicas: usize,
    seed: u64,
) -> Result<(Vec<SpectralField<T>>, Vec<SpectralField<T>>)> {
    let u_avg = solve_averaged(u0, spec, grid, &AveragedDrift::Analytic)?;
    let stepper = Stepper::new(spec, grid.dt())?;
    let scale = T::one() / spec.epsilon.sqrt();
    let full_base = RngStream::new(seed, 0x_de_0001);
    let lim_base = RngStream::new(seed, 0x_de_0002);
    let z_eps: Vec<SpectralField<T>> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = full_base.derive(r as u64);
            let mut st = State::slaved(u0.clone());
            for _ in 0..grid.n_steps() {
                stepper.advance(spec, &mut st, &mut rng)?;
            }
            let mut z = st.u;
            z.axpy(-T::one(), u_avg.last());
            Ok(z.scaled(scale))
        })
        .collect::<Result<_>>()?;
    let z_lim: Vec<SpectralField<T>> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = lim_base.derive(r as u64);
            Ok(simulate_dev_limit(&u_avg, cov, spec, &mut rng)?.last().clone())
        })
        .collect::<Result<_>>()?;
    Ok((z_eps, z_lim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_b_is_diagonal_resolvent_squared() {
        let s = SystemSpec::example(0.1, 2.0, 1.0, 6).unwrap();
        let cov = CovOperator::analytic(&s).unwrap();
        for i in 1..=6 {
            let l = (i * i) as f64;
            let q: f64 = 1.0 / l;
            assert!((cov.b()[(i - 1, i - 1)] - 4.0 * q / ((1.0 + l) * (1.0 + l))).abs() < 1e-14);
        }
        assert!(cov.b().is_diagonal(0.0));
        assert!(cov.min_eigenvalue_on(&s.q.active_modes()) > 0.0);
    }

    #[test]
    fn clipping_restores_psd() {
        let raw = Matrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let cov = CovOperator::from_matrix(&raw, CovMode::Empirical);
        assert_eq!(cov.warnings.len(), 1);
        let (w, _) = cov.b().symmetric_eigen();
        assert!(w.iter().all(|&x| x >= -1e-14));
        assert!(cov.sqrt_b().gram().sub(cov.b()).frobenius() < 1e-12);
    }

    #[test]
    fn z_path_is_linear_and_checks_grids() {
        let s = SystemSpec::<f64>::example(0.04, 1.0, 1.0, 4).unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        let a = PathH::constant(g, SpectralField::sine(s.basis, 1, 1.0));
        let b = PathH::constant(g, SpectralField::zeros(s.basis));
        assert_eq!(z_epsilon_path(&a, &a, 0.04).unwrap().sup_norm(), 0.0);
        let z = z_epsilon_path(&a, &b, 0.04).unwrap();
        let a2 = a.combine(2.0, &b, 0.0).unwrap();
        let z2 = z_epsilon_path(&a2, &b, 0.04).unwrap();
        assert!((z2.sup_norm() - 2.0 * z.sup_norm()).abs() < 1e-12);
        let other = PathH::constant(TimeGrid::new(1.0, 5).unwrap(), SpectralField::zeros(s.basis));
        assert!(z_epsilon_path(&a, &other, 0.04).is_err());
    }

    #[test]
    fn empirical_b_matches_analytic() {
        let s = SystemSpec::example(0.1, 1.0, 1.0, 4).unwrap();
        let exact = CovOperator::analytic(&s).unwrap();
        let u = SpectralField::mode(s.basis, 1);
        let est = b_empirical(&u, &s, 10.0, 2000, &RngStream::new(3, 0)).unwrap();
        let gap = est.b().sub(exact.b()).frobenius();
        assert!(gap < 3.0 * est.aggregate_se(), "gap {gap} se {}", est.aggregate_se());
        assert!(est.b().max_asymmetry() < 1e-12);
        assert!(b_empirical(&u, &s, 0.5, 2000, &RngStream::new(3, 0)).is_err());
        assert!(b_empirical(&u, &s, 10.0, 10, &RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn doubling_sigma_quadruples_b() {
        let s = SystemSpec::example(0.1, 1.0, 1.0, 3).unwrap();
        let u = SpectralField::zeros(s.basis);
        let rng = RngStream::new(5, 0);
        let b1 = b_empirical(&u, &s, 10.0, 200, &rng).unwrap();
        let b2 = b_empirical(&u, &s.with_sigma(2.0), 10.0, 200, &rng).unwrap();
        assert!(b2.b().sub(&b1.b().scaled(4.0)).frobenius() < 1e-9 * b2.b().frobenius());
    }

    #[test]
    fn limit_with_zero_noise_stays_at_zero() {
        let s = SystemSpec::example(0.1, 0.0, 1.0, 4).unwrap();
        let cov = CovOperator::analytic(&s).unwrap();
        let g = TimeGrid::new(1.0, 50).unwrap();
        let u_avg = solve_averaged(&SpectralField::sine(s.basis, 1, 1.0), &s, &g, &AveragedDrift::Analytic).unwrap();
        let z = simulate_dev_limit(&u_avg, &cov, &s, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn limit_ou_variance_at_zero_lambda() {
        let s = SystemSpec::example(0.1, 1.0, 0.0, 3).unwrap();
        let cov = CovOperator::analytic(&s).unwrap();
        let g = TimeGrid::new(4.0, 40).unwrap();
        let u_avg = PathH::constant(g, SpectralField::zeros(s.basis));
        let xs: Vec<f64> = (0..4000)
            .map(|r| {
                let mut rng = RngStream::new(11, 0).derive(r);
                simulate_dev_limit(&u_avg, &cov, &s, &mut rng).unwrap().last().coeff(1)
            })
            .collect();
        let (var, se) = stats::variance_with_se(&xs);
        // stationary drift -(lambda_1 + 1/2), B_11 = 1/4; t = 4 is past relaxation
        let target = cov.b()[(0, 0)] / 3.0;
        assert!((var - target).abs() < 3.0 * se, "{var} vs {target} ± {se}");
    }

    #[test]
    fn avg_plus_dev_without_noise_is_averaged_path() {
        let s = SystemSpec::example(0.1, 0.0, 1.3, 4).unwrap();
        let cov = CovOperator::analytic(&s).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let u0 = SpectralField::sine(s.basis, 1, 0.7);
        let a = simulate_avg_plus_dev(&u0, &s, &cov, &g, &mut RngStream::new(2, 2)).unwrap();
        let b = solve_averaged(&u0, &s, &g, &AveragedDrift::Analytic).unwrap();
        assert!(a.rho(&b).unwrap() < 1e-14);
    }

    #[test]
    fn stationary_spread_scales_like_sqrt_eps() {
        let base = SystemSpec::example(0.1, 1.0, 1.0, 3).unwrap();
        let eps = [0.1, 0.01, 0.001];
        let mut sd = Vec::new();
        for &e in &eps {
            let s = base.with_epsilon(e).unwrap();
            let cov = CovOperator::analytic(&s).unwrap();
            let g = TimeGrid::new(400.0, 8000).unwrap();
            let p = simulate_avg_plus_dev(&SpectralField::zeros(s.basis), &s, &cov, &g, &mut RngStream::new(9, 0)).unwrap();
            let xs: Vec<f64> = p.mode_series(1)[400..].to_vec();
            sd.push(stats::variance_with_se(&xs).0.sqrt());
        }
        let lx: Vec<f64> = eps.iter().map(|e: &f64| e.ln()).collect();
        let ly: Vec<f64> = sd.iter().map(|s| s.ln()).collect();
        let (slope, _) = stats::linear_fit(&lx, &ly);
        assert!((slope - 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn z_eps_is_order_one() {
        let s = SystemSpec::example(0.01, 1.0, 1.0, 4).unwrap();
        let cov = CovOperator::analytic(&s).unwrap();
        let g = TimeGrid::with_max_step(0.5, s.default_dt()).unwrap();
        let (ze, _) = deviation_samples(&SpectralField::zeros(s.basis), &s, &cov, &g, 200, 4).unwrap();
        let xs: Vec<f64> = ze.iter().map(|z| z.coeff(1)).collect();
        let sd = stats::variance_with_se(&xs).0.sqrt();
        assert!(sd > 0.1 && sd < 2.0, "sd {sd}");
    }
}
