//! Skeleton equation, the large-deviation action in its explicit and
//! infimum forms, and minimum-action paths.

use serde::Serialize;

use crate::averaging::{fbar, fbar_derivative, AveragedDrift};
use crate::deviation::CovOperator;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::path::{trapezoid, ControlPath, PathH, TimeGrid};
use crate::scalar::{phi1, Scalar};
use crate::slowfast::SystemSpec;
use crate::spectral::{apply_resolvent, SpectralField};
use crate::stochastic::RngStream;

/// Exponential-Euler solution of `phi' = A phi + fbar(phi) + sqrtB h`.
pub fn skeleton_solve<T: Scalar>(
    h: &ControlPath<T>,
    u0: &SpectralField<T>,
    cov: &CovOperator<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<PathH<T>> {
    let grid = *h.grid();
    let dt = grid.dt();
    let lam = spec.basis.eigenvalues();
    let decay: Vec<T> = lam.iter().map(|&l| (-l * dt).exp()).collect();
    let weight: Vec<T> = lam.iter().map(|&l| dt * phi1(l * dt)).collect();
    let mut phi = u0.clone();
    let mut fields = Vec::with_capacity(grid.n_nodes());
    fields.push(phi.clone());
    for k in 1..=grid.n_steps() {
        let f = fbar(&phi, drift, spec)?;
        let push = cov.apply_sqrt(h.at(k - 1).coeffs());
        for (i, c) in phi.coeffs_mut().iter_mut().enumerate() {
            *c = decay[i] * *c + weight[i] * (f.coeffs()[i] + push[i]);
        }
        if !phi.is_finite() {
            return Err(Error::blow_up(grid.time(k).to_f64_lossy(), "skeleton equation diverged"));
        }
        fields.push(phi.clone());
    }
    PathH::new(grid, fields)
}

/// Finite-difference coefficients of `phi'(t_k)`: `(node offset, weight * dt)`.
/// Centered inside, second-order one-sided at both ends.
fn derivative_stencil(k: usize, n: usize) -> [(usize, f64); 3] {
    if k == 0 {
        [(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if k == n {
        [(n, 1.5), (n - 1, -2.0), (n - 2, 0.5)]
    } else {
        [(k + 1, 0.5), (k - 1, -0.5), (k, 0.0)]
    }
}

fn check_nodes<T: Scalar>(phi: &PathH<T>) -> Result<()> {
    if phi.grid().n_steps() < 2 {
        return Err(Error::invalid("action needs at least two time steps"));
    }
    Ok(())
}

/// Finite-difference `phi'` at every node.
pub fn path_derivative<T: Scalar>(phi: &PathH<T>) -> Result<Vec<SpectralField<T>>> {
    check_nodes(phi)?;
    let n = phi.grid().n_steps();
    let inv_dt = T::one() / phi.grid().dt();
    Ok((0..=n)
        .map(|k| {
            let mut d = SpectralField::zeros(*phi.basis());
            for (m, w) in derivative_stencil(k, n) {
                if w != 0.0 {
                    d.axpy(T::lit(w) * inv_dt, phi.at(m));
                }
            }
            d
        })
        .collect())
}

/// `r_k = phi'(t_k) - A phi_k - drift(psi_k)`.
fn residuals_against<T: Scalar>(
    phi: &PathH<T>,
    psi: &PathH<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<Vec<SpectralField<T>>> {
    if phi.grid() != psi.grid() {
        return Err(Error::GridMismatch("frozen path is on a different grid".into()));
    }
    let mut r = path_derivative(phi)?;
    for (k, rk) in r.iter_mut().enumerate() {
        let f = fbar(psi.at(k), drift, spec)?;
        for (i, c) in rk.coeffs_mut().iter_mut().enumerate() {
            *c -= -spec.basis.eigenvalue(i + 1) * phi.at(k).coeffs()[i] + f.coeffs()[i];
        }
    }
    Ok(r)
}

/// Residual of the skeleton equation with `h = 0`, node by node.
pub fn residuals<T: Scalar>(phi: &PathH<T>, drift: &AveragedDrift, spec: &SystemSpec<T>) -> Result<Vec<SpectralField<T>>> {
    residuals_against(phi, phi, drift, spec)
}

fn kernel_tolerance<T: Scalar>(phi: &PathH<T>) -> T {
    T::lit(1e-8) * phi.sup_norm().max(T::one())
}

/// `1/2 int ||(I - A) (sigma sqrt(Q))^{-1} [phi' - A phi - lambda sin(phi) + (I - A)^{-1} phi]||^2 dt`
/// for the example reaction. Modes without noise must carry zero residual;
/// otherwise the action is `+inf`.
pub fn action_explicit<T: Scalar>(phi: &PathH<T>, spec: &SystemSpec<T>) -> Result<T> {
    let lambda = spec.example_lambda()?;
    let dphi = path_derivative(phi)?;
    let col = spec.collocation();
    let tol = kernel_tolerance(phi);
    let scale: Vec<Option<T>> = spec
        .basis
        .eigenvalues()
        .iter()
        .zip(spec.q.values())
        .map(|(&l, &q)| {
            let s = spec.sigma * q.sqrt();
            (s > T::zero()).then(|| (T::one() + l) / s)
        })
        .collect();
    let mut density = Vec::with_capacity(dphi.len());
    for (k, d) in dphi.iter().enumerate() {
        let p = phi.at(k);
        let sin = col.map(p, |x| lambda * x.sin());
        let res = apply_resolvent(p);
        let mut acc = T::zero();
        for i in 0..spec.basis.n_modes() {
            let lam_i = spec.basis.eigenvalue(i + 1);
            let r = d.coeffs()[i] + lam_i * p.coeffs()[i] - sin.coeffs()[i] + res.coeffs()[i];
            match scale[i] {
                Some(w) => acc += (w * r) * (w * r),
                None if r.abs() > tol => return Ok(T::infinity()),
                None => {}
            }
        }
        density.push(acc);
    }
    Ok(trapezoid(&density, phi.grid().dt()) / T::lit(2.0))
}

/// Pseudo-inverse of `sqrtB` and the projector onto its kernel.
struct SqrtInverse<T> {
    pinv: Matrix<T>,
    kernel: Option<Matrix<T>>,
}

impl<T: Scalar> SqrtInverse<T> {
    fn new(cov: &CovOperator<T>) -> Self {
        let (w, v) = cov.sqrt_b().symmetric_eigen();
        let top = w.iter().cloned().fold(T::zero(), T::max);
        let cut = top * T::lit(1e-12);
        let pinv = Matrix::spectral_map(&w, &v, |x| if x > cut { T::one() / x } else { T::zero() });
        let kernel = w
            .iter()
            .any(|&x| x <= cut)
            .then(|| Matrix::spectral_map(&w, &v, |x| if x > cut { T::zero() } else { T::one() }));
        Self { pinv, kernel }
    }

    /// `Some(sqrtB^+ r)`, or `None` if `r` leaves the range of `sqrtB`.
    fn control(&self, r: &[T], tol: T) -> Option<Vec<T>> {
        if let Some(p) = &self.kernel {
            let off = p.mul_vec(r);
            if off.iter().map(|&x| x * x).sum::<T>().sqrt() > tol {
                return None;
            }
        }
        Some(self.pinv.mul_vec(r))
    }
}

fn controls_from_residuals<T: Scalar>(
    phi: &PathH<T>,
    r: &[SpectralField<T>],
    cov: &CovOperator<T>,
) -> Result<Option<ControlPath<T>>> {
    let inv = SqrtInverse::new(cov);
    let tol = kernel_tolerance(phi);
    let mut hs = Vec::with_capacity(r.len());
    for rk in r {
        match inv.control(rk.coeffs(), tol) {
            Some(h) => hs.push(SpectralField::from_coeffs(*phi.basis(), h)?),
            None => return Ok(None),
        }
    }
    Ok(Some(ControlPath::new(*phi.grid(), hs)?))
}

/// The control `h = sqrtB^+ (phi' - A phi - fbar(phi))`, or `None` when no
/// control reproduces `phi`.
pub fn recover_control<T: Scalar>(
    phi: &PathH<T>,
    cov: &CovOperator<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<Option<ControlPath<T>>> {
    controls_from_residuals(phi, &residuals(phi, drift, spec)?, cov)
}

/// `inf { 1/2 ||h||^2 : phi = phi^h }`, `+inf` when the set is empty.
pub fn action_infimum<T: Scalar>(
    phi: &PathH<T>,
    cov: &CovOperator<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<T> {
    Ok(recover_control(phi, cov, drift, spec)?.map_or(T::infinity(), |h| h.energy()))
}

/// Action of `phi` with the drift frozen along `psi`; equals
/// [`action_infimum`] when `psi = phi`.
pub fn action_frozen<T: Scalar>(
    phi: &PathH<T>,
    psi: &PathH<T>,
    cov: &CovOperator<T>,
    drift: &AveragedDrift,
    spec: &SystemSpec<T>,
) -> Result<T> {
    let r = residuals_against(phi, psi, drift, spec)?;
    Ok(controls_from_residuals(phi, &r, cov)?.map_or(T::infinity(), |h| h.energy()))
}

/// Evaluates `action` on `phi_fn` sampled at `n`, `2n` and `4n` steps and
/// returns the finest value, or `+inf` when the value keeps growing by a
/// factor of at least 1.8 per refinement, which is how a discontinuous path
/// shows up on a grid.
pub fn action_refined<T: Scalar>(
    phi_fn: impl Fn(T) -> SpectralField<T>,
    horizon: T,
    n_steps: usize,
    action: impl Fn(&PathH<T>) -> Result<T>,
) -> Result<T> {
    let mut values = Vec::with_capacity(3);
    for f in [1, 2, 4] {
        let grid = TimeGrid::new(horizon, n_steps * f)?;
        let v = action(&PathH::from_fn(grid, &phi_fn)?)?;
        if !v.is_finite() {
            return Ok(v);
        }
        values.push(v);
    }
    let growing = values.windows(2).all(|w| w[1] >= T::lit(1.8) * w[0] && w[1] > T::zero());
    Ok(if growing { T::infinity() } else { values[2] })
}

/// Discrete functional `J = 1/2 sum_k w_k r_k^T B^+ r_k` and its gradient in
/// the interior nodes (endpoint entries are zero).
pub fn action_gradient<T: Scalar>(
    phi: &PathH<T>,
    cov: &CovOperator<T>,
    spec: &SystemSpec<T>,
) -> Result<(T, Vec<SpectralField<T>>)> {
    let bpinv = SqrtInverse::new(cov).pinv.gram();
    gradient_with(phi, &bpinv, spec)
}

fn gradient_with<T: Scalar>(
    phi: &PathH<T>,
    bpinv: &Matrix<T>,
    spec: &SystemSpec<T>,
) -> Result<(T, Vec<SpectralField<T>>)> {
    let r = residuals(phi, &AveragedDrift::Analytic, spec)?;
    let n = phi.grid().n_steps();
    let dt = phi.grid().dt();
    let basis = *phi.basis();
    let mut value = T::zero();
    let mut s = Vec::with_capacity(n + 1);
    for (k, rk) in r.iter().enumerate() {
        let w = if k == 0 || k == n { dt / T::lit(2.0) } else { dt };
        let m = bpinv.mul_vec(rk.coeffs());
        value += w * rk.coeffs().iter().zip(&m).map(|(&a, &b)| a * b).sum::<T>() / T::lit(2.0);
        s.push(SpectralField::from_coeffs(basis, m.into_iter().map(|x| x * w).collect())?);
    }
    let mut grad = vec![SpectralField::zeros(basis); n + 1];
    let inv_dt = T::one() / dt;
    for (k, sk) in s.iter().enumerate() {
        for (m, c) in derivative_stencil(k, n) {
            if c != 0.0 {
                grad[m].axpy(T::lit(c) * inv_dt, sk);
            }
        }
    }
    for m in 1..n {
        let lin = fbar_derivative(phi.at(m), &s[m], spec)?;
        let g = &mut grad[m];
        for i in 0..basis.n_modes() {
            g.coeffs_mut()[i] += spec.basis.eigenvalue(i + 1) * s[m].coeffs()[i] - lin.coeffs()[i];
        }
    }
    grad[0] = SpectralField::zeros(basis);
    grad[n] = SpectralField::zeros(basis);
    Ok((value, grad))
}

fn discrete_action<T: Scalar>(phi: &PathH<T>, bpinv: &Matrix<T>, spec: &SystemSpec<T>) -> Result<T> {
    let r = residuals(phi, &AveragedDrift::Analytic, spec)?;
    let n = r.len() - 1;
    let dt = phi.grid().dt();
    let mut v = T::zero();
    for (k, rk) in r.iter().enumerate() {
        let w = if k == 0 || k == n { dt / T::lit(2.0) } else { dt };
        let m = bpinv.mul_vec(rk.coeffs());
        v += w * rk.coeffs().iter().zip(&m).map(|(&a, &b)| a * b).sum::<T>() / T::lit(2.0);
    }
    Ok(v)
}

/// Relative error between the analytic directional derivative of the discrete
/// action and a central difference along a random interior direction.
pub fn gradient_check<T: Scalar>(
    phi: &PathH<T>,
    cov: &CovOperator<T>,
    spec: &SystemSpec<T>,
    rng: &mut RngStream,
) -> Result<T> {
    let bpinv = SqrtInverse::new(cov).pinv.gram();
    let (_, grad) = gradient_with(phi, &bpinv, spec)?;
    let n = phi.grid().n_steps();
    let mut dir = vec![SpectralField::zeros(*phi.basis()); n + 1];
    for d in dir.iter_mut().take(n).skip(1) {
        for c in d.coeffs_mut() {
            *c = rng.normal();
        }
    }
    let h = T::lit(1e-5) * phi.sup_norm().max(T::one());
    let shifted = |sign: T| -> Result<T> {
        let fields = phi.fields().iter().zip(&dir).map(|(p, d)| {
            let mut q = p.clone();
            q.axpy(sign * h, d);
            q
        });
        discrete_action(&PathH::new(*phi.grid(), fields.collect())?, &bpinv, spec)
    };
    let fd = (shifted(T::one())? - shifted(-T::one())?) / (T::lit(2.0) * h);
    let exact: T = grad.iter().zip(&dir).map(|(g, d)| g.inner(d)).sum();
    Ok((fd - exact).abs() / exact.abs().max(T::min_positive_value()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub n_steps: usize,
    pub max_iters: usize,
    /// Stop when the squared preconditioned gradient norm falls below
    /// `tol * (1 + J)`.
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { n_steps: 100, max_iters: 500, tol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult<T> {
    pub path: PathH<T>,
    pub control: Option<ControlPath<T>>,
    pub action: T,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizeSummary {
    pub action: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

impl<T: Scalar> MinimizeResult<T> {
    pub fn summary(&self) -> MinimizeSummary {
        MinimizeSummary {
            action: self.action.to_f64_lossy(),
            iterations: self.iterations,
            converged: self.converged,
            grad_norm: self.grad_norm.to_f64_lossy(),
        }
    }
}

/// Per-mode inverse Hessian of the action with the nonlinearity dropped,
/// acting on the interior nodes; used as a preconditioner.
fn mode_preconditioners<T: Scalar>(grid: &TimeGrid<T>, bpinv: &Matrix<T>, spec: &SystemSpec<T>) -> Result<Vec<Matrix<T>>> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let inv_dt = T::one() / dt;
    (0..spec.basis.n_modes())
        .map(|i| {
            let l = spec.basis.eigenvalue(i + 1);
            let c = l + T::one() / (T::one() + l);
            let wi = if bpinv[(i, i)] > T::zero() { bpinv[(i, i)] } else { T::one() };
            let mut h = Matrix::zeros(n - 1);
            for k in 0..=n {
                let w = if k == 0 || k == n { dt / T::lit(2.0) } else { dt };
                // row k of the linear residual map restricted to interior nodes
                let mut row: Vec<(usize, T)> = Vec::with_capacity(4);
                for (m, coef) in derivative_stencil(k, n) {
                    if coef != 0.0 && m >= 1 && m < n {
                        row.push((m - 1, T::lit(coef) * inv_dt));
                    }
                }
                if k >= 1 && k < n {
                    row.push((k - 1, c));
                }
                for &(a, va) in &row {
                    for &(b, vb) in &row {
                        h[(a, b)] += wi * w * va * vb;
                    }
                }
            }
            h.inverse()
        })
        .collect()
}

/// Minimum-action path between fixed endpoints over `[0, horizon]`:
/// preconditioned gradient descent with Armijo backtracking, started from
/// the straight line.
pub fn minimize_action<T: Scalar>(
    u_start: &SpectralField<T>,
    u_end: &SpectralField<T>,
    horizon: T,
    cov: &CovOperator<T>,
    spec: &SystemSpec<T>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult<T>> {
    spec.example_lambda()?;
    if opts.n_steps < 3 {
        return Err(Error::invalid("minimization needs at least three time steps"));
    }
    let grid = TimeGrid::new(horizon, opts.n_steps)?;
    let init = PathH::from_fn(grid, |t| {
        let s = t / horizon;
        let mut p = u_start.scaled(T::one() - s);
        p.axpy(s, u_end);
        p
    })?;
    minimize_from(init, cov, spec, opts)
}

/// Same as [`minimize_action`] from a given initial path; its endpoints are kept.
pub fn minimize_from<T: Scalar>(
    init: PathH<T>,
    cov: &CovOperator<T>,
    spec: &SystemSpec<T>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult<T>> {
    let grid = *init.grid();
    let n = grid.n_steps();
    let bpinv = SqrtInverse::new(cov).pinv.gram();
    let pre = mode_preconditioners(&grid, &bpinv, spec)?;
    let tol = T::lit(opts.tol);
    let mut phi = init;
    let (mut value, mut grad) = gradient_with(&phi, &bpinv, spec)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        // p = P g, mode by mode over interior nodes
        let mut dir = vec![SpectralField::zeros(spec.basis); n + 1];
        for (i, pi) in pre.iter().enumerate() {
            let gi: Vec<T> = (1..n).map(|m| grad[m].coeffs()[i]).collect();
            let pg = pi.mul_vec(&gi);
            for (m, v) in pg.into_iter().enumerate() {
                dir[m + 1].coeffs_mut()[i] = v;
            }
        }
        let decrement: T = grad.iter().zip(&dir).map(|(g, d)| g.inner(d)).sum();
        if decrement <= tol * (T::one() + value) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<SpectralField<T>> = phi
                .fields()
                .iter()
                .zip(&dir)
                .map(|(p, d)| {
                    let mut q = p.clone();
                    q.axpy(-step, d);
                    q
                })
                .collect();
            let trial = PathH::new(grid, trial)?;
            if trial.fields().iter().all(|f| f.is_finite()) {
                let v = discrete_action(&trial, &bpinv, spec)?;
                if v <= value - T::lit(1e-4) * step * decrement {
                    accepted = Some(trial);
                    break;
                }
            }
            step /= T::lit(2.0);
        }
        match accepted {
            Some(p) => {
                phi = p;
                let (v, g) = gradient_with(&phi, &bpinv, spec)?;
                value = v;
                grad = g;
            }
            None => break,
        }
    }
    let grad_norm = grad.iter().map(|g| g.norm_sq()).sum::<T>().sqrt();
    let control = controls_from_residuals(&phi, &residuals(&phi, &AveragedDrift::Analytic, spec)?, cov)?;
    Ok(MinimizeResult { path: phi, control, action: value, iterations, converged, grad_norm })
}
