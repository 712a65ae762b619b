//! Sine-spectral fields on `(0, L)` with homogeneous Dirichlet conditions.
//!
//! A field is stored through its coefficients on the orthonormal eigenbasis
//! `e_i(x) = sqrt(2/L) sin(i pi x / L)` of `A = d^2/dx^2`, with
//! `-A e_i = lambda_i e_i` and `lambda_i = (i pi / L)^2`. Every operator here is
//! diagonal in that basis; nonlinear pointwise maps go through a
//! [`Collocation`] grid.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Domain length and spectral truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisSpec<T> {
    length: T,
    n_modes: usize,
}

impl<T: Scalar> BasisSpec<T> {
    pub fn new(length: T, n_modes: usize) -> Result<Self> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::invalid(format!("domain length must be positive, got {length}")));
        }
        if n_modes == 0 {
            return Err(Error::invalid("spectral truncation must keep at least one mode"));
        }
        Ok(Self { length, n_modes })
    }

    /// Domain `(0, pi)`, so that `lambda_i = i^2`.
    pub fn unit_pi(n_modes: usize) -> Self {
        Self::new(T::PI(), n_modes).expect("pi is a valid length")
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// `lambda_i` for the 1-based mode number `i`.
    pub fn eigenvalue(&self, i: usize) -> T {
        let k = T::from_usize_lossy(i) * T::PI() / self.length;
        k * k
    }

    /// All `lambda_i`, `i = 1..=N`, in storage order.
    pub fn eigenvalues(&self) -> Vec<T> {
        (1..=self.n_modes).map(|i| self.eigenvalue(i)).collect()
    }

    /// Value of `e_i(x)` for the 1-based mode number `i`.
    pub fn basis_function(&self, i: usize, x: T) -> T {
        (T::lit(2.0) / self.length).sqrt() * (T::from_usize_lossy(i) * T::PI() * x / self.length).sin()
    }

    /// Coefficient of `sin(k pi x / L)` expressed on `e_k`: `sqrt(L/2)`.
    pub fn sine_scale(&self) -> T {
        (self.length / T::lit(2.0)).sqrt()
    }
}

/// Coefficient vector of a field in the Dirichlet sine basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    coeffs: Vec<T>,
    basis: BasisSpec<T>,
}

impl<T: Scalar> SpectralField<T> {
    pub fn zeros(basis: BasisSpec<T>) -> Self {
        Self { coeffs: vec![T::zero(); basis.n_modes()], basis }
    }

    pub fn from_coeffs(basis: BasisSpec<T>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != basis.n_modes() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                basis.n_modes(),
                coeffs.len()
            )));
        }
        Ok(Self { coeffs, basis })
    }

    /// The unit basis vector `e_i` (1-based).
    pub fn mode(basis: BasisSpec<T>, i: usize) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[i - 1] = T::one();
        f
    }

    /// The field `amplitude * sin(i pi x / L)`.
    pub fn sine(basis: BasisSpec<T>, i: usize, amplitude: T) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[i - 1] = amplitude * basis.sine_scale();
        f
    }

    pub fn basis(&self) -> &BasisSpec<T> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient on `e_i` (1-based).
    pub fn coeff(&self, i: usize) -> T {
        self.coeffs[i - 1]
    }

    /// Amplitude of `sin(i pi x / L)`.
    pub fn sine_amplitude(&self, i: usize) -> T {
        self.coeffs[i - 1] / self.basis.sine_scale()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn norm_sq(&self) -> T {
        self.coeffs.iter().map(|&c| c * c).sum()
    }

    /// `||u||_0` by Parseval.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `||u||_alpha = ||(-A)^{alpha/2} u||_0`.
    pub fn norm_alpha(&self, alpha: T) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| self.basis.eigenvalue(k + 1).powf(alpha) * c * c)
            .sum::<T>()
            .sqrt()
    }

    pub fn inner(&self, other: &Self) -> T {
        self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a * b).sum()
    }

    pub fn distance(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        self.map_modes(|_, c| alpha * c)
    }

    /// Applies `g(lambda_i, c_i)` to every coefficient.
    pub fn map_modes(&self, mut g: impl FnMut(T, T) -> T) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| g(self.basis.eigenvalue(k + 1), c))
            .collect();
        Self { coeffs, basis: self.basis }
    }

    /// Evaluates the truncated sine series at `x`.
    pub fn evaluate(&self, x: T) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * self.basis.basis_function(k + 1, x))
            .sum()
    }
}

impl<'a, T: Scalar> Add for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn add(self, rhs: Self) -> SpectralField<T> {
        let mut out = self.clone();
        out.axpy(T::one(), rhs);
        out
    }
}

impl<'a, T: Scalar> Sub for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn sub(self, rhs: Self) -> SpectralField<T> {
        let mut out = self.clone();
        out.axpy(-T::one(), rhs);
        out
    }
}

impl<'a, T: Scalar> Mul<T> for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn mul(self, rhs: T) -> SpectralField<T> {
        self.scaled(rhs)
    }
}

impl<'a, T: Scalar> Neg for &'a SpectralField<T> {
    type Output = SpectralField<T>;
    fn neg(self) -> SpectralField<T> {
        self.scaled(-T::one())
    }
}

/// `coeffs_i = int_0^L f(x) e_i(x) dx` by composite Simpson on `8N + 1` points.
pub fn project<T: Scalar>(f: impl Fn(T) -> T, basis: BasisSpec<T>) -> Result<SpectralField<T>> {
    let intervals = 8 * basis.n_modes();
    let h = basis.length() / T::from_usize_lossy(intervals);
    let mut coeffs = vec![T::zero(); basis.n_modes()];
    for j in 0..=intervals {
        let x = T::from_usize_lossy(j) * h;
        let w = if j == 0 || j == intervals {
            T::one()
        } else if j % 2 == 1 {
            T::lit(4.0)
        } else {
            T::lit(2.0)
        };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::invalid(format!("integrand not finite at x = {x}")));
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += w * fx * basis.basis_function(k + 1, x);
        }
    }
    for c in coeffs.iter_mut() {
        *c *= h / T::lit(3.0);
        if !c.is_finite() {
            return Err(Error::invalid("projection produced a non-finite coefficient"));
        }
    }
    SpectralField::from_coeffs(basis, coeffs)
}

/// `A u`: `c_i <- -lambda_i c_i`.
pub fn apply_a<T: Scalar>(u: &SpectralField<T>) -> SpectralField<T> {
    u.map_modes(|lam, c| -lam * c)
}

/// `(I - A)^{-1} u`: `c_i <- c_i / (1 + lambda_i)`.
pub fn apply_resolvent<T: Scalar>(u: &SpectralField<T>) -> SpectralField<T> {
    u.map_modes(|lam, c| c / (T::one() + lam))
}

/// `(I - A) u`.
pub fn apply_i_minus_a<T: Scalar>(u: &SpectralField<T>) -> SpectralField<T> {
    u.map_modes(|lam, c| (T::one() + lam) * c)
}

/// `e^{A t} u` for `t >= 0`.
pub fn semigroup_apply<T: Scalar>(u: &SpectralField<T>, t: T) -> Result<SpectralField<T>> {
    if !(t >= T::zero()) {
        return Err(Error::invalid(format!("semigroup time must be nonnegative, got {t}")));
    }
    Ok(u.map_modes(|lam, c| (-lam * t).exp() * c))
}

/// Interior collocation grid `x_j = j L / (M + 1)`, `j = 1..=M`, with `M = 4N`.
///
/// The discrete sine transform on this grid is exactly orthogonal for modes up
/// to `M`, so mapping back to the `N` retained modes de-aliases by truncation.
#[derive(Debug)]
pub struct Collocation<T> {
    basis: BasisSpec<T>,
    n_points: usize,
    /// `table[j * N + k] = e_{k+1}(x_j)`
    table: Vec<T>,
    weight: T,
}

impl<T: Scalar> Collocation<T> {
    pub fn new(basis: BasisSpec<T>) -> Arc<Self> {
        let n = basis.n_modes();
        let m = 4 * n;
        let norm = (T::lit(2.0) / basis.length()).sqrt();
        let denom = T::from_usize_lossy(m + 1);
        let mut table = Vec::with_capacity(m * n);
        for j in 1..=m {
            for i in 1..=n {
                let arg = T::PI() * T::from_usize_lossy(i * j) / denom;
                table.push(norm * arg.sin());
            }
        }
        Arc::new(Self { basis, n_points: m, table, weight: basis.length() / denom })
    }

    pub fn basis(&self) -> &BasisSpec<T> {
        &self.basis
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn points(&self) -> Vec<T> {
        let denom = T::from_usize_lossy(self.n_points + 1);
        (1..=self.n_points)
            .map(|j| T::from_usize_lossy(j) * self.basis.length() / denom)
            .collect()
    }

    /// Grid values of the field, written into `out` (length `M`).
    pub fn to_values_into(&self, coeffs: &[T], out: &mut [T]) {
        let n = self.basis.n_modes();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.table[j * n..(j + 1) * n];
            *o = row.iter().zip(coeffs).map(|(&s, &c)| s * c).sum();
        }
    }

    pub fn to_values(&self, u: &SpectralField<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_points];
        self.to_values_into(u.coeffs(), &mut out);
        out
    }

    /// Discrete projection of grid values onto the retained modes.
    pub fn from_values_into(&self, values: &[T], out: &mut [T]) {
        let n = self.basis.n_modes();
        out.iter_mut().for_each(|c| *c = T::zero());
        for (j, &g) in values.iter().enumerate() {
            let row = &self.table[j * n..(j + 1) * n];
            for (c, &s) in out.iter_mut().zip(row) {
                *c += g * s;
            }
        }
        out.iter_mut().for_each(|c| *c *= self.weight);
    }

    pub fn from_values(&self, values: &[T]) -> SpectralField<T> {
        let mut coeffs = vec![T::zero(); self.basis.n_modes()];
        self.from_values_into(values, &mut coeffs);
        SpectralField { coeffs, basis: self.basis }
    }

    /// Pseudo-spectral `P_N[g(u)]`.
    pub fn map(&self, u: &SpectralField<T>, g: impl Fn(T) -> T) -> SpectralField<T> {
        let values: Vec<T> = self.to_values(u).into_iter().map(g).collect();
        self.from_values(&values)
    }

    /// Pseudo-spectral `P_N[w(u) * y]`, the Galerkin multiplication operator
    /// with weight `w(u(x))` applied to `y`. Symmetric in its action on `y`.
    pub fn multiply(&self, u: &SpectralField<T>, w: impl Fn(T) -> T, y: &SpectralField<T>) -> SpectralField<T> {
        let uv = self.to_values(u);
        let yv = self.to_values(y);
        let prod: Vec<T> = uv.into_iter().zip(yv).map(|(a, b)| w(a) * b).collect();
        self.from_values(&prod)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize) -> BasisSpec<f64> {
        BasisSpec::unit_pi(n)
    }

    #[test]
    fn eigenvalues_are_squares_on_pi() {
        let b = basis(5);
        let lam = b.eigenvalues();
        assert!(lam.windows(2).all(|w| w[1] > w[0]));
        for i in 1..=5 {
            assert!((b.eigenvalue(i) - (i * i) as f64).abs() < 1e-12);
        }
        let b2 = BasisSpec::new(2.0_f64, 3).unwrap();
        assert!((b2.eigenvalue(2) - (std::f64::consts::PI).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_basis() {
        assert!(BasisSpec::new(0.0_f64, 3).is_err());
        assert!(BasisSpec::new(1.0_f64, 0).is_err());
        assert!(BasisSpec::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn project_sin_is_first_mode() {
        let u = project(|x: f64| x.sin(), basis(6)).unwrap();
        assert!((u.coeff(1) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-8);
        for i in 2..=6 {
            assert!(u.coeff(i).abs() < 1e-10);
        }
        let z = project(|_x: f64| 0.0, basis(4)).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn project_rejects_non_finite() {
        assert!(project(|x: f64| 1.0 / (x - x), basis(2)).is_err());
    }

    #[test]
    fn project_parabola_against_fine_quadrature() {
        let b = basis(3);
        let f = |x: f64| x * (std::f64::consts::PI - x);
        let u = project(f, b).unwrap();
        // independent oracle: composite midpoint rule at 10x the resolution
        let m = 10 * (8 * 3);
        let h = std::f64::consts::PI / m as f64;
        for i in 1..=3 {
            let oracle: f64 = (0..m)
                .map(|j| {
                    let x = (j as f64 + 0.5) * h;
                    f(x) * (2.0 / std::f64::consts::PI).sqrt() * (i as f64 * x).sin() * h
                })
                .sum();
            assert!((u.coeff(i) - oracle).abs() < 1e-4, "mode {i}: {} vs {oracle}", u.coeff(i));
        }
        assert!(u.coeff(2).abs() < 1e-12);
    }

    #[test]
    fn apply_a_examples() {
        let b = basis(4);
        let e1 = SpectralField::mode(b, 1);
        assert_eq!(apply_a(&e1).coeffs(), &[-1.0, 0.0, 0.0, 0.0]);
        let u = SpectralField::from_coeffs(b, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(apply_a(&u).coeffs(), &[-1.0, -4.0, 0.0, 0.0]);
        assert!(apply_a(&SpectralField::zeros(b)).coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn resolvent_examples() {
        let b = basis(4);
        assert_eq!(apply_resolvent(&SpectralField::mode(b, 1)).coeff(1), 0.5);
        assert!((apply_resolvent(&SpectralField::mode(b, 3)).coeff(3) - 0.1).abs() < 1e-15);
        let u = SpectralField::from_coeffs(b, vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let back = apply_resolvent(&apply_i_minus_a(&u));
        assert!(back.distance(&u) < 1e-12);
    }

    #[test]
    fn semigroup_examples() {
        let b = basis(3);
        let u = SpectralField::from_coeffs(b, vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(semigroup_apply(&u, 0.0).unwrap(), u);
        let e1 = semigroup_apply(&SpectralField::mode(b, 1), 1.0).unwrap();
        assert!((e1.coeff(1) - (-1.0_f64).exp()).abs() < 1e-15);
        assert!(semigroup_apply(&u, -0.1).is_err());
    }

    #[test]
    fn collocation_roundtrip_is_exact_on_retained_modes() {
        let b = basis(7);
        let col = Collocation::new(b);
        let u = SpectralField::from_coeffs(b, vec![0.4, -0.1, 0.9, 0.0, 0.2, -0.3, 0.05]).unwrap();
        let back = col.from_values(&col.to_values(&u));
        assert!(back.distance(&u) < 1e-13);
        let x = col.points()[5];
        assert!((col.to_values(&u)[5] - u.evaluate(x)).abs() < 1e-13);
    }

    #[test]
    fn collocation_sine_of_small_field_matches_cubic_expansion() {
        // sin(a sin x) ~ a sin x - a^3 sin^3 x / 6, and sin^3 = (3 sin x - sin 3x)/4
        let b = basis(8);
        let col = Collocation::new(b);
        let a = 1e-2;
        let u = SpectralField::sine(b, 1, a);
        let s = col.map(&u, f64::sin);
        let expect1 = a - a * a * a / 8.0;
        assert!((s.sine_amplitude(1) - expect1).abs() < 1e-9);
        assert!((s.sine_amplitude(3) - a * a * a / 24.0).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let b = BasisSpec::<f32>::unit_pi(4);
        let u = SpectralField::from_coeffs(b, vec![1.0, 2.0, 0.0, -1.0]).unwrap();
        assert!((apply_resolvent(&u).coeff(2) - 0.4).abs() < 1e-6);
        assert!((u.norm() - 6.0_f32.sqrt()).abs() < 1e-6);
    }
}
