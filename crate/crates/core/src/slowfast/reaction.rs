use crate::scalar::Scalar;
use crate::spectral::{Collocation, SpectralField};

/// Pointwise reaction pair `f(u, v)` (slow) and `g(u, v)` (fast).
///
/// A linear damping `-kappa v` in `g` can be folded into the fast linear
/// operator, so the integrator treats `(A - kappa) / eps` exactly and only the
/// remainder `g(u, v) + kappa v` explicitly.
pub trait Reaction<T: Scalar>: Send + Sync + std::fmt::Debug {
    fn slow(&self, u: T, v: T) -> T;

    fn fast(&self, u: T, v: T) -> T;

    fn fast_damping(&self) -> T {
        T::zero()
    }

    /// `lambda` when this is the `lambda sin u - v` / `u - v` pair, which has
    /// closed-form averaged quantities.
    fn example_lambda(&self) -> Option<T> {
        None
    }

    /// Whether `g(u, v) + kappa v` is independent of `v`, making the fast
    /// exponential update exact for frozen `u` at any step size.
    fn fast_remainder_is_v_free(&self) -> bool {
        false
    }

    /// `P_N f(u, v)` evaluated pseudo-spectrally.
    fn slow_field(&self, col: &Collocation<T>, u: &SpectralField<T>, v: &SpectralField<T>) -> SpectralField<T> {
        let uv = col.to_values(u);
        let vv = col.to_values(v);
        let values: Vec<T> = uv.iter().zip(&vv).map(|(&a, &b)| self.slow(a, b)).collect();
        col.from_values(&values)
    }

    /// `P_N [g(u, v) + kappa v]` evaluated pseudo-spectrally.
    fn fast_remainder_field(
        &self,
        col: &Collocation<T>,
        u: &SpectralField<T>,
        v: &SpectralField<T>,
    ) -> SpectralField<T> {
        let kappa = self.fast_damping();
        let uv = col.to_values(u);
        let vv = col.to_values(v);
        let values: Vec<T> = uv.iter().zip(&vv).map(|(&a, &b)| self.fast(a, b) + kappa * b).collect();
        col.from_values(&values)
    }
}

/// `f(u, v) = lambda sin u - v`, `g(u, v) = -v + u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleReaction<T> {
    pub lambda: T,
}

impl<T: Scalar> Reaction<T> for ExampleReaction<T> {
    fn slow(&self, u: T, v: T) -> T {
        self.lambda * u.sin() - v
    }

    fn fast(&self, u: T, v: T) -> T {
        u - v
    }

    fn fast_damping(&self) -> T {
        T::one()
    }

    fn example_lambda(&self) -> Option<T> {
        Some(self.lambda)
    }

    fn fast_remainder_is_v_free(&self) -> bool {
        true
    }

    fn slow_field(&self, col: &Collocation<T>, u: &SpectralField<T>, v: &SpectralField<T>) -> SpectralField<T> {
        let lambda = self.lambda;
        let mut out = col.map(u, |x| lambda * x.sin());
        out.axpy(-T::one(), v);
        out
    }

    fn fast_remainder_field(
        &self,
        _col: &Collocation<T>,
        u: &SpectralField<T>,
        _v: &SpectralField<T>,
    ) -> SpectralField<T> {
        u.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BasisSpec;

    /// Same pair as the example but without the spectral shortcuts.
    #[derive(Debug)]
    struct Plain(f64);

    impl Reaction<f64> for Plain {
        fn slow(&self, u: f64, v: f64) -> f64 {
            self.0 * u.sin() - v
        }
        fn fast(&self, u: f64, v: f64) -> f64 {
            u - v
        }
        fn fast_damping(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn shortcuts_match_pseudo_spectral_defaults() {
        let b = BasisSpec::unit_pi(6);
        let col = Collocation::new(b);
        let u = SpectralField::from_coeffs(b, vec![0.8, -0.2, 0.3, 0.0, 0.1, 0.05]).unwrap();
        let v = SpectralField::from_coeffs(b, vec![0.1, 0.4, -0.3, 0.2, 0.0, 0.01]).unwrap();
        let ex = ExampleReaction { lambda: 1.7 };
        let plain = Plain(1.7);
        assert!(ex.slow_field(&col, &u, &v).distance(&plain.slow_field(&col, &u, &v)) < 1e-13);
        assert!(ex.fast_remainder_field(&col, &u, &v).distance(&plain.fast_remainder_field(&col, &u, &v)) < 1e-13);
    }
}
