//! Exact rational coefficients of the amplitude equations and the slow and
//! fast fields on the stochastic superslow manifold near `lambda = 3/2`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use serde::Serialize;

pub type Rational = BigRational;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Which amplitude model: the full slow-fast system or its averaged-plus-deviation version.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    SlowFast,
    Averaged,
}

/// Every rational in the amplitude SDEs and the manifold fields.
///
/// Drift: `l'(1 + lin_eps eps) a - (cubic + cubic_lambda l' + cubic_eps eps) a^3 + quintic a^5`,
/// with the `_eps` terms present only in the slow-fast model.
/// Additive noise: `-sqrt(eps) sigma [(noise1 + noise1_eps eps) dW1 + noise3 a^2 dW3]`.
/// Quadratic noise: `eps sigma^2 a [quad22 dW2 Z2 + quad13 dW1 Z3 + quad33 dW3 Z3]`, where
/// `Z_k` is the rate-`k` filter of `dW_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmCoefficients {
    pub critical_lambda: Rational,
    pub attraction_rate: Rational,
    pub lin_eps: Rational,
    pub cubic: Rational,
    pub cubic_lambda: Rational,
    pub cubic_eps: Rational,
    pub quintic: Rational,
    pub noise1: Rational,
    pub noise1_eps: Rational,
    pub noise3: Rational,
    pub quad22: Rational,
    pub quad13: Rational,
    pub quad33: Rational,
    /// Slow filter rates acting on `dW2`, `dW3`.
    pub slow_rate2: Rational,
    pub slow_rate3: Rational,
    /// Slow field: `a sin x + u_cubic3 a^3 sin 3x + u_fast1 sqrt(eps) sigma sin x Zf1
    /// - sqrt(eps) sigma [u_mode2 sin 2x (Z2 - Zf2) + u_mode3 sin 3x (Z3 - Zf3)]`
    /// (the averaged model drops every `Zf` term).
    pub u_cubic3: Rational,
    pub u_fast1: Rational,
    pub u_mode2: Rational,
    pub u_mode3: Rational,
    /// Fast field: `v_lin a sin x + v_cubic3 a^3 sin 3x + sigma / sqrt(eps) sum_k sin kx
    /// [(1 + v_eps_k eps) Zf_k - v_eps_k eps Z_k + v_sq_k Zf_k Zf_k]`, with no slow
    /// filter term for `k = 1`.
    pub v_lin: Rational,
    pub v_cubic3: Rational,
    pub v_eps: [Rational; 3],
    pub v_sq: [Rational; 3],
}

impl Default for SsmCoefficients {
    fn default() -> Self {
        Self {
            critical_lambda: r(3, 2),
            attraction_rate: r(27, 10),
            lin_eps: r(1, 4),
            cubic: r(3, 16),
            cubic_lambda: r(1, 8),
            cubic_eps: r(3, 64),
            quintic: r(91, 9728),
            noise1: r(1, 2),
            noise1_eps: r(1, 8),
            noise3: r(3, 1216),
            quad22: r(-1, 180),
            quad13: r(3, 1216),
            quad33: r(-3, 6080),
            slow_rate2: r(2, 1),
            slow_rate3: r(3, 1),
            u_cubic3: r(5, 608),
            u_fast1: r(1, 2),
            u_mode2: r(1, 5),
            u_mode3: r(1, 10),
            v_lin: r(1, 2),
            v_cubic3: r(1, 1216),
            v_eps: [r(1, 4), r(1, 25), r(1, 100)],
            v_sq: [r(1, 2), r(1, 5), r(1, 10)],
        }
    }
}

/// One named entry of the printed coefficient table.
#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub name: &'static str,
    pub exact: String,
    pub value: f64,
}

impl SsmCoefficients {
    /// All coefficients with their exact `p/q` form.
    pub fn ledger(&self) -> Vec<LedgerEntry> {
        let mut out = Vec::new();
        let mut push = |name: &'static str, q: &Rational| {
            out.push(LedgerEntry { name, exact: q.to_string(), value: q.to_f64().unwrap_or(f64::NAN) })
        };
        push("critical_lambda", &self.critical_lambda);
        push("attraction_rate", &self.attraction_rate);
        push("lin_eps", &self.lin_eps);
        push("cubic", &self.cubic);
        push("cubic_lambda", &self.cubic_lambda);
        push("cubic_eps", &self.cubic_eps);
        push("quintic", &self.quintic);
        push("noise1", &self.noise1);
        push("noise1_eps", &self.noise1_eps);
        push("noise3", &self.noise3);
        push("quad22", &self.quad22);
        push("quad13", &self.quad13);
        push("quad33", &self.quad33);
        push("slow_rate2", &self.slow_rate2);
        push("slow_rate3", &self.slow_rate3);
        push("u_cubic3", &self.u_cubic3);
        push("u_fast1", &self.u_fast1);
        push("u_mode2", &self.u_mode2);
        push("u_mode3", &self.u_mode3);
        push("v_lin", &self.v_lin);
        push("v_cubic3", &self.v_cubic3);
        for (name, q) in ["v_eps1", "v_eps2", "v_eps3"].into_iter().zip(&self.v_eps) {
            push(name, q);
        }
        for (name, q) in ["v_sq1", "v_sq2", "v_sq3"].into_iter().zip(&self.v_sq) {
            push(name, q);
        }
        out
    }

    /// Deterministic drift in exact arithmetic.
    pub fn drift_exact(&self, model: Model, a: &Rational, lambda_p: &Rational, eps: &Rational) -> Rational {
        let (lin_eps, cubic_eps) = match model {
            Model::SlowFast => (self.lin_eps.clone() * eps, self.cubic_eps.clone() * eps),
            Model::Averaged => (Rational::zero(), Rational::zero()),
        };
        let one = Rational::from_integer(BigInt::from(1));
        let a2 = a * a;
        let a3 = &a2 * a;
        let a5 = &a3 * &a2;
        lambda_p * (one + lin_eps) * a - (self.cubic.clone() + &self.cubic_lambda * lambda_p + cubic_eps) * a3
            + &self.quintic * a5
    }

    /// Coefficient of `-sqrt(eps) sigma dW1`.
    pub fn noise1_exact(&self, model: Model, eps: &Rational) -> Rational {
        match model {
            Model::SlowFast => self.noise1.clone() + &self.noise1_eps * eps,
            Model::Averaged => self.noise1.clone(),
        }
    }

    /// Polynomial coefficients `(c1, c3, c5)` of the drift `c1 a - c3 a^3 + c5 a^5` in `f64`.
    pub fn drift_poly(&self, model: Model, lambda_p: f64, eps: f64) -> (f64, f64, f64) {
        let f = |q: &Rational| q.to_f64().unwrap_or(f64::NAN);
        let e = if model == Model::SlowFast { eps } else { 0.0 };
        (
            lambda_p * (1.0 + f(&self.lin_eps) * e),
            f(&self.cubic) + f(&self.cubic_lambda) * lambda_p + f(&self.cubic_eps) * e,
            f(&self.quintic),
        )
    }
}

/// Converts an `f64` to the rational it represents exactly.
pub fn exact(x: f64) -> Rational {
    Rational::from_f64(x).unwrap_or_else(Rational::zero)
}

/// Slow-fast minus averaged drift at the same amplitude, evaluated exactly and
/// rounded once.
pub fn drift_difference(a: f64, lambda_p: f64, eps: f64) -> f64 {
    let c = SsmCoefficients::default();
    let (a, l, e) = (exact(a), exact(lambda_p), exact(eps));
    let d = c.drift_exact(Model::SlowFast, &a, &l, &e) - c.drift_exact(Model::Averaged, &a, &l, &e);
    d.to_f64().unwrap_or(f64::NAN)
}

/// Smallest positive root of `c1 - c3 s + c5 s^2` in `s = a^2`, i.e. the
/// nontrivial deterministic fixed point nearest the pitchfork.
pub fn fixed_point(model: Model, lambda_p: f64, eps: f64) -> Option<f64> {
    let (c1, c3, c5) = SsmCoefficients::default().drift_poly(model, lambda_p, eps);
    if c1 <= 0.0 {
        return None;
    }
    let disc = c3 * c3 - 4.0 * c5 * c1;
    if disc < 0.0 {
        return None;
    }
    // stable form of the smaller root
    let s = 2.0 * c1 / (c3 + disc.sqrt());
    Some(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;

    #[test]
    fn ledger_matches_literal_values() {
        let c = SsmCoefficients::default();
        let expected = [
            ("critical_lambda", "3/2"),
            ("attraction_rate", "27/10"),
            ("lin_eps", "1/4"),
            ("cubic", "3/16"),
            ("cubic_lambda", "1/8"),
            ("cubic_eps", "3/64"),
            ("quintic", "91/9728"),
            ("noise1", "1/2"),
            ("noise1_eps", "1/8"),
            ("noise3", "3/1216"),
            ("quad22", "-1/180"),
            ("quad13", "3/1216"),
            ("quad33", "-3/6080"),
            ("slow_rate2", "2"),
            ("slow_rate3", "3"),
            ("u_cubic3", "5/608"),
            ("u_fast1", "1/2"),
            ("u_mode2", "1/5"),
            ("u_mode3", "1/10"),
            ("v_lin", "1/2"),
            ("v_cubic3", "1/1216"),
            ("v_eps1", "1/4"),
            ("v_eps2", "1/25"),
            ("v_eps3", "1/100"),
            ("v_sq1", "1/2"),
            ("v_sq2", "1/5"),
            ("v_sq3", "1/10"),
        ];
        let ledger = c.ledger();
        assert_eq!(ledger.len(), expected.len());
        for (entry, (name, value)) in ledger.iter().zip(expected) {
            assert_eq!(entry.name, name);
            assert_eq!(entry.exact, value, "{name}");
        }
    }

    #[test]
    fn drift_difference_is_exactly_order_eps() {
        let c = SsmCoefficients::default();
        let mut rng = RngStream::new(2024, 0);
        for _ in 0..100 {
            let mut q = || r((rng.uniform() * 2000.0) as i64 - 1000, 1 + (rng.uniform() * 999.0) as i64);
            let (a, l, e) = (q(), q(), q());
            let d = c.drift_exact(Model::SlowFast, &a, &l, &e) - c.drift_exact(Model::Averaged, &a, &l, &e);
            let expect = &e * (&l * &a / r(4, 1) - r(3, 64) * &a * &a * &a);
            assert_eq!(d, expect);
            let dn = c.noise1_exact(Model::SlowFast, &e) - c.noise1_exact(Model::Averaged, &e);
            assert_eq!(dn, &e * r(1, 8));
        }
    }

    #[test]
    fn drift_difference_examples() {
        assert_eq!(drift_difference(0.7, 0.1, 0.0), 0.0);
        assert!((drift_difference(1.0, 0.1, 0.01) + 2.1875e-4).abs() < 1e-18);
        let (l, e) = (0.1, 0.05);
        for k in 0..=200 {
            let a = -1.0 + k as f64 / 100.0;
            assert!(drift_difference(a, l, e).abs() <= e * (l / 4.0 + 3.0 / 64.0) + 1e-18);
        }
    }

    #[test]
    fn pitchfork_is_critical_at_three_halves() {
        let c = SsmCoefficients::default();
        assert_eq!(c.critical_lambda, r(3, 2));
        let zero = Rational::zero();
        // linear coefficient at eps = 0 is exactly lambda'
        let h = r(1, 1_000_000);
        let slope = |l: &Rational| c.drift_exact(Model::SlowFast, &h, l, &zero) / &h;
        assert!(slope(&r(-1, 1000)) < zero);
        assert!(slope(&r(1, 1000)) > zero);
        assert_eq!(c.drift_exact(Model::SlowFast, &h, &zero, &zero).to_f64().unwrap().signum(), -1.0);
    }

    #[test]
    fn fixed_points() {
        let a = fixed_point(Model::Averaged, 0.1, 0.0).unwrap();
        let (c1, c3, c5) = SsmCoefficients::default().drift_poly(Model::Averaged, 0.1, 0.0);
        assert!((c1 * a - c3 * a.powi(3) + c5 * a.powi(5)).abs() < 1e-14);
        assert!((a - (1.6_f64 / 3.0).sqrt()).abs() < 0.02);
        assert!(fixed_point(Model::SlowFast, -0.1, 0.05).is_none());
        assert_eq!(fixed_point(Model::SlowFast, 0.1, 0.0), fixed_point(Model::Averaged, 0.1, 0.0));
    }
}
