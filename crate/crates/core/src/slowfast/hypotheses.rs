//! Numeric checks of the standing assumptions on the reaction pair and noise.

use serde::Serialize;

use super::SystemSpec;
use crate::scalar::Scalar;

/// User-declared constants for the growth, dissipativity and Lipschitz bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisConstants<T> {
    pub lipschitz_f: T,
    pub lipschitz_g: T,
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// Sampled Lipschitz constant of `f` in both arguments.
    pub lipschitz_f: f64,
    /// Sampled Lipschitz constant of `g` in both arguments.
    pub lipschitz_g: f64,
    /// Lipschitz constant in `v` of `g + kappa v` after folding the damping.
    pub lipschitz_g_folded: f64,
    pub lambda_1: f64,
    /// `|f|^2 <= a x^2 + b y^2 + c` and `f x <= a x^2 + b x y + c` on the sample box.
    pub h1_growth: Option<bool>,
    /// `g(x, y) y <= -d y^2 + e x y` on the sample box.
    pub h2_dissipative: Option<bool>,
    /// `L_g < lambda_1` with the raw constant.
    pub h3_raw: bool,
    /// `L_g(folded) < lambda_1 + kappa`.
    pub h3_folded: bool,
    pub trace_q: f64,
    pub h4_trace_class: bool,
    pub sigma_nonzero: bool,
}

/// Samples the reaction on `[-radius, radius]^2` and evaluates the hypotheses.
pub fn check_hypotheses<T: Scalar>(spec: &SystemSpec<T>, radius: f64) -> HypothesisReport {
    let r = spec.reaction();
    let kappa = r.fast_damping().to_f64_lossy();
    let n = 41;
    let pts: Vec<f64> = (0..n).map(|k| -radius + 2.0 * radius * k as f64 / (n - 1) as f64).collect();
    let h = 1e-6;
    let f = |x: f64, y: f64| r.slow(T::lit(x), T::lit(y)).to_f64_lossy();
    let g = |x: f64, y: f64| r.fast(T::lit(x), T::lit(y)).to_f64_lossy();

    let mut lf: f64 = 0.0;
    let mut lg: f64 = 0.0;
    let mut lg_folded: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            let gx = (g(x + h, y) - g(x - h, y)) / (2.0 * h);
            let gy = (g(x, y + h) - g(x, y - h)) / (2.0 * h);
            lf = lf.max(fx.abs()).max(fy.abs());
            lg = lg.max(gx.abs()).max(gy.abs());
            lg_folded = lg_folded.max((gy + kappa).abs());
        }
    }
    let (h1, h2) = match spec.hypotheses {
        Some(c) => {
            let (a, b, cc, d, e) = (
                c.a.to_f64_lossy(),
                c.b.to_f64_lossy(),
                c.c.to_f64_lossy(),
                c.d.to_f64_lossy(),
                c.e.to_f64_lossy(),
            );
            let tol = 1e-12;
            let h1 = pts.iter().all(|&x| {
                pts.iter().all(|&y| {
                    let v = f(x, y);
                    v * v <= a * x * x + b * y * y + cc + tol && v * x <= a * x * x + b * x * y + cc + tol
                })
            });
            let h2 = pts
                .iter()
                .all(|&x| pts.iter().all(|&y| g(x, y) * y <= -d * y * y + e * x * y + tol));
            (Some(h1), Some(h2))
        }
        None => (None, None),
    };
    let lambda_1 = spec.basis.eigenvalue(1).to_f64_lossy();
    let trace_q = spec.q.trace().to_f64_lossy();
    HypothesisReport {
        lipschitz_f: lf,
        lipschitz_g: lg,
        lipschitz_g_folded: lg_folded,
        lambda_1,
        h1_growth: h1,
        h2_dissipative: h2,
        h3_raw: lg < lambda_1,
        h3_folded: lg_folded < lambda_1 + kappa,
        trace_q,
        h4_trace_class: trace_q.is_finite() && spec.q.values().iter().all(|&q| q >= T::zero()),
        sigma_nonzero: spec.sigma != T::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_sits_on_the_h3_boundary_until_folded() {
        let spec = SystemSpec::example(0.1_f64, 1.0, 1.2, 8).unwrap();
        let rep = check_hypotheses(&spec, 3.0);
        assert!((rep.lipschitz_f - 1.2).abs() < 1e-3);
        assert!((rep.lipschitz_g - 1.0).abs() < 1e-6);
        assert!(!rep.h3_raw);
        assert!(rep.h3_folded);
        assert!(rep.lipschitz_g_folded < 1e-6);
        assert!(rep.h4_trace_class);
        assert!(rep.h1_growth.is_none());
    }

    #[test]
    fn declared_constants_are_checked() {
        // |sin x - y|^2 <= 2 + 2 y^2 holds, but f x = x sin x - x y cannot be
        // dominated by a x^2 + b x y + c with b > 0 (take x = 1, y -> -inf)
        let spec = SystemSpec::example(0.1_f64, 1.0, 1.0, 4).unwrap().with_hypotheses(HypothesisConstants {
            lipschitz_f: 1.0,
            lipschitz_g: 1.0,
            a: 1.0,
            b: 2.0,
            c: 2.0,
            d: 1.0,
            e: 1.0,
        });
        let rep = check_hypotheses(&spec, 3.0);
        assert_eq!(rep.h1_growth, Some(false));
        assert_eq!(rep.h2_dissipative, Some(true));
        let tight = spec.with_hypotheses(HypothesisConstants { d: 1.5, ..spec.hypotheses.unwrap() });
        assert_eq!(check_hypotheses(&tight, 3.0).h2_dissipative, Some(false));
    }
}
