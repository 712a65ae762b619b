//! Monte-Carlo hit rates of a tube around a path, against the action bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::path::PathH;
use crate::slowfast::{State, Stepper, SystemSpec};
use crate::spectral::SpectralField;
use crate::stats::wilson_interval;
use crate::stochastic::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct LdpProbeOptions {
    pub delta: f64,
    pub gamma: f64,
    /// Strictly decreasing, none below `min_epsilon`.
    pub epsilons: Vec<f64>,
    pub n_replicas: usize,
    pub min_epsilon: f64,
    /// The full system runs at `dt <= eps / steps_per_epsilon`.
    pub steps_per_epsilon: usize,
    pub confidence: f64,
}

impl LdpProbeOptions {
    pub fn new(delta: f64, gamma: f64, epsilons: Vec<f64>, n_replicas: usize) -> Self {
        Self { delta, gamma, epsilons, n_replicas, min_epsilon: 0.02, steps_per_epsilon: 20, confidence: 0.95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdpRow {
    pub epsilon: f64,
    pub hits: u64,
    pub n: u64,
    pub p_hat: f64,
    pub p_low: f64,
    pub p_high: f64,
    /// `eps ln p_hat`; `-inf` without hits.
    pub eps_log_p: f64,
    /// Delta-method standard error of `eps ln p_hat`.
    pub eps_log_p_se: f64,
    /// `eps ln p_high`, the only usable number when there are no hits.
    pub eps_log_p_upper: f64,
    /// `-(I + gamma)`.
    pub lower_bound: f64,
    /// `-(I - gamma)`.
    pub upper_reference: f64,
    pub above_lower_bound: bool,
    pub out_of_reach: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LdpTable {
    pub action: f64,
    pub delta: f64,
    pub gamma: f64,
    pub rows: Vec<LdpRow>,
    /// Every reachable row satisfies `eps ln p_hat >= -(I + gamma)`.
    pub lower_bound_holds: bool,
    /// `eps ln p_hat` falls from the largest to the smallest reachable `eps`
    /// with no step up larger than three standard errors.
    pub decreasing_trend: bool,
    /// The gap `|eps ln p_hat + I|` shrinks from the largest to the smallest
    /// reachable `eps`, with no step up larger than three standard errors.
    pub trend_toward_action: bool,
    pub all_out_of_reach: bool,
}

/// Whether one trajectory of the full system stays within `delta` of `phi`
/// in the sup-in-time `H` distance. `phi` is linearly interpolated between
/// its nodes; the run stops at the first exit.
fn stays_in_tube(
    phi: &PathH<f64>,
    v0: &SpectralField<f64>,
    spec: &SystemSpec<f64>,
    stepper: &Stepper<f64>,
    substeps: usize,
    delta: f64,
    rng: &mut RngStream,
) -> Result<bool> {
    let mut st = State::new(phi.at(0).clone(), v0.clone())?;
    let mut target = phi.at(0).clone();
    for k in 0..phi.grid().n_steps() {
        let (a, b) = (phi.at(k), phi.at(k + 1));
        for j in 1..=substeps {
            match stepper.advance(spec, &mut st, rng) {
                Ok(()) => {}
                Err(Error::BlowUp { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
            let w = j as f64 / substeps as f64;
            for ((t, &x), &y) in target.coeffs_mut().iter_mut().zip(a.coeffs()).zip(b.coeffs()) {
                *t = (1.0 - w) * x + w * y;
            }
            if st.u.distance(&target) > delta {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Estimates `P{ rho_{0T}(u^eps, phi) <= delta }` at each `eps`, starting the
/// slow field at `phi(0)` and the fast field slaved to it.
pub fn ldp_probe(
    phi: &PathH<f64>,
    action: f64,
    opts: &LdpProbeOptions,
    spec: &SystemSpec<f64>,
    rng: &RngStream,
) -> Result<LdpTable> {
    if !action.is_finite() || action < 0.0 {
        return Err(Error::invalid(format!("the action of the probed path must be finite, got {action}")));
    }
    if !(opts.delta > 0.0) || !(opts.gamma > 0.0) || opts.n_replicas == 0 {
        return Err(Error::invalid("delta, gamma and the replica count must be positive"));
    }
    if opts.epsilons.is_empty() || opts.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("epsilon list must be nonempty and strictly decreasing"));
    }
    if let Some(&e) = opts.epsilons.iter().find(|&&e| e < opts.min_epsilon) {
        return Err(Error::invalid(format!("eps = {e} is below the Monte-Carlo cap {}", opts.min_epsilon)));
    }
    let v0 = State::slaved(phi.at(0).clone()).v;
    let mut rows = Vec::with_capacity(opts.epsilons.len());
    for (e_idx, &eps) in opts.epsilons.iter().enumerate() {
        let s = spec.with_epsilon(eps)?;
        let target_dt = eps / opts.steps_per_epsilon as f64;
        let substeps = (phi.grid().dt() / target_dt).ceil().max(1.0) as usize;
        let stepper = Stepper::new(&s, phi.grid().dt() / substeps as f64)?;
        let base = rng.derive(0x_1d_0000 + e_idx as u64);
        let outcomes: Vec<bool> = (0..opts.n_replicas)
            .into_par_iter()
            .map(|r| {
                let mut g = base.derive(r as u64);
                stays_in_tube(phi, &v0, &s, &stepper, substeps, opts.delta, &mut g)
            })
            .collect::<Result<_>>()?;
        let hits = outcomes.iter().filter(|&&h| h).count() as u64;
        let n = opts.n_replicas as u64;
        let p_hat = hits as f64 / n as f64;
        let (p_low, p_high) = wilson_interval(hits, n, opts.confidence);
        let eps_log_p = eps * p_hat.ln();
        let eps_log_p_se =
            if hits > 0 { eps * ((1.0 - p_hat) / (n as f64 * p_hat)).sqrt() } else { f64::INFINITY };
        let lower_bound = -(action + opts.gamma);
        rows.push(LdpRow {
            epsilon: eps,
            hits,
            n,
            p_hat,
            p_low,
            p_high,
            eps_log_p,
            eps_log_p_se,
            eps_log_p_upper: eps * p_high.ln(),
            lower_bound,
            upper_reference: -(action - opts.gamma),
            above_lower_bound: hits > 0 && eps_log_p >= lower_bound,
            out_of_reach: hits == 0,
        });
    }
    let reach: Vec<&LdpRow> = rows.iter().filter(|r| !r.out_of_reach).collect();
    let lower_bound_holds = !reach.is_empty() && reach.iter().all(|r| r.above_lower_bound);
    let decreasing_trend = reach.len() >= 2
        && reach.last().unwrap().eps_log_p < reach[0].eps_log_p
        && reach.windows(2).all(|w| {
            let se = w[0].eps_log_p_se.hypot(w[1].eps_log_p_se);
            w[1].eps_log_p - w[0].eps_log_p <= 3.0 * se
        });
    let gap = |r: &LdpRow| (r.eps_log_p + action).abs();
    let trend_toward_action = reach.len() >= 2
        && gap(reach.last().unwrap()) < gap(reach[0])
        && reach.windows(2).all(|w| {
            let se = w[0].eps_log_p_se.hypot(w[1].eps_log_p_se);
            gap(w[1]) - gap(w[0]) <= 3.0 * se
        });
    Ok(LdpTable {
        action,
        trend_toward_action,
        delta: opts.delta,
        gamma: opts.gamma,
        all_out_of_reach: reach.is_empty(),
        rows,
        lower_bound_holds,
        decreasing_trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::{solve_averaged, AveragedDrift};
    use crate::path::TimeGrid;

    fn setup() -> (SystemSpec<f64>, PathH<f64>) {
        let spec = SystemSpec::example(0.1, 0.5, 1.0, 4).unwrap();
        let u0 = SpectralField::sine(spec.basis, 1, 0.5);
        let phi = solve_averaged(&u0, &spec, &TimeGrid::new(0.5, 25).unwrap(), &AveragedDrift::Analytic).unwrap();
        (spec, phi)
    }

    #[test]
    fn wider_tube_never_loses_hits() {
        let (spec, phi) = setup();
        let rng = RngStream::new(3, 0);
        let run = |delta| {
            let opts = LdpProbeOptions::new(delta, 0.1, vec![0.2, 0.1], 200);
            ldp_probe(&phi, 0.0, &opts, &spec, &rng).unwrap()
        };
        let (narrow, wide) = (run(0.15), run(0.3));
        for (a, b) in narrow.rows.iter().zip(&wide.rows) {
            assert!(b.hits >= a.hits);
        }
    }

    #[test]
    fn averaged_path_tube_fills_as_eps_shrinks() {
        let (spec, phi) = setup();
        let opts = LdpProbeOptions::new(0.3, 0.1, vec![0.2, 0.05], 300);
        let t = ldp_probe(&phi, 0.0, &opts, &spec, &RngStream::new(5, 0)).unwrap();
        assert!(t.rows[1].p_hat >= t.rows[0].p_hat);
        assert!(t.rows[1].p_hat > 0.9, "{:?}", t.rows[1]);
        assert!(t.rows[1].eps_log_p > -0.01);
    }

    #[test]
    fn rejects_small_eps_and_infinite_action() {
        let (spec, phi) = setup();
        let rng = RngStream::new(0, 0);
        let opts = LdpProbeOptions::new(0.3, 0.1, vec![0.1, 0.01], 10);
        assert!(ldp_probe(&phi, 0.0, &opts, &spec, &rng).is_err());
        let opts = LdpProbeOptions::new(0.3, 0.1, vec![0.1], 10);
        assert!(ldp_probe(&phi, f64::INFINITY, &opts, &spec, &rng).is_err());
    }

    #[test]
    fn tiny_tube_is_out_of_reach() {
        let (spec, phi) = setup();
        let opts = LdpProbeOptions::new(1e-6, 0.1, vec![0.2], 20);
        let t = ldp_probe(&phi, 0.0, &opts, &spec, &RngStream::new(1, 0)).unwrap();
        assert!(t.all_out_of_reach && t.rows[0].out_of_reach);
        assert!(t.rows[0].p_high > 0.0 && t.rows[0].eps_log_p_upper.is_finite());
    }
}
