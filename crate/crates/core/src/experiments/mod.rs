//! Experiment runner: configs in, CSV/JSON artifacts plus a checksummed manifest out.

pub mod config;
pub mod ldp;
pub mod output;

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat};
pub use ldp::{ldp_probe, LdpProbeOptions, LdpRow, LdpTable};
pub use output::{decode_trajectory, encode_trajectory, ArtifactWriter, Cell, Manifest, Provenance, Table};

use crate::action::{action_explicit, action_infimum, action_refined, minimize_action, MinimizeOptions};
use crate::averaging::{averaging_error, find_equilibrium, solve_averaged, AveragedDrift, AveragingRateOptions};
use crate::deviation::{b_empirical, deviation_samples, same_noise_comparison, CovOperator};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::path::{PathH, TimeGrid};
use crate::slowfast::{check_hypotheses, simulate_with, State, SystemSpec};
use crate::spectral::{BasisSpec, SpectralField};
use crate::stats;
use crate::stochastic::RngStream;
use crate::superslow::{
    drift_difference, fixed_point, simulate_amplitude, ssm_vs_full, AmplitudeParams, Model, SsmCoefficients,
    SsmCompareOptions,
};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker count; `None` uses the global pool. Never changes the output bytes.
    pub threads: Option<usize>,
    /// Config file text as given, stored next to the effective config.
    pub source: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Hash of the effective config text with the output directory blanked, so
/// the same experiment written to two places carries the same hash.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output.dir.clear();
    output::sha256_hex(c.to_toml().as_bytes())
}

/// Runs one experiment and writes its artifacts to `cfg.output.dir`.
///
/// A blow-up or an all-miss probe still leaves whatever was written behind,
/// with the manifest status set to `partial` or `underflow`, before the
/// error is returned.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::config("kind", format!("config is for `{k}` but `{kind}` was requested")));
        }
    }
    cfg.validate()?;
    let cfg = ExperimentConfig { kind: Some(kind), ..cfg.clone() };
    let prov = Provenance {
        kind,
        version: output::CODE_VERSION.to_string(),
        config_hash: config_hash(&cfg),
        seed: cfg.mc.seed,
    };
    let mut w = ArtifactWriter::create(&cfg.output.dir, prov)?;
    w.write_bytes("config.toml", cfg.to_toml().as_bytes())?;
    if let Some(src) = &opts.source {
        w.write_bytes("config.source.toml", src.as_bytes())?;
    }
    let body = |w: &mut ArtifactWriter| -> Result<Vec<String>> {
        match kind {
            ExperimentKind::Simulate => run_simulate(&cfg, w),
            ExperimentKind::AverageRate => run_average_rate(&cfg, w),
            ExperimentKind::Deviation => run_deviation(&cfg, w),
            ExperimentKind::ActionEval => run_action_eval(&cfg, w),
            ExperimentKind::Instanton => run_instanton(&cfg, w),
            ExperimentKind::SsmCompare => run_ssm_compare(&cfg, w),
            ExperimentKind::LdpProbe => run_ldp_probe(&cfg, w),
        }
    };
    let result = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(|| body(&mut w)),
        None => body(&mut w),
    };
    let dir = w.dir().to_path_buf();
    match result {
        Ok(messages) => Ok(RunReport { dir, manifest: w.finish("ok", messages)? }),
        Err(e) => {
            let status = match e {
                Error::BlowUp { .. } => "partial",
                Error::McUnderflow(_) => "underflow",
                _ => "failed",
            };
            w.finish(status, vec![e.to_string()])?;
            Err(e)
        }
    }
}

fn field_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `t, c_1, ..., c_N` rows of a path, with coefficients on the orthonormal basis.
fn path_table(path: &PathH<f64>, prefix: &str) -> Table {
    let mut cols = vec!["t".to_string()];
    cols.extend(field_columns(prefix, path.basis().n_modes()));
    let mut t = Table::with_columns(cols).note("coefficients on e_i = sqrt(2/L) sin(i pi x / L)");
    for (k, f) in path.fields().iter().enumerate() {
        let mut row: Vec<Cell> = vec![path.grid().time(k).into()];
        row.extend(f.coeffs().iter().map(|&c| Cell::F(c)));
        t.push(row);
    }
    t
}

fn matrix_table(m: &Matrix<f64>) -> Table {
    let mut t = Table::new(&["i", "j", "value"]);
    for i in 0..m.order() {
        for j in 0..m.order() {
            t.push(vec![(i + 1).into(), (j + 1).into(), m[(i, j)].into()]);
        }
    }
    t
}

fn step_for(cfg: &ExperimentConfig, spec: &SystemSpec<f64>) -> f64 {
    cfg.grid.dt.unwrap_or(spec.epsilon / cfg.grid.steps_per_epsilon as f64)
}

fn run_simulate(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let spec = cfg.spec(cfg.system.epsilon)?;
    let grid = TimeGrid::with_max_step(cfg.grid.horizon, step_for(cfg, &spec))?;
    let u0 = cfg.u0();
    let initial = match cfg.v0() {
        Some(v0) => State::new(u0, v0)?,
        None => State::slaved(u0),
    };
    let every = cfg.grid.record_every;
    let mut times = Vec::new();
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut rng = RngStream::new(cfg.mc.seed, 0x_51_0000);
    let outcome = simulate_with(initial, &spec, &grid, &mut rng, |k, st| {
        if k % every == 0 || k == grid.n_steps() {
            times.push(grid.time(k));
            us.push(st.u.coeffs().to_vec());
            vs.push(st.v.coeffs().to_vec());
        }
    });
    let n = spec.basis.n_modes();
    match cfg.output.format {
        OutputFormat::Csv => {
            for (name, prefix, rows) in [("trajectory_u.csv", "u", &us), ("trajectory_v.csv", "v", &vs)] {
                let mut cols = vec!["t".to_string()];
                cols.extend(field_columns(prefix, n));
                let mut t = Table::with_columns(cols)
                    .meta("epsilon", spec.epsilon)
                    .meta("dt", grid.dt())
                    .note("coefficients on e_i = sqrt(2/L) sin(i pi x / L)");
                for (time, r) in times.iter().zip(rows.iter()) {
                    let mut row: Vec<Cell> = vec![(*time).into()];
                    row.extend(r.iter().map(|&c| Cell::F(c)));
                    t.push(row);
                }
                w.write_csv(name, &t)?;
            }
        }
        OutputFormat::Binary => {
            let horizon = *times.last().unwrap();
            w.write_bytes("trajectory_u.bin", &output::encode_trajectory(horizon, &us)?)?;
            w.write_bytes("trajectory_v.bin", &output::encode_trajectory(horizon, &vs)?)?;
            let mut t = Table::new(&["t"]);
            for &time in &times {
                t.push(vec![time.into()]);
            }
            w.write_csv("trajectory_times.csv", &t)?;
        }
    }
    let report = check_hypotheses(&spec, 4.0);
    w.write_json(
        "summary.json",
        &json!({
            "epsilon": spec.epsilon,
            "dt": grid.dt(),
            "n_steps": grid.n_steps(),
            "recorded_nodes": times.len(),
            "completed": outcome.is_ok(),
            "hypotheses": report,
        }),
    )?;
    outcome.map(|_| Vec::new())
}

fn run_average_rate(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let spec = cfg.spec(cfg.system.epsilons[0])?;
    let opts = AveragingRateOptions {
        epsilons: cfg.system.epsilons.clone(),
        horizon: cfg.grid.horizon,
        n_replicas: cfg.mc.n_replicas,
        steps_per_epsilon: cfg.grid.steps_per_epsilon,
        seed: cfg.mc.seed,
    };
    let table = averaging_error(&spec, &cfg.u0(), &opts)?;
    let mut t = Table::new(&["epsilon", "mean_error", "stderr", "n_ok", "n_blowup"])
        .meta("slope", table.slope)
        .meta("horizon", cfg.grid.horizon)
        .note("mean over replicas of sup_t |u_eps(t) - ubar(t)|_H");
    for r in &table.rows {
        t.push(vec![r.epsilon.into(), r.mean_error.into(), r.stderr.into(), r.n_ok.into(), r.n_blowup.into()]);
    }
    w.write_csv("rate_table.csv", &t)?;
    w.write_json("summary.json", &table)?;
    let blowups: usize = table.rows.iter().map(|r| r.n_blowup).sum();
    Ok(if blowups > 0 { vec![format!("{blowups} replicas diverged and were excluded")] } else { Vec::new() })
}

#[derive(Serialize)]
struct CovSummary {
    point: Vec<f64>,
    n_samples: usize,
    frobenius_gap: f64,
    aggregate_se: f64,
    within_3se: bool,
    warnings: Vec<String>,
}

fn run_deviation(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let spec = cfg.spec(cfg.system.epsilon)?;
    let basis = spec.basis;
    let u0 = cfg.u0();
    let grid = TimeGrid::with_max_step(cfg.grid.horizon, step_for(cfg, &spec))?;
    let analytic = CovOperator::analytic(&spec)?;
    w.write_csv("b_matrix.csv", &matrix_table(analytic.b()).meta("mode", "analytic").meta("sigma", spec.sigma))?;

    let mut cov_summaries = Vec::new();
    let base = RngStream::new(cfg.mc.seed, 0x_b0_0000);
    for (k, p) in cfg.deviation.b_points.iter().enumerate() {
        let u = SpectralField::from_coeffs(basis, pad(p, basis.n_modes()))?;
        let est = b_empirical(&u, &spec, cfg.deviation.lag_horizon, cfg.deviation.b_samples, &base.derive(k as u64))?;
        let gap = est.b().sub(analytic.b()).frobenius();
        let se = est.aggregate_se();
        let name = format!("b_empirical_{k}.csv");
        let mut t = matrix_table(est.b()).meta("mode", "empirical").meta("point", k).meta("aggregate_se", se);
        if let Some(m) = &est.meta {
            t = t.meta("n_samples", m.n_samples).meta("cutoff_lag", m.cutoff_lag);
        }
        w.write_csv(&name, &t)?;
        if let Some(sem) = &est.stderr {
            w.write_csv(&format!("b_empirical_{k}_stderr.csv"), &matrix_table(sem).meta("point", k))?;
        }
        cov_summaries.push(CovSummary {
            point: p.clone(),
            n_samples: cfg.deviation.b_samples,
            frobenius_gap: gap,
            aggregate_se: se,
            within_3se: gap < 3.0 * se,
            warnings: est.warnings.clone(),
        });
    }

    let cov = match cfg.deviation.cov {
        config::CovChoice::Analytic => analytic.clone(),
        config::CovChoice::Empirical => {
            b_empirical(&u0, &spec, cfg.deviation.lag_horizon, cfg.deviation.b_samples, &base.derive(0xffff))?
        }
    };
    let (z_eps, z_lim) = deviation_samples(&u0, &spec, &cov, &grid, cfg.mc.n_replicas, cfg.mc.seed)?;
    let mut t = Table::new(&["replica", "z_eps_1", "z_limit_1", "z_eps_norm", "z_limit_norm"])
        .meta("epsilon", spec.epsilon)
        .meta("horizon", grid.horizon())
        .note("deviation fields at the final time; mode 1 coefficient and H norm");
    for (r, (a, b)) in z_eps.iter().zip(&z_lim).enumerate() {
        t.push(vec![r.into(), a.coeff(1).into(), b.coeff(1).into(), a.norm().into(), b.norm().into()]);
    }
    w.write_csv("deviation_samples.csv", &t)?;
    let xs: Vec<f64> = z_eps.iter().map(|z| z.coeff(1)).collect();
    let ys: Vec<f64> = z_lim.iter().map(|z| z.coeff(1)).collect();
    let (mean_e, var_e) = (stats::mean_se(&xs), stats::variance_with_se(&xs));
    let (mean_l, var_l) = (stats::mean_se(&ys), stats::variance_with_se(&ys));
    let same_noise = if cfg.deviation.same_noise {
        let rows =
            same_noise_comparison(&u0, &spec, &cfg.system.epsilons, cfg.grid.horizon, cfg.mc.n_replicas, cfg.mc.seed)?;
        let mut t = Table::new(&["epsilon", "mean_gap", "stderr", "ratio_to_sqrt_eps"]);
        for r in &rows {
            t.push(vec![r.epsilon.into(), r.mean_gap.into(), r.stderr.into(), r.ratio_to_sqrt_eps.into()]);
        }
        w.write_csv("same_noise.csv", &t)?;
        Some(rows)
    } else {
        None
    };
    w.write_json(
        "summary.json",
        &json!({
            "epsilon": spec.epsilon,
            "horizon": grid.horizon(),
            "n_replicas": cfg.mc.n_replicas,
            "ks_mode_1": stats::ks_two_sample(&xs, &ys),
            "mean_mode_1": { "z_eps": mean_e, "z_limit": mean_l },
            "variance_mode_1": { "z_eps": var_e, "z_limit": var_l },
            "covariance_checks": cov_summaries,
            "same_noise": same_noise,
        }),
    )?;
    Ok(Vec::new())
}

fn pad(p: &[f64], n: usize) -> Vec<f64> {
    let mut v = p.to_vec();
    v.resize(n, 0.0);
    v
}

/// The averaged path from `u0` plus `amplitude (t / T) sin x`, as a function
/// of time. The averaged path is solved once on a fine grid and linearly
/// interpolated.
pub struct PerturbedPath {
    fine: PathH<f64>,
    basis: BasisSpec<f64>,
    amplitude: f64,
}

impl PerturbedPath {
    pub fn new(u0: &SpectralField<f64>, spec: &SystemSpec<f64>, horizon: f64, amplitude: f64) -> Result<Self> {
        let grid = TimeGrid::new(horizon, 16384)?;
        let fine = solve_averaged(u0, spec, &grid, &AveragedDrift::Analytic)?;
        Ok(Self { fine, basis: spec.basis, amplitude })
    }

    pub fn horizon(&self) -> f64 {
        self.fine.grid().horizon()
    }

    pub fn at(&self, t: f64) -> SpectralField<f64> {
        let g = self.fine.grid();
        let x = (t / g.dt()).clamp(0.0, g.n_steps() as f64);
        let k = (x.floor() as usize).min(g.n_steps() - 1);
        let w = x - k as f64;
        let mut u = self.fine.at(k).scaled(1.0 - w);
        u.axpy(w, self.fine.at(k + 1));
        u.axpy(1.0, &SpectralField::sine(self.basis, 1, self.amplitude * t / self.horizon()));
        u
    }

    pub fn sample(&self, n_steps: usize) -> Result<PathH<f64>> {
        PathH::from_fn(TimeGrid::new(self.horizon(), n_steps)?, |t| self.at(t))
    }

    /// Explicit action after grid refinement from `n_steps`.
    pub fn action(&self, spec: &SystemSpec<f64>, n_steps: usize) -> Result<f64> {
        action_refined(|t| self.at(t), self.horizon(), n_steps, |p| action_explicit(p, spec))
    }
}

fn run_action_eval(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let spec = cfg.spec(cfg.system.epsilon)?;
    let cov = CovOperator::analytic(&spec)?;
    let phi_fn = PerturbedPath::new(&cfg.u0(), &spec, cfg.grid.horizon, cfg.action.perturbation)?;
    let phi = phi_fn.sample(cfg.action.n_steps)?;
    let explicit = action_explicit(&phi, &spec)?;
    let infimum = action_infimum(&phi, &cov, &AveragedDrift::Analytic, &spec)?;
    let refined = phi_fn.action(&spec, cfg.action.n_steps)?;
    w.write_csv("path.csv", &path_table(&phi, "phi_"))?;
    w.write_json(
        "action.json",
        &json!({
            "perturbation": cfg.action.perturbation,
            "horizon": cfg.grid.horizon,
            "n_steps": cfg.action.n_steps,
            "explicit": explicit,
            "infimum": infimum,
            "refined": refined,
        }),
    )?;
    Ok(Vec::new())
}

fn run_instanton(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let spec = cfg.spec(cfg.system.epsilon)?;
    let basis = spec.basis;
    let ic = &cfg.instanton;
    let start = find_equilibrium(&SpectralField::sine(basis, 1, ic.start_amplitude), &spec, 1e-12)?;
    let end = find_equilibrium(&SpectralField::sine(basis, 1, ic.end_amplitude), &spec, 1e-12)?;
    if start.distance(&end) < 1e-6 {
        return Err(Error::config(
            "system.lambda",
            "both endpoint guesses converge to the same equilibrium; bistability needs lambda > 3/2",
        ));
    }
    let cov = CovOperator::analytic(&spec)?;
    let opts = MinimizeOptions { n_steps: ic.n_steps, max_iters: ic.max_iters, tol: ic.tol };
    let res = minimize_action(&start, &end, ic.horizon, &cov, &spec, &opts)?;
    w.write_csv("instanton_path.csv", &path_table(&res.path, "phi_").meta("action", res.action))?;
    if let Some(h) = &res.control {
        let p = PathH::new(*h.grid(), h.controls().to_vec())?;
        w.write_csv("instanton_control.csv", &path_table(&p, "h_"))?;
    }
    w.write_json(
        "instanton.json",
        &json!({
            "horizon": ic.horizon,
            "n_steps": ic.n_steps,
            "start": start.coeffs(),
            "end": end.coeffs(),
            "result": res.summary(),
        }),
    )?;
    Ok(if res.converged { Vec::new() } else { vec!["minimizer stopped at the iteration limit".into()] })
}

fn run_ssm_compare(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let m = &cfg.ssm;
    let coeffs = SsmCoefficients::default();
    let mut t = Table::new(&["name", "exact", "value"]);
    for e in coeffs.ledger() {
        t.push(vec![e.name.into(), e.exact.into(), e.value.into()]);
    }
    w.write_csv("ssm_coefficients.csv", &t)?;

    let mut t = Table::new(&["a", "drift_difference", "reference"]).meta("lambda_p", m.lambda_p).meta("epsilon", m.epsilon);
    for k in 0..=40 {
        let a = -1.0 + k as f64 / 20.0;
        let reference = m.epsilon * (m.lambda_p * a / 4.0 - 3.0 * a.powi(3) / 64.0);
        t.push(vec![a.into(), drift_difference(a, m.lambda_p, m.epsilon).into(), reference.into()]);
    }
    w.write_csv("drift_difference.csv", &t)?;

    let mut t = Table::new(&["epsilon", "a_slow_fast", "a_averaged", "gap"]).meta("lambda_p", m.lambda_p);
    for &eps in &m.epsilons {
        let sf = fixed_point(Model::SlowFast, m.lambda_p, eps).unwrap_or(f64::NAN);
        let av = fixed_point(Model::Averaged, m.lambda_p, eps).unwrap_or(f64::NAN);
        t.push(vec![eps.into(), sf.into(), av.into(), (sf - av).abs().into()]);
    }
    w.write_csv("fixed_points.csv", &t)?;

    // paired amplitude runs driven by the same noise
    let grid = TimeGrid::with_max_step(m.amplitude_horizon, m.amplitude_dt.min(m.epsilon / 10.0))?;
    let every = cfg.grid.record_every.max(((0.01 / grid.dt()).round() as usize).max(1));
    let params = |model| AmplitudeParams { model, lambda_p: m.lambda_p, epsilon: m.epsilon, sigma: m.sigma };
    let run = |model| simulate_amplitude(params(model), m.a0, &grid, &mut RngStream::new(cfg.mc.seed, 0x_55_1000));
    let (sf, av) = (run(Model::SlowFast)?, run(Model::Averaged)?);
    let mut t = Table::new(&["t", "a_slow_fast", "a_averaged"]).meta("sigma", m.sigma);
    for k in (0..sf.len()).step_by(every) {
        t.push(vec![sf[k].t.into(), sf[k].a.into(), av[k].a.into()]);
    }
    w.write_csv("amplitude.csv", &t)?;

    let opts = SsmCompareOptions {
        lambda_p: m.lambda_p,
        epsilon: m.epsilon,
        sigma: m.sigma,
        n_modes: m.n_modes,
        decay_horizon: m.decay_horizon,
        steady_horizon: m.steady_horizon,
        stat_horizon: m.stat_horizon,
        seed: cfg.mc.seed,
    };
    let cmp = ssm_vs_full(&opts)?;
    w.write_json("ssm_report.json", &json!({ "comparison": cmp, "ledger": coeffs.ledger() }))?;
    Ok(Vec::new())
}

fn run_ldp_probe(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<Vec<String>> {
    let l = &cfg.ldp;
    let spec = cfg.spec(l.epsilons[0])?;
    let phi_fn = PerturbedPath::new(&cfg.u0(), &spec, l.horizon, l.perturbation)?;
    let action = phi_fn.action(&spec, l.n_steps)?;
    let gamma = l.gamma_fraction * action;
    let phi = phi_fn.sample(l.n_steps)?;
    let mut opts = LdpProbeOptions::new(l.delta, gamma, l.epsilons.clone(), cfg.mc.n_replicas);
    opts.min_epsilon = l.min_epsilon;
    opts.steps_per_epsilon = cfg.grid.steps_per_epsilon;
    let table = ldp_probe(&phi, action, &opts, &spec, &RngStream::new(cfg.mc.seed, 0x_1d_0000))?;
    let mut t = Table::new(&[
        "epsilon",
        "hits",
        "n",
        "p_hat",
        "p_low",
        "p_high",
        "eps_log_p",
        "eps_log_p_se",
        "eps_log_p_upper",
        "lower_bound",
        "upper_reference",
        "out_of_reach",
    ])
    .meta("action", action)
    .meta("gamma", gamma)
    .meta("delta", l.delta)
    .note("Wilson 95% intervals; out_of_reach rows carry only the upper bound");
    for r in &table.rows {
        t.push(vec![
            r.epsilon.into(),
            r.hits.into(),
            r.n.into(),
            r.p_hat.into(),
            r.p_low.into(),
            r.p_high.into(),
            r.eps_log_p.into(),
            r.eps_log_p_se.into(),
            r.eps_log_p_upper.into(),
            r.lower_bound.into(),
            r.upper_reference.into(),
            r.out_of_reach.into(),
        ]);
    }
    w.write_csv("ldp_probe.csv", &t)?;
    w.write_csv("ldp_path.csv", &path_table(&phi, "phi_"))?;
    w.write_json("summary.json", &table)?;
    if table.all_out_of_reach {
        return Err(Error::McUnderflow(format!("no tube hits at any eps (delta = {})", l.delta)));
    }
    Ok(table
        .rows
        .iter()
        .filter(|r| r.out_of_reach)
        .map(|r| format!("eps = {} is out of Monte-Carlo reach", r.epsilon))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind, dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.kind = Some(kind);
        cfg.output.dir = dir.to_string_lossy().into_owned();
        cfg.system.n_modes = 4;
        cfg.grid.horizon = 0.2;
        cfg.mc.n_replicas = 8;
        cfg
    }

    #[test]
    fn quiet_zero_simulation_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(ExperimentKind::Simulate, dir.path());
        cfg.system.sigma = 0.0;
        cfg.system.u0_sine = vec![];
        let rep = run(ExperimentKind::Simulate, &cfg, &RunOptions::default()).unwrap();
        assert_eq!(rep.manifest.status, "ok");
        let text = std::fs::read_to_string(dir.path().join("trajectory_u.csv")).unwrap();
        let (_, _, rows) = output::read_csv(&text).unwrap();
        assert!(rows.len() > 2);
        assert!(rows.iter().all(|r| r[1..].iter().all(|&x| x == 0.0)));
        assert!(output::verify_manifest(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn binary_trajectory_matches_csv() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small(ExperimentKind::Simulate, a.path());
        run(ExperimentKind::Simulate, &cfg, &RunOptions::default()).unwrap();
        let mut cfg_b = small(ExperimentKind::Simulate, b.path());
        cfg_b.output.format = OutputFormat::Binary;
        run(ExperimentKind::Simulate, &cfg_b, &RunOptions::default()).unwrap();
        let (_, _, rows) = output::read_csv(&std::fs::read_to_string(a.path().join("trajectory_u.csv")).unwrap()).unwrap();
        let (horizon, bin) = output::decode_trajectory(&std::fs::read(b.path().join("trajectory_u.bin")).unwrap()).unwrap();
        assert!((horizon - 0.2).abs() < 1e-12);
        assert_eq!(bin.len(), rows.len());
        for (r, s) in rows.iter().zip(&bin) {
            assert_eq!(&r[1..], &s[..]);
        }
    }

    #[test]
    fn kind_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(ExperimentKind::Simulate, dir.path());
        let err = run(ExperimentKind::Deviation, &cfg, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rerun_is_byte_identical_across_thread_counts() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut cfg = small(ExperimentKind::AverageRate, a.path());
        cfg.system.epsilons = vec![0.1, 0.05];
        run(ExperimentKind::AverageRate, &cfg, &RunOptions { threads: Some(1), source: None }).unwrap();
        cfg.output.dir = b.path().to_string_lossy().into_owned();
        run(ExperimentKind::AverageRate, &cfg, &RunOptions { threads: Some(3), source: None }).unwrap();
        for name in ["rate_table.csv", "summary.json"] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let text = std::fs::read_to_string(a.path().join("summary.json")).unwrap();
        assert!(text.contains("\"slope\""));
    }

    #[test]
    fn perturbed_path_action_grows_quadratically() {
        let spec = SystemSpec::example(0.1, 0.5, 1.0, 4).unwrap();
        let u0 = SpectralField::sine(spec.basis, 1, 0.5);
        let a1 = PerturbedPath::new(&u0, &spec, 1.0, 0.01).unwrap().action(&spec, 50).unwrap();
        let a2 = PerturbedPath::new(&u0, &spec, 1.0, 0.02).unwrap().action(&spec, 50).unwrap();
        assert!(a1 > 0.0);
        assert!((a2 / a1 - 4.0).abs() < 0.05, "{a1} {a2}");
    }
}
