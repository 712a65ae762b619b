//! Experiment configuration: one level of `[section]` tables of plain keys.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slowfast::SystemSpec;
use crate::spectral::{BasisSpec, SpectralField};
use crate::stochastic::QSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    AverageRate,
    Deviation,
    ActionEval,
    Instanton,
    SsmCompare,
    LdpProbe,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Simulate,
        Self::AverageRate,
        Self::Deviation,
        Self::ActionEval,
        Self::Instanton,
        Self::SsmCompare,
        Self::LdpProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::AverageRate => "average-rate",
            Self::Deviation => "deviation",
            Self::ActionEval => "action-eval",
            Self::Instanton => "instanton",
            Self::SsmCompare => "ssm-compare",
            Self::LdpProbe => "ldp-probe",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QChoice {
    /// `q_i = i^-2`.
    Decaying,
    /// `q_value` on the first `q_active` modes, zero above.
    Leading,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovChoice {
    Analytic,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub epsilon: f64,
    /// Sweep for `average-rate`, strictly decreasing.
    pub epsilons: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub n_modes: usize,
    pub q: QChoice,
    pub q_active: usize,
    pub q_value: f64,
    /// Amplitudes of `sin(kx)`, `k = 1, 2, ...`.
    pub u0_sine: Vec<f64>,
    /// Same for the fast field; absent means `v0 = (I - A)^{-1} u0`.
    pub v0_sine: Option<Vec<f64>>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilons: vec![0.1, 0.05, 0.02, 0.01],
            sigma: 0.5,
            lambda: 1.0,
            n_modes: 16,
            q: QChoice::Decaying,
            q_active: 3,
            q_value: 1.0,
            u0_sine: vec![1.0],
            v0_sine: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub horizon: f64,
    /// Fixed step; absent means `epsilon / steps_per_epsilon`.
    pub dt: Option<f64>,
    pub steps_per_epsilon: usize,
    /// Keep every `record_every`-th node of stored trajectories.
    pub record_every: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { horizon: 2.0, dt: None, steps_per_epsilon: 20, record_every: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_replicas: usize,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_replicas: 200, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), format: OutputFormat::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviationSection {
    pub cov: CovChoice,
    /// Frozen slow states (coefficients on the orthonormal basis) at which
    /// the covariance is estimated empirically.
    pub b_points: Vec<Vec<f64>>,
    pub b_samples: usize,
    pub lag_horizon: f64,
    /// Also run the same-noise coupling over `system.epsilons`.
    pub same_noise: bool,
}

impl Default for DeviationSection {
    fn default() -> Self {
        Self { cov: CovChoice::Analytic, b_points: Vec::new(), b_samples: 400, lag_horizon: 8.0, same_noise: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionSection {
    /// Amplitude `c` of the perturbation `c (t / T) sin x` added to the averaged path.
    pub perturbation: f64,
    pub n_steps: usize,
}

impl Default for ActionSection {
    fn default() -> Self {
        Self { perturbation: 0.2, n_steps: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstantonSection {
    /// Initial guesses (amplitude of `sin x`) for the two endpoint equilibria.
    pub start_amplitude: f64,
    pub end_amplitude: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for InstantonSection {
    fn default() -> Self {
        Self { start_amplitude: 1.5, end_amplitude: -1.5, horizon: 8.0, n_steps: 80, max_iters: 500, tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsmSection {
    pub lambda_p: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub n_modes: usize,
    pub decay_horizon: f64,
    pub steady_horizon: f64,
    pub stat_horizon: f64,
    /// Length of the paired amplitude trajectories.
    pub amplitude_horizon: f64,
    pub amplitude_dt: f64,
    pub a0: f64,
    /// Sweep for the fixed-point gap.
    pub epsilons: Vec<f64>,
}

impl Default for SsmSection {
    fn default() -> Self {
        Self {
            lambda_p: 0.1,
            epsilon: 0.05,
            sigma: 0.1,
            n_modes: 8,
            decay_horizon: 4.0,
            steady_horizon: 150.0,
            stat_horizon: 0.0,
            amplitude_horizon: 50.0,
            amplitude_dt: 0.001,
            a0: 0.5,
            epsilons: vec![0.1, 0.05, 0.02],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdpSection {
    /// Length of the probed path.
    pub horizon: f64,
    pub perturbation: f64,
    pub delta: f64,
    /// `gamma = gamma_fraction * I(phi)`.
    pub gamma_fraction: f64,
    pub epsilons: Vec<f64>,
    pub min_epsilon: f64,
    pub n_steps: usize,
}

impl Default for LdpSection {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            perturbation: 0.14,
            delta: 0.09,
            gamma_fraction: 0.5,
            epsilons: vec![0.2, 0.1, 0.05],
            min_epsilon: 0.02,
            n_steps: 100,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub system: SystemSection,
    pub grid: GridSection,
    pub mc: McSection,
    pub output: OutputSection,
    pub deviation: DeviationSection,
    pub action: ActionSection,
    pub instanton: InstantonSection,
    pub ssm: SsmSection,
    pub ldp: LdpSection,
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the dotted path of the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(if path == "." { "<root>".into() } else { path }, inner.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |path: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be positive and finite, got {x}")))
            }
        };
        let nonneg = |path: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(path, format!("must be nonnegative and finite, got {x}")))
            }
        };
        let count = |path: &str, n: usize| {
            if n > 0 {
                Ok(())
            } else {
                Err(Error::config(path, "must be at least 1"))
            }
        };
        let decreasing = |path: &str, xs: &[f64]| {
            if xs.is_empty() {
                return Err(Error::config(path, "must not be empty"));
            }
            for (k, &x) in xs.iter().enumerate() {
                pos(&format!("{path}[{k}]"), x)?;
            }
            if xs.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::config(path, "must be strictly decreasing"));
            }
            Ok(())
        };
        let s = &self.system;
        pos("system.epsilon", s.epsilon)?;
        decreasing("system.epsilons", &s.epsilons)?;
        nonneg("system.sigma", s.sigma)?;
        if !s.lambda.is_finite() {
            return Err(Error::config("system.lambda", "must be finite"));
        }
        count("system.n_modes", s.n_modes)?;
        if s.q == QChoice::Leading {
            count("system.q_active", s.q_active)?;
            nonneg("system.q_value", s.q_value)?;
        }
        let check_sines = |path: &str, xs: &[f64]| {
            if xs.len() > s.n_modes {
                return Err(Error::config(path, format!("has {} entries but system.n_modes = {}", xs.len(), s.n_modes)));
            }
            if let Some(k) = xs.iter().position(|x| !x.is_finite()) {
                return Err(Error::config(format!("{path}[{k}]"), "must be finite"));
            }
            Ok(())
        };
        check_sines("system.u0_sine", &s.u0_sine)?;
        if let Some(v0) = &s.v0_sine {
            check_sines("system.v0_sine", v0)?;
        }
        pos("grid.horizon", self.grid.horizon)?;
        if let Some(dt) = self.grid.dt {
            pos("grid.dt", dt)?;
        }
        count("grid.steps_per_epsilon", self.grid.steps_per_epsilon)?;
        count("grid.record_every", self.grid.record_every)?;
        count("mc.n_replicas", self.mc.n_replicas)?;
        if self.output.dir.is_empty() {
            return Err(Error::config("output.dir", "must not be empty"));
        }
        for (k, p) in self.deviation.b_points.iter().enumerate() {
            check_sines(&format!("deviation.b_points[{k}]"), p)?;
        }
        pos("deviation.lag_horizon", self.deviation.lag_horizon)?;
        nonneg("action.perturbation", self.action.perturbation.abs())?;
        if self.action.n_steps < 2 {
            return Err(Error::config("action.n_steps", "must be at least 2"));
        }
        pos("instanton.horizon", self.instanton.horizon)?;
        if self.instanton.n_steps < 3 {
            return Err(Error::config("instanton.n_steps", "must be at least 3"));
        }
        pos("instanton.tol", self.instanton.tol)?;
        let m = &self.ssm;
        pos("ssm.lambda_p", m.lambda_p)?;
        pos("ssm.epsilon", m.epsilon)?;
        nonneg("ssm.sigma", m.sigma)?;
        if m.n_modes < 3 {
            return Err(Error::config("ssm.n_modes", "must be at least 3"));
        }
        pos("ssm.decay_horizon", m.decay_horizon)?;
        pos("ssm.steady_horizon", m.steady_horizon)?;
        nonneg("ssm.stat_horizon", m.stat_horizon)?;
        pos("ssm.amplitude_horizon", m.amplitude_horizon)?;
        pos("ssm.amplitude_dt", m.amplitude_dt)?;
        decreasing("ssm.epsilons", &m.epsilons)?;
        let l = &self.ldp;
        pos("ldp.horizon", l.horizon)?;
        pos("ldp.delta", l.delta)?;
        pos("ldp.gamma_fraction", l.gamma_fraction)?;
        decreasing("ldp.epsilons", &l.epsilons)?;
        pos("ldp.min_epsilon", l.min_epsilon)?;
        if let Some(&e) = l.epsilons.last() {
            if e < l.min_epsilon {
                return Err(Error::config("ldp.epsilons", format!("{e} is below ldp.min_epsilon = {}", l.min_epsilon)));
            }
        }
        if l.n_steps < 2 {
            return Err(Error::config("ldp.n_steps", "must be at least 2"));
        }
        Ok(())
    }

    pub fn basis(&self) -> BasisSpec<f64> {
        BasisSpec::unit_pi(self.system.n_modes)
    }

    pub fn q(&self) -> QSpec<f64> {
        let s = &self.system;
        match s.q {
            QChoice::Decaying => QSpec::decaying(s.n_modes),
            QChoice::Leading => QSpec::leading(s.n_modes, s.q_active.min(s.n_modes), s.q_value),
        }
    }

    /// The example system at `eps`.
    pub fn spec(&self, eps: f64) -> Result<SystemSpec<f64>> {
        let s = &self.system;
        SystemSpec::new(eps, s.sigma, s.lambda, self.q(), self.basis())
    }

    pub fn u0(&self) -> SpectralField<f64> {
        sine_field(self.basis(), &self.system.u0_sine)
    }

    pub fn v0(&self) -> Option<SpectralField<f64>> {
        self.system.v0_sine.as_ref().map(|v| sine_field(self.basis(), v))
    }
}

/// `sum_k amps[k] sin((k + 1) x)`.
pub fn sine_field(basis: BasisSpec<f64>, amps: &[f64]) -> SpectralField<f64> {
    let mut u = SpectralField::zeros(basis);
    for (k, &a) in amps.iter().enumerate() {
        u.axpy(1.0, &SpectralField::sine(basis, k + 1, a));
    }
    u
}
