use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sfldp::experiments::{run, ExperimentConfig, ExperimentKind, OutputFormat, RunOptions};
use sfldp::Error;

#[derive(Parser, Debug)]
#[command(name = "sfldp", version, about = "Slow-fast stochastic reaction-diffusion experiments")]
struct Cli {
    /// Experiment config (sections of `key = value`).
    #[arg(long, global = true, env = "SFLDP_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate the full slow-fast system once.
    Simulate,
    /// Averaging error against eps, with the log-log slope.
    AverageRate,
    /// Deviation samples against the Gaussian limit, and covariance estimates.
    Deviation,
    /// Action of a perturbed averaged path.
    ActionEval,
    /// Minimum-action path between two equilibria.
    Instanton,
    /// Amplitude equations against the full system near the bifurcation.
    SsmCompare,
    /// Monte-Carlo tube probabilities against the action bounds.
    LdpProbe,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Csv,
    Binary,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Simulate => ExperimentKind::Simulate,
            Command::AverageRate => ExperimentKind::AverageRate,
            Command::Deviation => ExperimentKind::Deviation,
            Command::ActionEval => ExperimentKind::ActionEval,
            Command::Instanton => ExperimentKind::Instanton,
            Command::SsmCompare => ExperimentKind::SsmCompare,
            Command::LdpProbe => ExperimentKind::LdpProbe,
        }
    }
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let (mut cfg, source) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config { path: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            (ExperimentConfig::parse(&text)?, Some(text))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Binary => OutputFormat::Binary,
        };
    }
    let report = run(cli.command.kind(), &cfg, &RunOptions { threads: cli.threads, source })?;
    let mut msg = format!(
        "{}: wrote {} files to {} (status {})",
        cli.command.kind(),
        report.manifest.files.len() + 1,
        report.dir.display(),
        report.manifest.status
    );
    for m in &report.manifest.messages {
        msg.push_str(&format!("\nnote: {m}"));
    }
    Ok(msg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
