//! `ssq`: command-line front end for the simulation and estimation toolkit.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ssq_core::ctmc::{self, StopCondition};
use ssq_core::diffusion::wbm_path;
use ssq_core::harness::acceptance::{selftest, Scale};
use ssq_core::harness::{
    run_experiment, run_sweep, with_workers, Experiment, ExperimentConfig, HarnessError, SweepFamily,
};
use ssq_core::model::{
    diffusion_coefficients, validate, ModelError, ModelSpec, RateMode, ScaledModel, StateVector, WbmParams,
};
use ssq_core::rng::replication_stream;

#[derive(Parser)]
#[command(name = "ssq", version, about = "Serve-the-shortest-queue heavy-traffic simulation lab")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path prefix; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    r: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true)]
    kappa0: Option<f64>,
    /// Model file (JSON), replacing the configuration's model.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Homogeneous,
    General,
}

impl From<ModeArg> for RateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Homogeneous => RateMode::Homogeneous,
            ModeArg::General => RateMode::General,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    A,
    B,
    C,
    D,
}

impl From<FamilyArg> for SweepFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::A => SweepFamily::A,
            FamilyArg::B => SweepFamily::B,
            FamilyArg::C => SweepFamily::C,
            FamilyArg::D => SweepFamily::D,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check criticality and tie-break tables; print the diffusion coefficients.
    Validate,
    /// Simulate one path and write its events as CSV.
    Simulate {
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Initial queue lengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<u64>>,
    },
    /// Estimate the angular distribution from first entrances.
    EstimateQ,
    /// Sweep one two-class family and write the CSV table.
    Sweep {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Grid values, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// KS test of the radial marginal against the reflected Brownian law.
    RbmGof {
        #[arg(long)]
        t_probe: Option<f64>,
    },
    /// Tube exit frequency from a point near an axis.
    TubeExit {
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
    },
    /// Differences of estimates between successive dyadic scales.
    Dyadic {
        #[arg(long, value_delimiter = ',')]
        r_list: Option<Vec<f64>>,
    },
    /// Stopped total-workload martingale check.
    Martingale,
    /// Reweight homogeneous runs to the general-mode rates.
    Reweight,
    /// Sample a Walsh Brownian motion path and write it as CSV.
    WbmSim {
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Angular law, comma separated; defaults to uniform.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
    },
    /// Run the acceptance criteria and report pass/fail per criterion.
    Selftest {
        /// Use full replication counts.
        #[arg(long)]
        full: bool,
    },
    /// Run whatever experiment the configuration names.
    Run,
}

impl Command {
    /// Experiment implied by the subcommand; `None` defers to the configuration.
    fn experiment(&self) -> Option<Experiment> {
        Some(match self {
            Command::Sweep { family, .. } => match SweepFamily::from(*family) {
                SweepFamily::A => Experiment::SweepA,
                SweepFamily::B => Experiment::SweepB,
                SweepFamily::C => Experiment::SweepC,
                SweepFamily::D => Experiment::SweepD,
            },
            Command::RbmGof { .. } => Experiment::RbmGof,
            Command::TubeExit { .. } => Experiment::TubeExit,
            Command::Dyadic { .. } => Experiment::Dyadic,
            Command::Martingale => Experiment::Martingale,
            Command::Reweight => Experiment::Reweight,
            Command::Selftest { .. } => Experiment::Selftest,
            Command::Run => return None,
            _ => Experiment::EstimateQ,
        })
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Validation(anyhow::Error),
    Statistical,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Validation(e.into())
    }
}

fn load_config(common: &Common, experiment: Option<Experiment>) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::new(experiment.unwrap_or(Experiment::EstimateQ)),
    };
    if let Some(experiment) = experiment {
        config.experiment = experiment;
    }
    if let Some(path) = &common.model {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.model = Some(ModelSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    if let Some(v) = common.seed {
        config.base_seed = v;
    }
    if let Some(v) = common.workers {
        config.workers = v;
    }
    if let Some(v) = common.n {
        config.n = v;
    }
    if let Some(v) = common.r {
        config.r = v;
    }
    if let Some(v) = common.eps {
        config.eps = v;
    }
    if let Some(v) = common.kappa0 {
        config.kappa0 = v;
    }
    if let Some(m) = common.mode {
        config.mode = m.into();
    }
    if let Some(out) = &common.out {
        config.output = Some(out.display().to_string());
    }
    config.check()?;
    Ok(config)
}

/// Writes `text` to `<prefix>.<ext>` or stdout.
fn emit(prefix: Option<&Path>, ext: &str, text: &str) -> Result<()> {
    match prefix {
        Some(prefix) => {
            let mut path = prefix.as_os_str().to_owned();
            path.push(".");
            path.push(ext);
            let path = PathBuf::from(path);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json(prefix: Option<&Path>, value: &Value) -> Result<()> {
    emit(prefix, "json", &format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.common;
    let mut config = load_config(&common, cli.command.experiment())?;
    let out_path = config.output.clone().map(PathBuf::from);
    let out = out_path.as_deref();
    match cli.command {
        Command::Validate => {
            let spec = config.model_spec();
            let report = validate(&spec).map_err(anyhow::Error::from)?;
            let coeffs = diffusion_coefficients(&spec).map_err(anyhow::Error::from)?;
            emit_json(
                out,
                &json!({ "n": report.n, "residual": report.residual, "b": coeffs.b, "sigma2": coeffs.sigma2 }),
            )?;
        }
        Command::Simulate { horizon, start } => {
            let spec = config.model_spec();
            let model = ScaledModel::new(&spec, config.r, config.mode).map_err(anyhow::Error::from)?;
            let init = StateVector::new(start.unwrap_or_else(|| vec![0; spec.n]));
            let mut rng = replication_stream(config.base_seed, 0);
            let path = ctmc::simulate(&model, &init, StopCondition::TimeHorizon(horizon), &mut rng)
                .map_err(anyhow::Error::from)?;
            let mut buf = Vec::new();
            path.write_csv(&mut buf).map_err(anyhow::Error::from)?;
            emit(out, "csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
        }
        Command::Sweep { family, grid } => {
            if grid.is_some() {
                config.grid = grid;
            }
            let table = run_sweep(&config, family.into())?;
            emit(out, "csv", &table.to_csv())?;
        }
        Command::WbmSim { b, sigma, q, horizon, dt, start } => {
            let spec = config.model_spec();
            let coeffs = diffusion_coefficients(&spec).map_err(anyhow::Error::from)?;
            let q = q.unwrap_or_else(|| vec![1.0 / spec.n as f64; spec.n]);
            let dim = q.len();
            let params = WbmParams::new(b.unwrap_or(coeffs.b), sigma.unwrap_or(coeffs.sigma()), q)
                .map_err(anyhow::Error::from)?;
            let x0 = start.unwrap_or_else(|| vec![0.0; dim]);
            let sample = wbm_path(&params, &x0, horizon, dt, &mut replication_stream(config.base_seed, 0))
                .map_err(anyhow::Error::from)?;
            let mut buf = Vec::new();
            sample.path.write_csv(&mut buf).map_err(anyhow::Error::from)?;
            emit(out, "csv", &String::from_utf8(buf).expect("csv is utf-8"))?;
        }
        Command::Selftest { full } => {
            let scale = if full { Scale::Full } else { Scale::Reduced };
            let report = with_workers(config.workers, || selftest(config.base_seed, scale))?;
            for c in &report.criteria {
                eprintln!("{c}");
            }
            emit_json(out, &serde_json::to_value(&report).map_err(anyhow::Error::from)?)?;
            if !report.all_pass() {
                return Err(Failure::Statistical);
            }
        }
        Command::RbmGof { t_probe } => {
            if let Some(t) = t_probe {
                config.t_probe = t;
            }
            let result = run_experiment(&config)?;
            emit_json(out, &result)?;
            if result["values"]["pass"] == Value::Bool(false) {
                return Err(Failure::Statistical);
            }
        }
        Command::TubeExit { horizon, start } => {
            config.horizon = horizon.or(config.horizon);
            config.start = start.or(config.start);
            emit_json(out, &run_experiment(&config)?)?;
        }
        Command::Dyadic { r_list } => {
            config.r_list = r_list.or(config.r_list);
            emit_json(out, &run_experiment(&config)?)?;
        }
        Command::EstimateQ | Command::Martingale | Command::Reweight | Command::Run => {
            let result = run_experiment(&config)?;
            if config.experiment.sweep_family().is_some() {
                emit(out, "csv", result["csv"].as_str().unwrap_or_default())?;
            } else {
                emit_json(out, &result)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Statistical) => {
            eprintln!("statistical checks failed");
            ExitCode::from(2)
        }
        Err(Failure::Validation(e)) => {
            if let Some(model) = e.downcast_ref::<ModelError>() {
                eprintln!("invalid model: {model}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn run_keeps_the_configured_experiment() {
        let cli = Cli::try_parse_from(["ssq", "run", "--n", "150"]).unwrap();
        let config = load_config(&cli.common, cli.command.experiment()).unwrap();
        assert_eq!(config.n, 150);
        assert_eq!(config.experiment, Experiment::EstimateQ);
    }
}
