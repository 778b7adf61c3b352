//! Configuration-driven experiments: parameter sweeps over two-class models,
//! single estimator runs, and the acceptance self-test.

pub mod acceptance;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ctmc::SimError;
use crate::diffusion::DiffusionError;
use crate::estimators::{
    self, dyadic_cauchy, entrance_sample, estimate_q_model, rbm_gof_model, reweighted_q, stopped_martingale,
    tube_exit_freq, EstimatorError, QEstimate, TubeOptions,
};
use crate::model::{validate, ModelError, ModelSpec, RateMode, ScaledModel, StateVector, TieBreakRule};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("infeasible sweep point {param} = {value}: {reason}")]
    InfeasiblePoint { param: &'static str, value: f64, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Two-class model families swept by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepFamily {
    /// `mu = (20, 20)`, `lambda_2 = 20 - lambda_1`; sweeps `lambda_1`.
    A,
    /// `lambda = (10, 10)`, `1/mu_2 = 1/10 - 1/mu_1`; sweeps `mu_1`.
    B,
    /// `lambda_2 = 10`, `mu_2 = 20`, `mu_1 = 2 lambda_1`; sweeps `lambda_1`.
    C,
    /// `lambda = (10, 10)`, `mu = (20, 20)`; sweeps the tie-break share `p_1`.
    D,
}

impl SweepFamily {
    pub const ALL: [SweepFamily; 4] = [SweepFamily::A, SweepFamily::B, SweepFamily::C, SweepFamily::D];

    pub fn param(self) -> &'static str {
        match self {
            SweepFamily::A | SweepFamily::C => "lambda1",
            SweepFamily::B => "mu1",
            SweepFamily::D => "p1",
        }
    }

    /// Nine evenly spaced interior points.
    pub fn default_grid(self) -> Vec<f64> {
        let (start, step) = match self {
            SweepFamily::A | SweepFamily::C => (2.0, 2.0),
            SweepFamily::B => (12.0, 2.0),
            SweepFamily::D => (0.1, 0.1),
        };
        (0..9).map(|k| start + step * k as f64).map(|v: f64| (v * 1e10).round() / 1e10).collect()
    }

    /// Grid value at which the resolved model is symmetric under swapping the classes.
    pub fn symmetric_value(self) -> Option<f64> {
        match self {
            SweepFamily::A => Some(10.0),
            SweepFamily::B => Some(20.0),
            SweepFamily::C => None,
            SweepFamily::D => Some(0.5),
        }
    }

    /// The critical model at `value`.
    pub fn resolve(self, value: f64) -> Result<ModelSpec, HarnessError> {
        let infeasible =
            |reason: &str| HarnessError::InfeasiblePoint { param: self.param(), value, reason: reason.into() };
        let spec = match self {
            SweepFamily::A => {
                if !(value > 0.0 && value < 20.0) {
                    return Err(infeasible("need 0 < lambda1 < 20"));
                }
                ModelSpec::first_order(vec![value, 20.0 - value], vec![20.0, 20.0])
            }
            SweepFamily::B => {
                if !(value > 10.0 && value.is_finite()) {
                    return Err(infeasible("need mu1 > 10"));
                }
                ModelSpec::first_order(vec![10.0, 10.0], vec![value, 1.0 / (0.1 - 1.0 / value)])
            }
            SweepFamily::C => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(infeasible("need lambda1 > 0"));
                }
                ModelSpec::first_order(vec![value, 10.0], vec![2.0 * value, 20.0])
            }
            SweepFamily::D => {
                let rule = TieBreakRule::two_class(value).map_err(|e| infeasible(&e.to_string()))?;
                ModelSpec::symmetric_pair().with_tie_break(rule)
            }
        };
        validate(&spec).map_err(|e| infeasible(&e.to_string()))?;
        Ok(spec)
    }
}

/// Experiment selected by a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    EstimateQ,
    SweepA,
    SweepB,
    SweepC,
    SweepD,
    RbmGof,
    TubeExit,
    Dyadic,
    Martingale,
    Reweight,
    Selftest,
}

impl Experiment {
    pub fn sweep_family(self) -> Option<SweepFamily> {
        match self {
            Experiment::SweepA => Some(SweepFamily::A),
            Experiment::SweepB => Some(SweepFamily::B),
            Experiment::SweepC => Some(SweepFamily::C),
            Experiment::SweepD => Some(SweepFamily::D),
            _ => None,
        }
    }
}

fn default_mode() -> RateMode {
    RateMode::Homogeneous
}
fn default_r() -> f64 {
    10.0
}
fn default_eps() -> f64 {
    1.0
}
fn default_kappa0() -> f64 {
    0.25
}
fn default_n() -> usize {
    1000
}
fn default_workers() -> usize {
    1
}
fn default_t_probe() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Model for single-model experiments; defaults to the symmetric pair.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default = "default_mode")]
    pub mode: RateMode,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_kappa0")]
    pub kappa0: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Time horizon; defaults depend on the experiment.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output path prefix.
    #[serde(default)]
    pub output: Option<String>,
    /// Sweep values overriding the family's default grid.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Scales for the dyadic experiment.
    #[serde(default)]
    pub r_list: Option<Vec<f64>>,
    #[serde(default = "default_t_probe")]
    pub t_probe: f64,
    /// Starting point (scaled workload; nominal workload for the martingale check).
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            model: None,
            mode: default_mode(),
            r: default_r(),
            eps: default_eps(),
            kappa0: default_kappa0(),
            n: default_n(),
            base_seed: 0,
            horizon: None,
            workers: default_workers(),
            output: None,
            grid: None,
            r_list: None,
            t_probe: default_t_probe(),
            start: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let mut config: ExperimentConfig = serde_json::from_str(text)?;
        if let Some(model) = config.model.as_mut() {
            model.fill_defaults();
        }
        config.check()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rejects nonpositive knobs and invalid models.
    pub fn check(&self) -> Result<(), HarnessError> {
        let positive = [("r", self.r), ("eps", self.eps), ("kappa0", self.kappa0), ("t_probe", self.t_probe)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!("{name} = {v} must be positive")));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(HarnessError::Config(format!("horizon = {h} must be positive")));
            }
        }
        if self.n == 0 || self.workers == 0 {
            return Err(HarnessError::Config("n and workers must be positive".into()));
        }
        if let Some(model) = &self.model {
            validate(model)?;
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model.clone().unwrap_or_else(ModelSpec::symmetric_pair)
    }
}

/// One row of a sweep table; `estimate` is `None` for skipped points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub spec: Option<ModelSpec>,
    pub estimate: Option<QEstimate>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub family: SweepFamily,
    pub points: Vec<SweepPoint>,
    pub n: usize,
    pub r: f64,
    pub eps: f64,
    pub kappa0: f64,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "sweep_param,value,q1_hat,ci_half,none_frac,n,r,eps,kappa0,seed";

impl SweepTable {
    /// CSV with a fixed header; skipped points leave the estimate columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let (q1, ci, none, n) = match &p.estimate {
                Some(e) => (e.q_hat[0].to_string(), e.ci_half_width[0].to_string(), e.none_frac.to_string(), e.n),
                None => (String::new(), String::new(), String::new(), 0),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.family.param(),
                p.value,
                q1,
                ci,
                none,
                n,
                self.r,
                self.eps,
                self.kappa0,
                self.seed
            );
        }
        out
    }

    /// Estimated points in grid order.
    pub fn estimates(&self) -> impl Iterator<Item = (f64, &QEstimate)> {
        self.points.iter().filter_map(|p| p.estimate.as_ref().map(|e| (p.value, e)))
    }
}

/// Runs `f` on a pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    Ok(pool.install(f))
}

/// Estimates `q_1` at every grid value of `family`; sweep point `k` owns seed key `k`.
pub fn run_sweep(config: &ExperimentConfig, family: SweepFamily) -> Result<SweepTable, HarnessError> {
    config.check()?;
    let grid = config.grid.clone().unwrap_or_else(|| family.default_grid());
    with_workers(config.workers, || {
        let mut points = Vec::with_capacity(grid.len());
        for (k, &value) in grid.iter().enumerate() {
            let spec = match family.resolve(value) {
                Ok(spec) => spec,
                Err(e) => {
                    log::warn!("{e}");
                    points.push(SweepPoint { value, spec: None, estimate: None, warning: Some(e.to_string()) });
                    continue;
                }
            };
            let model = ScaledModel::new(&spec, config.r, config.mode)?;
            let estimate = estimate_q_model(&model, config.eps, config.kappa0, config.n, config.base_seed, k as u64)?;
            log::info!(
                "{} = {value}: q1 = {:.4} +- {:.4}",
                family.param(),
                estimate.q_hat[0],
                estimate.ci_half_width[0]
            );
            points.push(SweepPoint { value, spec: Some(spec), estimate: Some(estimate), warning: None });
        }
        Ok(SweepTable {
            family,
            points,
            n: config.n,
            r: config.r,
            eps: config.eps,
            kappa0: config.kappa0,
            seed: config.base_seed,
        })
    })?
}

/// Runs a single-model experiment and returns its JSON result object.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Value, HarnessError> {
    config.check()?;
    let spec = config.model_spec();
    let seed = config.base_seed;
    with_workers(config.workers, || -> Result<Value, HarnessError> {
        let value = match config.experiment {
            Experiment::EstimateQ => {
                let model = ScaledModel::new(&spec, config.r, config.mode)?;
                let est = estimate_q_model(&model, config.eps, config.kappa0, config.n, seed, 0)?;
                serde_json::to_value(est.result_object())?
            }
            Experiment::SweepA | Experiment::SweepB | Experiment::SweepC | Experiment::SweepD => {
                let family = config.experiment.sweep_family().expect("sweep experiment");
                let table = run_sweep(config, family)?;
                json!({ "estimator": "sweep", "family": family, "csv": table.to_csv() })
            }
            Experiment::RbmGof => {
                let model = ScaledModel::new(&spec, config.r, config.mode)?;
                let gof = rbm_gof_model(&model, config.t_probe, config.n, seed, 0)?;
                serde_json::to_value(estimators::ResultObject {
                    estimator: "rbm_gof".into(),
                    params: json!({ "r": config.r, "t_probe": config.t_probe, "mode": config.mode }),
                    values: json!({ "statistic": gof.statistic, "pass": gof.pass }),
                    ci: json!({ "threshold": gof.threshold }),
                    seed,
                    n: gof.n,
                })?
            }
            Experiment::TubeExit => {
                let options = TubeOptions {
                    c0: config.horizon.map_or(1.0, |h| h / config.r.ln()),
                    start: config.start.clone(),
                    ..TubeOptions::default()
                };
                let exit = tube_exit_freq(&spec, config.mode, config.r, config.kappa0, &options, config.n, seed)?;
                serde_json::to_value(exit.result_object())?
            }
            Experiment::Dyadic => {
                let r_list = config.r_list.clone().unwrap_or_else(|| vec![5.0, 10.0, 20.0]);
                let table = dyadic_cauchy(&spec, config.mode, config.eps, config.kappa0, &r_list, config.n, seed)?;
                serde_json::to_value(table.result_object())?
            }
            Experiment::Martingale => {
                let m = 4.0 * config.r;
                let model = ScaledModel::new(&spec, 1.0, RateMode::Homogeneous)?;
                let x0 = config.start.clone().unwrap_or_else(|| {
                    let mut x = vec![0.0; spec.n];
                    x[0] = m / 4.0;
                    x
                });
                let start = StateVector::nearest(&x0, &model);
                let check = stopped_martingale(&spec, &start, m, config.n, seed)?;
                serde_json::to_value(estimators::ResultObject {
                    estimator: "martingale".into(),
                    params: json!({ "m": m, "start": start.q }),
                    values: json!({ "start_value": check.start_value, "mean_end": check.mean_end }),
                    ci: json!(3.0 * check.se),
                    seed,
                    n: check.n,
                })?
            }
            Experiment::Reweight => {
                let from = ScaledModel::new(&spec, config.r, RateMode::Homogeneous)?;
                let to = ScaledModel::new(&spec, config.r, RateMode::General)?;
                let runs = entrance_sample(&from, config.eps, config.kappa0, config.n, seed, 0)?;
                let rw = reweighted_q(&runs, &from, &to)?;
                serde_json::to_value(rw.result_object(seed))?
            }
            Experiment::Selftest => {
                let report = acceptance::selftest(seed, acceptance::Scale::Reduced);
                serde_json::to_value(report)?
            }
        };
        Ok(value)
    })?
}
