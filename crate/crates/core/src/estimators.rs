//! Monte Carlo estimators built on the chain simulator.
//!
//! Replication `k` of an experiment at sweep point `p` always draws from
//! [`stream`]`(base_seed, p, k)`, and reductions run in replication order, so
//! results do not depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::ctmc::{self, first_entrance, Chain, Counters, Entrance, SimError, StopCondition};
use crate::diffusion::{reflected_cdf, DiffusionError};
use crate::model::{
    diffusion_coefficients, dist_to_axes, lyapunov_f, ModelError, ModelSpec, RateMode, ScaledModel, StateVector,
};
use crate::rng::stream;
use crate::stats::{binomial_half_width, binomial_se, ks_test, GofResult, Z95};

/// Smallest replication count accepted by [`estimate_q`].
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("rate mismatch: {0}")]
    RateMismatch(String),
    #[error("star chain cannot absorb: sum p0F_i pF0_i = {0}")]
    DegenerateChain(f64),
}

/// Uniform JSON envelope for estimator output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultObject {
    pub estimator: String,
    pub params: Value,
    pub values: Value,
    pub ci: Value,
    pub seed: u64,
    pub n: usize,
}

fn check_replications(n: usize, min: usize) -> Result<(), EstimatorError> {
    if n < min {
        return Err(EstimatorError::BadParameter(format!("n = {n} replications, need at least {min}")));
    }
    Ok(())
}

/// Runs `n` replications of `f` in parallel, collected in replication order.
fn replicate<T, F>(n: usize, base_seed: u64, point: u64, f: F) -> Result<Vec<T>, EstimatorError>
where
    T: Send,
    F: Fn(&mut crate::rng::RandomStream) -> Result<T, EstimatorError> + Sync,
{
    (0..n as u64).into_par_iter().map(|k| f(&mut stream(base_seed, point, k))).collect()
}

/// Angular frequencies of first entrance into the balls around `eps e_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QEstimate {
    pub q_hat: Vec<f64>,
    pub none_frac: f64,
    pub ci_half_width: Vec<f64>,
    pub counts: Vec<u64>,
    pub none: u64,
    pub n: usize,
    pub r: f64,
    pub eps: f64,
    pub kappa0: f64,
    pub seed: u64,
}

impl QEstimate {
    /// Tallies entrance marks into frequencies.
    pub fn from_marks(marks: &[Option<usize>], dim: usize, r: f64, eps: f64, kappa0: f64, seed: u64) -> Self {
        let mut counts = vec![0u64; dim];
        let mut none = 0u64;
        for m in marks {
            match m {
                Some(i) => counts[*i] += 1,
                None => none += 1,
            }
        }
        let n = marks.len();
        let nf = n as f64;
        QEstimate {
            q_hat: counts.iter().map(|&c| c as f64 / nf).collect(),
            none_frac: none as f64 / nf,
            ci_half_width: counts.iter().map(|&c| binomial_half_width(c, n as u64)).collect(),
            counts,
            none,
            n,
            r,
            eps,
            kappa0,
            seed,
        }
    }

    /// Standard error of `q_hat[i]`.
    pub fn se(&self, i: usize) -> f64 {
        binomial_se(self.q_hat[i], self.n as u64)
    }

    pub fn result_object(&self) -> ResultObject {
        ResultObject {
            estimator: "estimate_q".into(),
            params: json!({ "r": self.r, "eps": self.eps, "kappa0": self.kappa0 }),
            values: json!({ "q_hat": self.q_hat, "none_frac": self.none_frac }),
            ci: json!(self.ci_half_width),
            seed: self.seed,
            n: self.n,
        }
    }
}

/// `n` independent entrance runs from the empty state at sweep point `point`.
pub fn entrance_sample(
    model: &ScaledModel,
    eps: f64,
    kappa0: f64,
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<Vec<Entrance>, EstimatorError> {
    replicate(n, base_seed, point, |rng| Ok(first_entrance(model, eps, kappa0, rng)?))
}

/// [`estimate_q`] on an already scaled model and an explicit sweep point.
pub fn estimate_q_model(
    model: &ScaledModel,
    eps: f64,
    kappa0: f64,
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<QEstimate, EstimatorError> {
    check_replications(n, MIN_REPLICATIONS)?;
    let runs = entrance_sample(model, eps, kappa0, n, base_seed, point)?;
    let marks: Vec<_> = runs.iter().map(|e| e.mark).collect();
    Ok(QEstimate::from_marks(&marks, model.n(), model.r(), eps, kappa0, base_seed))
}

pub fn estimate_q(
    spec: &ModelSpec,
    mode: RateMode,
    r: f64,
    eps: f64,
    kappa0: f64,
    n: usize,
    base_seed: u64,
) -> Result<QEstimate, EstimatorError> {
    let model = ScaledModel::new(spec, r, mode)?;
    estimate_q_model(&model, eps, kappa0, n, base_seed, 0)
}

/// Successive differences between estimates at `r` and `2r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicRow {
    pub r: f64,
    pub r_next: f64,
    pub diff: Vec<f64>,
    pub ci_half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadicTable {
    pub estimates: Vec<QEstimate>,
    pub rows: Vec<DyadicRow>,
}

impl DyadicTable {
    pub fn result_object(&self) -> ResultObject {
        let diffs: Vec<_> =
            self.rows.iter().map(|row| json!({ "r": row.r, "r_next": row.r_next, "diff": row.diff })).collect();
        let ci: Vec<_> = self.rows.iter().map(|row| json!(row.ci_half_width)).collect();
        let first = &self.estimates[0];
        ResultObject {
            estimator: "dyadic_cauchy".into(),
            params: json!({
                "r_list": self.estimates.iter().map(|e| e.r).collect::<Vec<_>>(),
                "eps": first.eps,
                "kappa0": first.kappa0,
            }),
            values: json!(diffs),
            ci: json!(ci),
            seed: first.seed,
            n: first.n,
        }
    }
}

/// Estimates `q` at every scale of a dyadic list and reports `q^r - q^{2r}`.
#[allow(clippy::too_many_arguments)]
pub fn dyadic_cauchy(
    spec: &ModelSpec,
    mode: RateMode,
    eps: f64,
    kappa0: f64,
    r_list: &[f64],
    n: usize,
    base_seed: u64,
) -> Result<DyadicTable, EstimatorError> {
    if r_list.len() < 2 {
        return Err(EstimatorError::BadParameter("need at least two scales".into()));
    }
    for pair in r_list.windows(2) {
        if (pair[1] - 2.0 * pair[0]).abs() > 1e-12 * pair[1] {
            return Err(EstimatorError::BadParameter(format!("scales {} and {} are not dyadic", pair[0], pair[1])));
        }
    }
    let estimates = r_list
        .iter()
        .enumerate()
        .map(|(k, &r)| estimate_q_model(&ScaledModel::new(spec, r, mode)?, eps, kappa0, n, base_seed, k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = estimates
        .windows(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let dim = a.q_hat.len();
            DyadicRow {
                r: a.r,
                r_next: b.r,
                diff: (0..dim).map(|i| a.q_hat[i] - b.q_hat[i]).collect(),
                ci_half_width: (0..dim).map(|i| Z95 * a.se(i).hypot(b.se(i))).collect(),
            }
        })
        .collect();
    Ok(DyadicTable { estimates, rows })
}

/// Frequency of paths whose distance to the axes exceeds a threshold before a horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeExit {
    pub freq: f64,
    pub ci_half_width: f64,
    pub exits: u64,
    pub n: usize,
    pub r: f64,
    pub horizon: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl TubeExit {
    pub fn se(&self) -> f64 {
        binomial_se(self.freq, self.n as u64)
    }

    pub fn result_object(&self) -> ResultObject {
        ResultObject {
            estimator: "tube_exit".into(),
            params: json!({ "r": self.r, "horizon": self.horizon, "threshold": self.threshold }),
            values: json!({ "freq": self.freq, "exits": self.exits }),
            ci: json!(self.ci_half_width),
            seed: self.seed,
            n: self.n,
        }
    }
}

/// Does the path from `start` reach distance `> threshold` from the axes by `horizon`?
fn leaves_tube(
    model: &ScaledModel,
    start: &StateVector,
    horizon: f64,
    threshold: f64,
    rng: &mut crate::rng::RandomStream,
) -> Result<bool, EstimatorError> {
    let mut chain = Chain::new(model, start)?;
    if dist_to_axes(&chain.scaled_workload()) > threshold {
        return Ok(true);
    }
    let mut events = 0u64;
    while chain.advance(horizon, rng).is_some() {
        if dist_to_axes(&chain.scaled_workload()) > threshold {
            return Ok(true);
        }
        events += 1;
        if events >= ctmc::DEFAULT_EVENT_BUDGET {
            return Err(SimError::BudgetExhausted(events).into());
        }
    }
    Ok(false)
}

/// Estimates `P(sup_{t <= horizon} dist(X^r(t), S_0) > threshold)` from `start`.
#[allow(clippy::too_many_arguments)]
pub fn tube_escape_prob(
    model: &ScaledModel,
    start: &StateVector,
    horizon: f64,
    threshold: f64,
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<TubeExit, EstimatorError> {
    check_replications(n, 1)?;
    if !(horizon >= 0.0 && threshold >= 0.0) {
        return Err(EstimatorError::BadParameter(format!("horizon {horizon}, threshold {threshold}")));
    }
    let outcomes = replicate(n, base_seed, point, |rng| leaves_tube(model, start, horizon, threshold, rng))?;
    let exits = outcomes.iter().filter(|&&e| e).count() as u64;
    Ok(TubeExit {
        freq: exits as f64 / n as f64,
        ci_half_width: binomial_half_width(exits, n as u64),
        exits,
        n,
        r: model.r(),
        horizon,
        threshold,
        seed: base_seed,
    })
}

/// Options of [`tube_exit_freq`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeOptions {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Horizon is `c0 * ln r`.
    pub c0: f64,
    /// Scaled starting workload; defaults to `e_1`.
    pub start: Option<Vec<f64>>,
}

impl Default for TubeOptions {
    fn default() -> Self {
        TubeOptions { gamma1: 1.0, gamma2: 2.0, c0: 1.0, start: None }
    }
}

/// Exit frequency from the tube of width `gamma2 r^{-kappa0}` over `c0 ln r`,
/// started from a state with `F <= gamma1 r^{-kappa0}`.
#[allow(clippy::too_many_arguments)]
pub fn tube_exit_freq(
    spec: &ModelSpec,
    mode: RateMode,
    r: f64,
    kappa0: f64,
    options: &TubeOptions,
    n: usize,
    base_seed: u64,
) -> Result<TubeExit, EstimatorError> {
    let TubeOptions { gamma1, gamma2, c0, .. } = *options;
    if !(0.0 < gamma1 && gamma1 < gamma2) {
        return Err(EstimatorError::BadParameter(format!("need 0 < gamma1 < gamma2, got {gamma1}, {gamma2}")));
    }
    let model = ScaledModel::new(spec, r, mode)?;
    let x0 = options.start.clone().unwrap_or_else(|| {
        let mut e1 = vec![0.0; spec.n];
        e1[0] = 1.0;
        e1
    });
    let start = StateVector::nearest(&x0, &model);
    let width = r.powf(-kappa0);
    let f0 = lyapunov_f(&start.scaled_workload(&model));
    if f0 > gamma1 * width {
        return Err(EstimatorError::BadParameter(format!(
            "start has F = {f0} > gamma1 r^-kappa0 = {}",
            gamma1 * width
        )));
    }
    tube_escape_prob(&model, &start, c0 * r.ln(), gamma2 * width, n, base_seed, 0)
}

/// Path-law likelihood ratio `dP_to / dP_from` of a run summarized by its counters.
pub fn likelihood_weight(counters: &Counters, from: &ScaledModel, to: &ScaledModel) -> Result<f64, EstimatorError> {
    Ok(log_likelihood_weight(counters, from, to)?.exp())
}

/// Logarithm of [`likelihood_weight`].
pub fn log_likelihood_weight(counters: &Counters, from: &ScaledModel, to: &ScaledModel) -> Result<f64, EstimatorError> {
    if from.n() != to.n() || counters.arrivals.len() != from.n() {
        return Err(EstimatorError::RateMismatch("models and counters must have the same number of classes".into()));
    }
    if from.tie_break() != to.tie_break() {
        return Err(EstimatorError::RateMismatch("models must share the tie-break rule".into()));
    }
    let mut log_w = 0.0;
    for i in 0..from.n() {
        let (lf, lt, mf, mt) = (from.lambda_r()[i], to.lambda_r()[i], from.mu_r()[i], to.mu_r()[i]);
        if !(lf > 0.0 && lt > 0.0 && mf > 0.0 && mt > 0.0) {
            return Err(EstimatorError::RateMismatch(format!("class {} has a nonpositive rate", i + 1)));
        }
        if lt != lf {
            log_w += counters.arrivals[i] as f64 * (lt / lf).ln() - (lt - lf) * counters.t_end;
        }
        if mt != mf {
            log_w += counters.departures[i] as f64 * (mt / mf).ln() - (mt - mf) * counters.effort[i];
        }
    }
    Ok(log_w)
}

/// Self-normalized importance-sampling estimate of `q` under a target model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReweightedQ {
    pub q_hat: Vec<f64>,
    pub none_frac: f64,
    pub se: Vec<f64>,
    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub ess: f64,
    /// Mean of the raw weights; 1 in expectation.
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    pub max_log_weight: f64,
    pub n: usize,
}

impl ReweightedQ {
    pub fn result_object(&self, seed: u64) -> ResultObject {
        ResultObject {
            estimator: "reweight".into(),
            params: json!({}),
            values: json!({ "q_hat": self.q_hat, "none_frac": self.none_frac, "ess": self.ess, "mean_weight": self.mean_weight }),
            ci: json!(self.se.iter().map(|s| Z95 * s).collect::<Vec<_>>()),
            seed,
            n: self.n,
        }
    }
}

/// Reweights entrance runs simulated under `from` to estimate `q` under `to`.
///
/// Both models must share the workload lattice so that the entrance time is the
/// same functional of the queue path.
pub fn reweighted_q(runs: &[Entrance], from: &ScaledModel, to: &ScaledModel) -> Result<ReweightedQ, EstimatorError> {
    if from.step() != to.step() {
        return Err(EstimatorError::RateMismatch("service rates differ, so the entrance times differ".into()));
    }
    check_replications(runs.len(), 2)?;
    let log_w = runs.iter().map(|e| log_likelihood_weight(&e.counters, from, to)).collect::<Result<Vec<_>, _>>()?;
    let n = runs.len();
    let max_log = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // weights relative to the largest one, to stay finite
    let rel: Vec<f64> = log_w.iter().map(|l| (l - max_log).exp()).collect();
    let sum: f64 = rel.iter().sum();
    let sum2: f64 = rel.iter().map(|w| w * w).sum();
    let dim = from.n();
    let mut q_hat = vec![0.0; dim];
    let mut none = 0.0;
    for (e, w) in runs.iter().zip(&rel) {
        match e.mark {
            Some(i) => q_hat[i] += w / sum,
            None => none += w / sum,
        }
    }
    let se = (0..dim)
        .map(|i| {
            let ss: f64 = runs
                .iter()
                .zip(&rel)
                .map(|(e, w)| {
                    let hit = if e.mark == Some(i) { 1.0 } else { 0.0 };
                    (w * (hit - q_hat[i])).powi(2)
                })
                .sum();
            ss.sqrt() / sum
        })
        .collect();
    let raw: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
    let mean_weight = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|w| (w - mean_weight).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok(ReweightedQ {
        q_hat,
        none_frac: none,
        se,
        ess: sum * sum / sum2,
        mean_weight,
        mean_weight_se: (var / n as f64).sqrt(),
        max_log_weight: max_log,
        n,
    })
}

/// Scaled total workload at time `t` for `n` runs from the empty state.
pub fn radial_marginal(
    model: &ScaledModel,
    t: f64,
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<Vec<f64>, EstimatorError> {
    let zero = StateVector::zero(model.n());
    replicate(n, base_seed, point, |rng| {
        let path = ctmc::run(model, &zero, StopCondition::TimeHorizon(t), rng, false)?;
        if path.budget_exhausted {
            return Err(SimError::BudgetExhausted(ctmc::DEFAULT_EVENT_BUDGET).into());
        }
        Ok(path.q_final.radial(model))
    })
}

/// KS test of the radial marginal at `t_probe` against the limiting RBM law.
pub fn rbm_gof_model(
    model: &ScaledModel,
    t_probe: f64,
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<GofResult, EstimatorError> {
    if n == 0 {
        return Err(EstimatorError::BadParameter("n = 0".into()));
    }
    if !(t_probe > 0.0) {
        return Err(EstimatorError::BadParameter(format!("t_probe = {t_probe} must be positive")));
    }
    let coeffs = diffusion_coefficients(model.spec())?;
    let (b, sigma) = match model.mode() {
        RateMode::General => (coeffs.b, coeffs.sigma()),
        RateMode::Homogeneous => (0.0, coeffs.sigma()),
    };
    let sample = radial_marginal(model, t_probe, n, base_seed, point)?;
    Ok(ks_test(&sample, |y| reflected_cdf(b, sigma, t_probe, 0.0, y)))
}

pub fn rbm_gof(
    spec: &ModelSpec,
    mode: RateMode,
    r: f64,
    t_probe: f64,
    n: usize,
    base_seed: u64,
) -> Result<GofResult, EstimatorError> {
    rbm_gof_model(&ScaledModel::new(spec, r, mode)?, t_probe, n, base_seed, 0)
}

/// `max_i |Q^_i - mu_i X^_i|`, evaluated as `|mu^r_i - mu_i r^2| X^_i / r^2`.
///
/// The offset is stored exactly, so the result is exactly 0 in homogeneous mode.
pub fn queue_workload_transform(state: &StateVector, model: &ScaledModel) -> f64 {
    let x = state.scaled_workload(model);
    let r = model.r();
    (0..model.n()).map(|i| model.mu_offset()[i].abs() / (r * r) * x[i]).fold(0.0, f64::max)
}

/// Outcome of the optional stopping check on the total workload.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub start_value: f64,
    pub mean_end: f64,
    pub se: f64,
    pub n: usize,
}

impl MartingaleCheck {
    /// `|mean - start| <= k SE`.
    pub fn within(&self, k: f64) -> bool {
        (self.mean_end - self.start_value).abs() <= k * self.se
    }
}

/// Total nominal workload of the unscaled chain at `zeta ^ tau(m)`, from `start`.
pub fn stopped_martingale(
    spec: &ModelSpec,
    start: &StateVector,
    m: f64,
    n: usize,
    base_seed: u64,
) -> Result<MartingaleCheck, EstimatorError> {
    check_replications(n, 2)?;
    let model = ScaledModel::new(spec, 1.0, RateMode::Homogeneous)?;
    let start_value = start.radial(&model);
    if !(start_value > 0.0 && start_value < m) {
        return Err(EstimatorError::BadParameter(format!("start workload {start_value} must lie in (0, {m})")));
    }
    let ends = replicate(n, base_seed, 0, |rng| {
        let path = ctmc::run(&model, start, StopCondition::RadialExits(m), rng, false)?;
        if path.budget_exhausted {
            return Err(SimError::BudgetExhausted(ctmc::DEFAULT_EVENT_BUDGET).into());
        }
        Ok(path.q_final.radial(&model))
    })?;
    let (mean_end, se) = crate::stats::mean_se(&ends);
    Ok(MartingaleCheck { start_value, mean_end, se, n })
}

fn check_star(p0f: &[f64], pf0: &[f64], pfg: &[f64]) -> Result<f64, EstimatorError> {
    let n = p0f.len();
    if n == 0 || pf0.len() != n || pfg.len() != n {
        return Err(EstimatorError::BadParameter("star chain vectors must be nonempty and of equal length".into()));
    }
    let all = p0f.iter().chain(pf0).chain(pfg);
    if all.clone().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(EstimatorError::BadParameter("probabilities must lie in [0, 1]".into()));
    }
    if (p0f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(EstimatorError::BadParameter("p0F must sum to 1".into()));
    }
    if pf0.iter().zip(pfg).any(|(a, b)| (a + b - 1.0).abs() > 1e-12) {
        return Err(EstimatorError::BadParameter("pF0_i + pFG_i must equal 1".into()));
    }
    let ret: f64 = p0f.iter().zip(pf0).map(|(a, b)| a * b).sum();
    if ret >= 1.0 - 1e-15 {
        return Err(EstimatorError::DegenerateChain(ret));
    }
    Ok(ret)
}

/// Absorption probabilities `p(0, G_i)` of the star-shaped chain, in closed form.
pub fn star_absorption(p0f: &[f64], pf0: &[f64], pfg: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    let ret = check_star(p0f, pf0, pfg)?;
    Ok(p0f.iter().zip(pfg).map(|(a, g)| a * g / (1.0 - ret)).collect())
}

/// Absorption probabilities of the star chain by a direct linear solve over its
/// transient states `0, F_1, ..., F_N`.
pub fn star_absorption_solve(p0f: &[f64], pf0: &[f64], pfg: &[f64]) -> Result<Vec<f64>, EstimatorError> {
    check_star(p0f, pf0, pfg)?;
    let n = p0f.len();
    // transient block P_TT and absorbing block P_TA
    let mut a = DMatrix::<f64>::identity(n + 1, n + 1);
    let mut rhs = DMatrix::<f64>::zeros(n + 1, n);
    for i in 0..n {
        a[(0, i + 1)] -= p0f[i];
        a[(i + 1, 0)] -= pf0[i];
        rhs[(i + 1, i)] = pfg[i];
    }
    let lu = a.lu();
    (0..n)
        .map(|i| {
            let col: DVector<f64> = rhs.column(i).into_owned();
            lu.solve(&col).map(|h| h[0]).ok_or(EstimatorError::DegenerateChain(1.0))
        })
        .collect()
}

/// Monte Carlo absorption frequencies of the star chain started at 0.
pub fn star_monte_carlo(
    p0f: &[f64],
    pf0: &[f64],
    pfg: &[f64],
    n: usize,
    base_seed: u64,
    point: u64,
) -> Result<Vec<f64>, EstimatorError> {
    check_star(p0f, pf0, pfg)?;
    let pick = |probs: &[f64], u: f64| {
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    };
    let hits = replicate(n, base_seed, point, |rng| loop {
        let i = pick(p0f, rng.random());
        if rng.random::<f64>() < pfg[i] {
            return Ok(i);
        }
    })?;
    let mut freq = vec![0.0; p0f.len()];
    for i in hits {
        freq[i] += 1.0 / n as f64;
    }
    Ok(freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TieBreakRule;
    use crate::rng::replication_stream;

    fn sym() -> ModelSpec {
        ModelSpec::symmetric_pair()
    }

    #[test]
    fn partition_identity_and_ci() {
        let est = estimate_q(&sym(), RateMode::Homogeneous, 5.0, 1.0, 0.25, 200, 3).unwrap();
        assert_eq!(est.q_hat.iter().sum::<f64>() + est.none_frac, 1.0);
        assert_eq!(est.counts.iter().sum::<u64>() + est.none, 200);
        assert!(est.ci_half_width.iter().all(|&h| h >= 0.0));
        let obj = serde_json::to_value(est.result_object()).unwrap();
        assert_eq!(obj["estimator"], "estimate_q");
        assert_eq!(obj["n"], 200);
    }

    #[test]
    fn estimate_q_rejects_small_n_and_overlapping_balls() {
        assert!(matches!(
            estimate_q(&sym(), RateMode::Homogeneous, 10.0, 1.0, 0.25, 50, 0),
            Err(EstimatorError::BadParameter(_))
        ));
        assert!(matches!(
            estimate_q(&sym(), RateMode::Homogeneous, 2.0, 1.0, 0.25, 100, 0),
            Err(EstimatorError::Sim(SimError::AmbiguousBall { .. }))
        ));
    }

    #[test]
    fn estimates_are_reproducible() {
        let a = estimate_q(&sym(), RateMode::Homogeneous, 5.0, 1.0, 0.25, 120, 9).unwrap();
        let b = estimate_q(&sym(), RateMode::Homogeneous, 5.0, 1.0, 0.25, 120, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dyadic_rows() {
        let table = dyadic_cauchy(&sym(), RateMode::Homogeneous, 1.0, 0.25, &[5.0, 10.0], 100, 1).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(matches!(
            dyadic_cauchy(&sym(), RateMode::Homogeneous, 1.0, 0.25, &[5.0, 12.0], 100, 1),
            Err(EstimatorError::BadParameter(_))
        ));
    }

    #[test]
    fn identical_models_give_unit_weights() {
        let model = ScaledModel::new(&sym(), 5.0, RateMode::Homogeneous).unwrap();
        for k in 0..20 {
            let e = first_entrance(&model, 1.0, 0.25, &mut replication_stream(5, k)).unwrap();
            assert_eq!(likelihood_weight(&e.counters, &model, &model).unwrap(), 1.0);
        }
    }

    #[test]
    fn likelihood_weight_matches_hand_computation() {
        let spec = sym().with_second_order(vec![1.0, -1.0], vec![2.0, 0.0]);
        let from = ScaledModel::new(&spec, 4.0, RateMode::Homogeneous).unwrap();
        let to = ScaledModel::new(&spec, 4.0, RateMode::General).unwrap();
        let c = Counters { arrivals: vec![3, 1], departures: vec![2, 0], effort: vec![0.01, 0.02], t_end: 0.05 };
        // lambda: 160 -> 164, 160 -> 156; mu: 320 -> 328
        let expected = 3.0 * (164.0f64 / 160.0).ln() - 4.0 * 0.05
            + (156.0f64 / 160.0).ln()
            + 4.0 * 0.05
            + 2.0 * (328.0f64 / 320.0).ln()
            - 8.0 * 0.01;
        let got = log_likelihood_weight(&c, &from, &to).unwrap();
        assert!((got - expected).abs() < 1e-12);

        let other = ScaledModel::new(
            &spec.clone().with_tie_break(TieBreakRule::two_class(0.3).unwrap()),
            4.0,
            RateMode::General,
        )
        .unwrap();
        assert!(matches!(log_likelihood_weight(&c, &from, &other), Err(EstimatorError::RateMismatch(_))));
    }

    #[test]
    fn weights_have_unit_mean_at_a_fixed_horizon() {
        let spec = sym().with_second_order(vec![1.0, -1.0], vec![0.0, 0.0]);
        let from = ScaledModel::new(&spec, 3.0, RateMode::Homogeneous).unwrap();
        let to = ScaledModel::new(&spec, 3.0, RateMode::General).unwrap();
        let zero = StateVector::zero(2);
        let weights: Vec<f64> = (0..4000)
            .map(|k| {
                let path =
                    ctmc::run(&from, &zero, StopCondition::TimeHorizon(0.5), &mut replication_stream(6, k), false)
                        .unwrap();
                likelihood_weight(&path.counters, &from, &to).unwrap()
            })
            .collect();
        let (mean, se) = crate::stats::mean_se(&weights);
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn rbm_gof_rejects_empty_sample() {
        assert!(matches!(rbm_gof(&sym(), RateMode::Homogeneous, 5.0, 1.0, 0, 1), Err(EstimatorError::BadParameter(_))));
    }

    #[test]
    fn queue_workload_discrepancy() {
        let spec = sym().with_second_order(vec![0.0, 0.0], vec![2.0, 0.0]);
        let hom = ScaledModel::new(&spec, 10.0, RateMode::Homogeneous).unwrap();
        let gen = ScaledModel::new(&spec, 10.0, RateMode::General).unwrap();
        let state = StateVector::new(vec![40, 7]);
        assert_eq!(queue_workload_transform(&state, &hom), 0.0);
        // mu^r_1 = 2020, X^_1 = 10 * 40 / 2020, discrepancy = (mu_hat_1 / r) X^_1
        let x1 = 10.0 * 40.0 / 2020.0;
        let expected = 0.2 * x1;
        assert!((queue_workload_transform(&state, &gen) - expected).abs() < 1e-15);
        // direct definition Q/r - mu X^
        let direct = 40.0 / 10.0 - 20.0 * x1;
        assert!((direct - expected).abs() < 1e-12);
        let far = ScaledModel::new(&spec, 1000.0, RateMode::General).unwrap();
        let s = StateVector::nearest(&[x1, 0.0], &far);
        assert!(queue_workload_transform(&s, &far) < 0.011 * expected);
    }

    #[test]
    fn star_chain_examples() {
        assert_eq!(star_absorption(&[0.3, 0.7], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0.3, 0.7]);
        assert_eq!(star_absorption(&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let p = star_absorption(&[0.6, 0.4], &[0.5, 0.25], &[0.5, 0.75]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        let solved = star_absorption_solve(&[0.6, 0.4], &[0.5, 0.25], &[0.5, 0.75]).unwrap();
        assert!((solved[0] - 0.5).abs() < 1e-12 && (solved[1] - 0.5).abs() < 1e-12);
        assert!(matches!(star_absorption(&[1.0], &[1.0], &[0.0]), Err(EstimatorError::DegenerateChain(_))));
        let mc = star_monte_carlo(&[0.6, 0.4], &[0.5, 0.25], &[0.5, 0.75], 20000, 2, 0).unwrap();
        assert!((mc[0] - 0.5).abs() < 3.0 * (0.25f64 / 20000.0).sqrt());
    }

    #[test]
    fn tube_exit_from_axis_is_admissible() {
        let exit = tube_exit_freq(&sym(), RateMode::Homogeneous, 5.0, 0.25, &TubeOptions::default(), 50, 1).unwrap();
        assert!((0.0..=1.0).contains(&exit.freq));
        let bad = TubeOptions { start: Some(vec![1.0, 1.0]), ..TubeOptions::default() };
        assert!(tube_exit_freq(&sym(), RateMode::Homogeneous, 5.0, 0.25, &bad, 50, 1).is_err());
    }

    #[test]
    fn martingale_requires_interior_start() {
        let spec = sym();
        assert!(stopped_martingale(&spec, &StateVector::zero(2), 4.0, 10, 1).is_err());
        let check = stopped_martingale(&spec, &StateVector::new(vec![20, 0]), 2.0, 200, 1).unwrap();
        assert!(check.within(4.0), "{check:?}");
    }
}
