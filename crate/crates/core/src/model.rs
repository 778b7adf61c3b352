//! Model parameterization and the serve-the-shortest-queue policy geometry.
//!
//! A [`ModelSpec`] holds the first- and second-order rates of an `N`-class
//! single-server Markovian queue together with the tie-break fractions used
//! when several buffers hold the shortest nominal workload. A [`ScaledModel`]
//! fixes the heavy-traffic scale `r` and resolves the concrete rates. Both are
//! immutable once built and can be shared freely between worker threads.
//!
//! Classes are indexed from zero in code. The JSON form of a tie-break subset
//! uses one-based class labels.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `sum_i lambda_i / mu_i - 1`.
pub const CRITICALITY_TOL: f64 = 1e-12;

/// Tolerance on the sum of a tie-break probability vector.
pub const TIE_BREAK_TOL: f64 = 1e-12;

/// Relative tolerance used when mapping a scaled point back onto the lattice.
pub const LATTICE_TOL: f64 = 1e-9;

/// Largest supported class count (subsets are stored as 64-bit masks).
pub const MAX_CLASSES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model is not critically loaded: sum(lambda/mu) - 1 = {residual:e}")]
    NonCritical { residual: f64 },
    #[error("bad rate: {0}")]
    BadRate(String),
    #[error("bad tie-break rule: {0}")]
    BadTieBreak(String),
    #[error("point is off the scaled lattice in class {class} (queue index {index})")]
    LatticeMismatch { class: usize, index: f64 },
    #[error("dimension mismatch: expected {expected} classes, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A subset of classes, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ClassSet(u64);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn singleton(i: usize) -> Self {
        ClassSet(1 << i)
    }

    pub fn from_classes(classes: &[usize]) -> Self {
        ClassSet(classes.iter().fold(0, |m, &i| m | (1 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The single member, if the set is a singleton.
    pub fn as_singleton(self) -> Option<usize> {
        (self.0.count_ones() == 1).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Display for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", labels.join(","))
    }
}

/// One entry of the JSON tie-break table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieBreakEntry {
    /// One-based class labels.
    pub subset: Vec<usize>,
    pub p: Vec<f64>,
}

/// Effort split `p^K` among the buffers of a tie set `K`.
///
/// Subsets without an entry split effort uniformly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<TieBreakEntry>", into = "Vec<TieBreakEntry>")]
pub struct TieBreakRule {
    table: BTreeMap<ClassSet, Vec<(usize, f64)>>,
}

impl TieBreakRule {
    pub fn uniform() -> Self {
        Self::default()
    }

    /// Two-class rule with `p^{1,2} = (p1, 1 - p1)`.
    pub fn two_class(p1: f64) -> Result<Self, ModelError> {
        let mut rule = Self::default();
        rule.insert(&[0, 1], &[p1, 1.0 - p1])?;
        Ok(rule)
    }

    /// Stores `p` for the zero-based `subset`; `p[k]` belongs to `subset[k]`.
    pub fn insert(&mut self, subset: &[usize], p: &[f64]) -> Result<(), ModelError> {
        if subset.is_empty() {
            return Err(ModelError::BadTieBreak("empty subset".into()));
        }
        if subset.len() != p.len() {
            return Err(ModelError::BadTieBreak(format!(
                "subset has {} classes but p has {} entries",
                subset.len(),
                p.len()
            )));
        }
        if let Some(&i) = subset.iter().find(|&&i| i >= MAX_CLASSES) {
            return Err(ModelError::BadTieBreak(format!("class index {i} out of range")));
        }
        let set = ClassSet::from_classes(subset);
        if set.len() != subset.len() {
            return Err(ModelError::BadTieBreak("repeated class in subset".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(ModelError::BadTieBreak(format!("negative or non-finite entry in {p:?}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > TIE_BREAK_TOL {
            return Err(ModelError::BadTieBreak(format!("p for {set} sums to {total}")));
        }
        if set.len() == 1 && p[0] != 1.0 {
            return Err(ModelError::BadTieBreak(format!("singleton {set} must have p = 1")));
        }
        let mut pairs: Vec<(usize, f64)> = subset.iter().copied().zip(p.iter().copied()).collect();
        pairs.sort_by_key(|&(i, _)| i);
        self.table.insert(set, pairs);
        Ok(())
    }

    /// Explicitly stored entry for `set`, as `(class, fraction)` pairs.
    pub fn stored(&self, set: ClassSet) -> Option<&[(usize, f64)]> {
        self.table.get(&set).map(Vec::as_slice)
    }

    /// Fraction of effort given to class `i` when the tie set is `set`.
    pub fn fraction(&self, set: ClassSet, i: usize) -> f64 {
        if !set.contains(i) {
            return 0.0;
        }
        match self.table.get(&set) {
            Some(pairs) => pairs.iter().find(|&&(j, _)| j == i).map_or(0.0, |&(_, p)| p),
            None => 1.0 / set.len() as f64,
        }
    }

    /// Calls `visit(i, p_i)` for each class of `set` with its effort fraction.
    #[inline]
    pub fn for_each_fraction(&self, set: ClassSet, mut visit: impl FnMut(usize, f64)) {
        if let Some(i) = set.as_singleton() {
            visit(i, 1.0);
            return;
        }
        match self.table.get(&set) {
            Some(pairs) => pairs.iter().for_each(|&(i, p)| visit(i, p)),
            None => {
                let p = 1.0 / set.len() as f64;
                set.iter().for_each(|i| visit(i, p));
            }
        }
    }

    fn max_class(&self) -> Option<usize> {
        self.table.keys().map(|s| 63 - s.bits().leading_zeros() as usize).max()
    }

    /// The same rule with classes relabelled: class `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let table = self
            .table
            .values()
            .map(|pairs| {
                let mut moved: Vec<(usize, f64)> = pairs.iter().map(|&(i, p)| (perm[i], p)).collect();
                moved.sort_by_key(|&(i, _)| i);
                let set = ClassSet::from_classes(&moved.iter().map(|&(i, _)| i).collect::<Vec<_>>());
                (set, moved)
            })
            .collect();
        TieBreakRule { table }
    }
}

impl TryFrom<Vec<TieBreakEntry>> for TieBreakRule {
    type Error = ModelError;

    fn try_from(entries: Vec<TieBreakEntry>) -> Result<Self, Self::Error> {
        let mut rule = TieBreakRule::default();
        for entry in entries {
            if entry.subset.contains(&0) {
                return Err(ModelError::BadTieBreak("class labels are one-based".into()));
            }
            let zero_based: Vec<usize> = entry.subset.iter().map(|&i| i - 1).collect();
            rule.insert(&zero_based, &entry.p)?;
        }
        Ok(rule)
    }
}

impl From<TieBreakRule> for Vec<TieBreakEntry> {
    fn from(rule: TieBreakRule) -> Self {
        rule.table
            .values()
            .map(|pairs| TieBreakEntry {
                subset: pairs.iter().map(|&(i, _)| i + 1).collect(),
                p: pairs.iter().map(|&(_, p)| p).collect(),
            })
            .collect()
    }
}

/// First- and second-order parameters of the multiclass queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(default)]
    pub lambda_hat: Vec<f64>,
    #[serde(default)]
    pub mu_hat: Vec<f64>,
    #[serde(default)]
    pub tie_break: TieBreakRule,
}

/// Outcome of a successful [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    /// `sum_i lambda_i / mu_i - 1`.
    pub residual: f64,
}

impl ModelSpec {
    /// Spec with zero second-order terms and uniform tie-breaking.
    pub fn first_order(lambda: Vec<f64>, mu: Vec<f64>) -> Self {
        let n = lambda.len();
        ModelSpec { n, lambda, mu, lambda_hat: vec![0.0; n], mu_hat: vec![0.0; n], tie_break: TieBreakRule::uniform() }
    }

    /// Two symmetric classes with `lambda = (10, 10)`, `mu = (20, 20)`.
    pub fn symmetric_pair() -> Self {
        Self::first_order(vec![10.0, 10.0], vec![20.0, 20.0])
    }

    pub fn with_second_order(mut self, lambda_hat: Vec<f64>, mu_hat: Vec<f64>) -> Self {
        self.lambda_hat = lambda_hat;
        self.mu_hat = mu_hat;
        self
    }

    pub fn with_tie_break(mut self, rule: TieBreakRule) -> Self {
        self.tie_break = rule;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut spec: ModelSpec = serde_json::from_str(text)?;
        spec.fill_defaults();
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    /// Missing second-order vectors mean zero.
    pub fn fill_defaults(&mut self) {
        if self.lambda_hat.is_empty() {
            self.lambda_hat = vec![0.0; self.n];
        }
        if self.mu_hat.is_empty() {
            self.mu_hat = vec![0.0; self.n];
        }
    }

    /// `sum_i lambda_i / mu_i`.
    pub fn traffic_intensity(&self) -> f64 {
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l / m).sum()
    }

    /// The same model with class `i` relabelled as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let apply = |v: &[f64]| {
            let mut out = vec![0.0; v.len()];
            for (i, &x) in v.iter().enumerate() {
                out[perm[i]] = x;
            }
            out
        };
        ModelSpec {
            n: self.n,
            lambda: apply(&self.lambda),
            mu: apply(&self.mu),
            lambda_hat: apply(&self.lambda_hat),
            mu_hat: apply(&self.mu_hat),
            tie_break: self.tie_break.permuted(perm),
        }
    }
}

/// Checks rates, tie-break table and criticality.
pub fn validate(spec: &ModelSpec) -> Result<ValidationReport, ModelError> {
    let n = spec.n;
    if n < 2 {
        return Err(ModelError::BadRate(format!("need at least 2 classes, got {n}")));
    }
    if n > MAX_CLASSES {
        return Err(ModelError::BadRate(format!("at most {MAX_CLASSES} classes supported")));
    }
    for (name, v) in
        [("lambda", &spec.lambda), ("mu", &spec.mu), ("lambda_hat", &spec.lambda_hat), ("mu_hat", &spec.mu_hat)]
    {
        if v.len() != n {
            return Err(ModelError::BadRate(format!("{name} has {} entries, expected {n}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::BadRate(format!("{name} has a non-finite entry")));
        }
    }
    if let Some((i, _)) = spec.lambda.iter().enumerate().find(|(_, &l)| l <= 0.0) {
        return Err(ModelError::BadRate(format!("lambda_{} must be positive", i + 1)));
    }
    if let Some((i, _)) = spec.mu.iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(ModelError::BadRate(format!("mu_{} must be positive", i + 1)));
    }
    if let Some(k) = spec.tie_break.max_class().filter(|&k| k >= n) {
        return Err(ModelError::BadTieBreak(format!("tie-break refers to class {}", k + 1)));
    }
    for pairs in spec.tie_break.table.values() {
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > TIE_BREAK_TOL || pairs.iter().any(|&(_, p)| p < 0.0) {
            return Err(ModelError::BadTieBreak(format!("entry {pairs:?} is not a distribution")));
        }
    }
    let residual = spec.traffic_intensity() - 1.0;
    if residual.abs() > CRITICALITY_TOL {
        return Err(ModelError::NonCritical { residual });
    }
    Ok(ValidationReport { n, residual })
}

/// Drift `b` and variance `sigma^2` of the limiting radial RBM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionCoefficients {
    pub b: f64,
    pub sigma2: f64,
}

impl DiffusionCoefficients {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// `b = sum_i (lambda_hat_i - (lambda_i/mu_i) mu_hat_i) / mu_i`,
/// `sigma^2 = 2 sum_i lambda_i / mu_i^2`.
pub fn diffusion_coefficients(spec: &ModelSpec) -> Result<DiffusionCoefficients, ModelError> {
    validate(spec)?;
    let mut b = 0.0;
    let mut sigma2 = 0.0;
    for i in 0..spec.n {
        let (l, m) = (spec.lambda[i], spec.mu[i]);
        b += (spec.lambda_hat[i] - (l / m) * spec.mu_hat[i]) / m;
        sigma2 += 2.0 * l / (m * m);
    }
    Ok(DiffusionCoefficients { b, sigma2 })
}

/// Parameters `(b, sigma, q)` of a Walsh Brownian motion on the coordinate axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WbmParams {
    pub b: f64,
    pub sigma: f64,
    pub q: Vec<f64>,
}

impl WbmParams {
    pub fn new(b: f64, sigma: f64, q: Vec<f64>) -> Result<Self, ModelError> {
        if !(sigma > 0.0 && sigma.is_finite()) || !b.is_finite() {
            return Err(ModelError::BadRate(format!("need finite b and sigma > 0, got ({b}, {sigma})")));
        }
        let total: f64 = q.iter().sum();
        if q.is_empty() || q.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::BadRate(format!("q = {q:?} is not a probability vector")));
        }
        Ok(WbmParams { b, sigma, q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// How the scale parameter enters the rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// `lambda_i r^2`, `mu_i r^2`.
    Homogeneous,
    /// `lambda_i r^2 + lambda_hat_i r`, `mu_i r^2 + mu_hat_i r`.
    General,
}

impl std::str::FromStr for RateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(RateMode::Homogeneous),
            "general" => Ok(RateMode::General),
            other => Err(format!("unknown rate mode {other:?}")),
        }
    }
}

/// Concrete rates at scale `r` together with the lattice geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledModel {
    r: f64,
    mode: RateMode,
    lambda_r: Vec<f64>,
    mu_r: Vec<f64>,
    /// `mu^r_i - mu_i r^2`, held exactly (zero in homogeneous mode).
    mu_offset: Vec<f64>,
    /// Lattice step `r / mu^r_i` of the scaled workload.
    step: Vec<f64>,
    arrival_total: f64,
    spec: ModelSpec,
}

impl ScaledModel {
    pub fn new(spec: &ModelSpec, r: f64, mode: RateMode) -> Result<Self, ModelError> {
        validate(spec)?;
        if !(r >= 1.0 && r.is_finite()) {
            return Err(ModelError::BadRate(format!("scale r = {r} must be >= 1")));
        }
        let r2 = r * r;
        let (lambda_r, mu_r, mu_offset): (Vec<f64>, Vec<f64>, Vec<f64>) = match mode {
            RateMode::Homogeneous => (
                spec.lambda.iter().map(|l| l * r2).collect(),
                spec.mu.iter().map(|m| m * r2).collect(),
                vec![0.0; spec.n],
            ),
            RateMode::General => (
                (0..spec.n).map(|i| spec.lambda[i] * r2 + spec.lambda_hat[i] * r).collect(),
                (0..spec.n).map(|i| spec.mu[i] * r2 + spec.mu_hat[i] * r).collect(),
                spec.mu_hat.iter().map(|m| m * r).collect(),
            ),
        };
        for i in 0..spec.n {
            if lambda_r[i] <= 0.0 || mu_r[i] <= 0.0 {
                return Err(ModelError::BadRate(format!(
                    "class {} has nonpositive rate at r = {r} (lambda^r = {}, mu^r = {})",
                    i + 1,
                    lambda_r[i],
                    mu_r[i]
                )));
            }
        }
        let step = mu_r.iter().map(|m| r / m).collect();
        let arrival_total = lambda_r.iter().sum();
        Ok(ScaledModel { r, mode, lambda_r, mu_r, mu_offset, step, arrival_total, spec: spec.clone() })
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn lambda_r(&self) -> &[f64] {
        &self.lambda_r
    }

    pub fn mu_r(&self) -> &[f64] {
        &self.mu_r
    }

    pub fn mu_offset(&self) -> &[f64] {
        &self.mu_offset
    }

    /// Lattice steps `r / mu^r_i`.
    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn arrival_total(&self) -> f64 {
        self.arrival_total
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tie_break(&self) -> &TieBreakRule {
        &self.spec.tie_break
    }

    /// Largest jump of the scaled workload, `max_i r / mu^r_i`.
    pub fn max_step(&self) -> f64 {
        self.step.iter().copied().fold(0.0, f64::max)
    }
}

/// Queue lengths `Q`; workloads are derived views relative to a [`ScaledModel`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVector {
    pub q: Vec<u64>,
}

impl StateVector {
    pub fn new(q: Vec<u64>) -> Self {
        StateVector { q }
    }

    pub fn zero(n: usize) -> Self {
        StateVector { q: vec![0; n] }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.iter().all(|&x| x == 0)
    }

    /// Nominal workload `X^r_i = Q_i / mu^r_i`.
    pub fn nominal_workload(&self, model: &ScaledModel) -> Vec<f64> {
        self.q.iter().zip(model.mu_r()).map(|(&q, m)| q as f64 / m).collect()
    }

    /// Scaled nominal workload `r Q_i / mu^r_i`.
    pub fn scaled_workload(&self, model: &ScaledModel) -> Vec<f64> {
        self.q.iter().zip(model.step()).map(|(&q, h)| q as f64 * h).collect()
    }

    /// Scaled total workload `sum_i r Q_i / mu^r_i`.
    pub fn radial(&self, model: &ScaledModel) -> f64 {
        self.q.iter().zip(model.step()).map(|(&q, h)| q as f64 * h).sum()
    }

    /// Scaled queue length `Q / r`.
    pub fn scaled_queue(&self, model: &ScaledModel) -> Vec<f64> {
        self.q.iter().map(|&q| q as f64 / model.r()).collect()
    }

    /// Lattice point nearest to the scaled workload `x`, rejecting off-lattice input.
    pub fn from_scaled(x: &[f64], model: &ScaledModel) -> Result<Self, ModelError> {
        if x.len() != model.n() {
            return Err(ModelError::Dimension { expected: model.n(), got: x.len() });
        }
        let q = x
            .iter()
            .zip(model.step())
            .enumerate()
            .map(|(class, (&xi, &h))| {
                let index = xi / h;
                let rounded = index.round();
                if !(rounded >= 0.0) || (index - rounded).abs() > LATTICE_TOL * rounded.max(1.0) {
                    Err(ModelError::LatticeMismatch { class, index })
                } else {
                    Ok(rounded as u64)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StateVector { q })
    }

    /// Lattice point with `Q_i = round(x_i / step_i)`.
    pub fn nearest(x: &[f64], model: &ScaledModel) -> Self {
        StateVector { q: x.iter().zip(model.step()).map(|(&xi, h)| (xi / h).round().max(0.0) as u64).collect() }
    }
}

/// Is `Q_i / mu_i < Q_j / mu_j`, by cross-multiplication.
#[inline]
fn workload_lt(qi: u64, mi: f64, qj: u64, mj: f64) -> bool {
    (qi as f64) * mj < (qj as f64) * mi
}

/// Classes holding the shortest positive nominal workload, `K(x)`.
pub fn shortest_set(state: &StateVector, model: &ScaledModel) -> ClassSet {
    shortest_set_raw(&state.q, model.mu_r())
}

#[inline]
pub(crate) fn shortest_set_raw(q: &[u64], mu: &[f64]) -> ClassSet {
    let mut best: Option<usize> = None;
    let mut set = ClassSet::EMPTY;
    for (i, &qi) in q.iter().enumerate() {
        if qi == 0 {
            continue;
        }
        match best {
            None => {
                best = Some(i);
                set = ClassSet::singleton(i);
            }
            Some(b) => {
                let (qb, mb, mi) = (q[b], mu[b], mu[i]);
                if workload_lt(qi, mi, qb, mb) {
                    best = Some(i);
                    set = ClassSet::singleton(i);
                } else if !workload_lt(qb, mb, qi, mi) {
                    set.insert(i);
                }
            }
        }
    }
    set
}

/// `F(x) = sum_i x_i - max_i x_i`: workload outside the longest buffer.
pub fn lyapunov_f(x: &[f64]) -> f64 {
    let total: f64 = x.iter().sum();
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    total - max
}

/// Euclidean distance from `x >= 0` to the union of the coordinate half-axes.
pub fn dist_to_axes(x: &[f64]) -> f64 {
    let Some(argmax) = x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i) else {
        return 0.0;
    };
    x.iter().enumerate().filter(|&(i, _)| i != argmax).map(|(_, v)| v * v).sum::<f64>().sqrt()
}

/// Generator of the scaled workload process applied to `f` at lattice point `x`.
pub fn generator_apply<F>(f: F, x: &[f64], model: &ScaledModel) -> Result<f64, ModelError>
where
    F: Fn(&[f64]) -> f64,
{
    let state = StateVector::from_scaled(x, model)?;
    let fx = f(x);
    let mut y = x.to_vec();
    let mut total = 0.0;
    for i in 0..model.n() {
        y[i] = x[i] + model.step()[i];
        total += model.lambda_r()[i] * (f(&y) - fx);
        y[i] = x[i];
    }
    let set = shortest_set(&state, model);
    model.tie_break().for_each_fraction(set, |i, p| {
        y[i] = x[i] - model.step()[i];
        total += p * model.mu_r()[i] * (f(&y) - fx);
        y[i] = x[i];
    });
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(r: f64) -> ScaledModel {
        ScaledModel::new(&ModelSpec::symmetric_pair(), r, RateMode::Homogeneous).unwrap()
    }

    #[test]
    fn validate_examples() {
        let report = validate(&ModelSpec::symmetric_pair()).unwrap();
        assert_eq!(report.residual, 0.0);

        let err = validate(&ModelSpec::first_order(vec![10.0, 10.0], vec![20.0, 30.0])).unwrap_err();
        match err {
            ModelError::NonCritical { residual } => assert!((residual + 1.0 / 6.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }

        let mut rule = TieBreakRule::uniform();
        rule.insert(&[0, 1], &[0.3, 0.7]).unwrap();
        let spec = ModelSpec::first_order(vec![5.0, 10.0], vec![10.0, 20.0]).with_tie_break(rule);
        assert!(validate(&spec).is_ok());
    }

    #[test]
    fn validate_rejects_bad_rates_and_tie_breaks() {
        let spec = ModelSpec::first_order(vec![0.0, 10.0], vec![20.0, 10.0]);
        assert!(matches!(validate(&spec), Err(ModelError::BadRate(_))));
        let spec = ModelSpec::first_order(vec![10.0, 10.0], vec![-20.0, 20.0]);
        assert!(matches!(validate(&spec), Err(ModelError::BadRate(_))));
        let spec = ModelSpec::first_order(vec![1.0], vec![1.0]);
        assert!(matches!(validate(&spec), Err(ModelError::BadRate(_))));

        let mut rule = TieBreakRule::uniform();
        assert!(rule.insert(&[0, 1], &[0.3, 0.6]).is_err());
        assert!(rule.insert(&[0, 0], &[0.5, 0.5]).is_err());
        assert!(rule.insert(&[0, 1], &[1.5, -0.5]).is_err());
        assert!(rule.insert(&[1], &[0.5]).is_err());
        rule.insert(&[0, 2], &[0.5, 0.5]).unwrap();
        let spec = ModelSpec::symmetric_pair().with_tie_break(rule);
        assert!(matches!(validate(&spec), Err(ModelError::BadTieBreak(_))));
    }

    #[test]
    fn tie_break_defaults_and_singletons() {
        let rule = TieBreakRule::two_class(0.3).unwrap();
        assert_eq!(rule.fraction(ClassSet::from_classes(&[0, 1]), 0), 0.3);
        assert_eq!(rule.fraction(ClassSet::from_classes(&[0, 1]), 2), 0.0);
        assert_eq!(rule.fraction(ClassSet::singleton(1), 1), 1.0);
        let three = ClassSet::from_classes(&[0, 1, 2]);
        assert!((rule.fraction(three, 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let text = r#"{"n":2,"lambda":[5,10],"mu":[10,20],"lambda_hat":[1,-1],"mu_hat":[0,0],
                       "tie_break":[{"subset":[1,2],"p":[0.3,0.7]}]}"#;
        let spec = ModelSpec::from_json(text).unwrap();
        assert_eq!(spec.tie_break.fraction(ClassSet::from_classes(&[0, 1]), 1), 0.7);
        let again = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);

        assert!(ModelSpec::from_json(r#"{"n":2,"lambda":[10,10],"mu":[20,20],"extra":1}"#).is_err());
        assert!(ModelSpec::from_json(
            r#"{"n":2,"lambda":[10,10],"mu":[20,20],"tie_break":[{"subset":[1,2],"p":[0.5,0.6]}]}"#
        )
        .is_err());
        let minimal = ModelSpec::from_json(r#"{"n":2,"lambda":[10,10],"mu":[20,20]}"#).unwrap();
        assert_eq!(minimal.lambda_hat, vec![0.0, 0.0]);
    }

    #[test]
    fn diffusion_coefficient_examples() {
        let c = diffusion_coefficients(&ModelSpec::symmetric_pair()).unwrap();
        assert_eq!(c.b, 0.0);
        assert!((c.sigma2 - 0.1).abs() < 1e-15);
        let spec = ModelSpec::symmetric_pair().with_second_order(vec![4.0, 0.0], vec![0.0, 0.0]);
        let c = diffusion_coefficients(&spec).unwrap();
        assert!((c.b - 0.2).abs() < 1e-15);
    }

    #[test]
    fn scaled_rates() {
        let spec = ModelSpec::symmetric_pair().with_second_order(vec![5.0, -5.0], vec![2.0, 0.0]);
        let m = ScaledModel::new(&spec, 10.0, RateMode::General).unwrap();
        assert_eq!(m.lambda_r(), &[1050.0, 950.0]);
        assert_eq!(m.mu_r(), &[2020.0, 2000.0]);
        let h = ScaledModel::new(&spec, 10.0, RateMode::Homogeneous).unwrap();
        assert_eq!(h.lambda_r(), &[1000.0, 1000.0]);
        assert_eq!(h.step(), &[0.005, 0.005]);

        let harsh = ModelSpec::symmetric_pair().with_second_order(vec![-200.0, 0.0], vec![0.0, 0.0]);
        assert!(matches!(ScaledModel::new(&harsh, 10.0, RateMode::General), Err(ModelError::BadRate(_))));
        assert!(ScaledModel::new(&harsh, 30.0, RateMode::General).is_ok());
    }

    #[test]
    fn shortest_set_examples() {
        let m = sym(10.0);
        assert!(shortest_set(&StateVector::zero(2), &m).is_empty());
        assert_eq!(shortest_set(&StateVector::new(vec![1, 1]), &m), ClassSet::from_classes(&[0, 1]));
        assert_eq!(shortest_set(&StateVector::new(vec![3, 1]), &m), ClassSet::singleton(1));

        let spec3 = ModelSpec::first_order(vec![1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0]);
        let m3 = ScaledModel::new(&spec3, 4.0, RateMode::Homogeneous).unwrap();
        assert_eq!(shortest_set(&StateVector::new(vec![2, 3, 0]), &m3), ClassSet::singleton(0));

        // unequal rates: Q = (1, 2) with mu = (10, 20) is an exact workload tie
        let spec = ModelSpec::first_order(vec![5.0, 10.0], vec![10.0, 20.0]);
        let m = ScaledModel::new(&spec, 3.0, RateMode::Homogeneous).unwrap();
        assert_eq!(shortest_set(&StateVector::new(vec![1, 2]), &m), ClassSet::from_classes(&[0, 1]));
        assert_eq!(shortest_set(&StateVector::new(vec![1, 3]), &m), ClassSet::singleton(0));
    }

    #[test]
    fn lyapunov_and_distance_examples() {
        assert_eq!(lyapunov_f(&[5.0, 0.0, 0.0]), 0.0);
        assert_eq!(lyapunov_f(&[3.0, 2.0]), 2.0);
        assert_eq!(lyapunov_f(&[1.0, 1.0, 1.0]), 2.0);
        assert_eq!(dist_to_axes(&[3.0, 4.0]), 3.0);
        assert_eq!(dist_to_axes(&[7.0, 0.0]), 0.0);
        assert_eq!(dist_to_axes(&[1.0, 1.0]), 1.0);
    }

    #[test]
    fn generator_examples() {
        let m = sym(10.0);
        let h = m.step()[0];
        let one = generator_apply(|_| 1.0, &[3.0 * h, 5.0 * h], &m).unwrap();
        assert_eq!(one, 0.0);
        let total = generator_apply(|x| x.iter().sum(), &[3.0 * h, 5.0 * h], &m).unwrap();
        assert!(total.abs() < 1e-9);
        let drift = generator_apply(lyapunov_f, &[2.0 * h, 1.0 * h], &m).unwrap();
        assert!(drift <= -0.4 * m.r(), "drift {drift}");
        assert!(matches!(
            generator_apply(|_| 1.0, &[0.3 * h, 0.0], &m),
            Err(ModelError::LatticeMismatch { class: 0, .. })
        ));
    }

    #[test]
    fn total_workload_drift_is_idle_time_at_origin() {
        // only arrivals at 0, so the drift is sum_i lambda^r_i r / mu^r_i = r
        let m = sym(10.0);
        let g = generator_apply(|x| x.iter().sum(), &[0.0, 0.0], &m).unwrap();
        assert!((g - 10.0).abs() < 1e-9);
    }

    fn permutation(n: usize, seed: u64) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        perm
    }

    proptest! {
        #[test]
        fn shortest_set_is_equivariant(q in prop::collection::vec(0u64..6, 3), seed in any::<u64>()) {
            let spec = ModelSpec::first_order(vec![1.0, 4.0, 1.0], vec![4.0, 8.0, 4.0]);
            let m = ScaledModel::new(&spec, 2.0, RateMode::Homogeneous).unwrap();
            let perm = permutation(3, seed);
            let pm = ScaledModel::new(&spec.permuted(&perm), 2.0, RateMode::Homogeneous).unwrap();
            let mut pq = vec![0; 3];
            for i in 0..3 { pq[perm[i]] = q[i]; }
            let k = shortest_set(&StateVector::new(q.clone()), &m);
            let pk = shortest_set(&StateVector::new(pq), &pm);
            let mapped: Vec<usize> = k.iter().map(|i| perm[i]).collect();
            prop_assert_eq!(ClassSet::from_classes(&mapped), pk);
        }

        #[test]
        fn unique_minimizer_gives_singleton(q in prop::collection::vec(1u64..1000, 4)) {
            let spec = ModelSpec::first_order(vec![1.0; 4], vec![4.0; 4]);
            let m = ScaledModel::new(&spec, 3.0, RateMode::Homogeneous).unwrap();
            let min = *q.iter().min().unwrap();
            let k = shortest_set(&StateVector::new(q.clone()), &m);
            prop_assert_eq!(k.len(), q.iter().filter(|&&v| v == min).count());
            prop_assert!(k.iter().all(|i| q[i] == min));
        }

        #[test]
        fn f_and_distance_detect_the_axes(x in prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64], 2..5)) {
            prop_assert!(lyapunov_f(&x) >= 0.0);
            prop_assert_eq!(lyapunov_f(&x) == 0.0, dist_to_axes(&x) == 0.0);
        }

        #[test]
        fn generator_kills_constants(q in prop::collection::vec(0u64..50, 2), r in 1.0..50.0f64, c in -5.0..5.0f64) {
            let m = sym(r);
            let x = StateVector::new(q).scaled_workload(&m);
            prop_assert_eq!(generator_apply(|_| c, &x, &m).unwrap(), 0.0);
        }

        #[test]
        fn total_workload_is_harmonic_off_origin(q in prop::collection::vec(0u64..50, 2), r in 1.0..50.0f64) {
            prop_assume!(q.iter().any(|&v| v > 0));
            let m = sym(r);
            let x = StateVector::new(q).scaled_workload(&m);
            let g = generator_apply(|y| y.iter().sum(), &x, &m).unwrap();
            prop_assert!(g.abs() <= 1e-9 * r * r, "g = {}", g);
        }
    }
}
