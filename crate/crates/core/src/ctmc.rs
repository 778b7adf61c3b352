//! Event-exact simulation of the queue-length chain.
//!
//! Departures are drawn directly at the thinned rates `p^K_i mu^r_i`; the
//! cumulative service effort `T_i` is integrated between events so that path
//! likelihood ratios can be formed afterwards.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::model::{shortest_set_raw, ClassSet, ModelError, ScaledModel, StateVector};
use crate::rng::RandomStream;

/// Event guard applied to every run unless the stop condition is itself a budget.
pub const DEFAULT_EVENT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("balls of radius {radius} around eps * e_i overlap for eps = {eps}")]
    AmbiguousBall { eps: f64, radius: f64 },
    #[error("event budget of {0} exhausted before the stop condition")]
    BudgetExhausted(u64),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Departure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub class: usize,
    pub kind: EventKind,
}

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Fixed (scaled) time horizon.
    TimeHorizon(f64),
    /// First time the scaled total workload is at least `eps`.
    RadialReaches(f64),
    /// First time the system is empty.
    RadialHitsZero,
    /// First time the system is empty or the scaled total workload reaches `eps`.
    RadialExits(f64),
    /// After a fixed number of events.
    EventBudget(u64),
}

/// Arrival and departure counts, service effort and elapsed time of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counters {
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    /// Cumulative service effort `T_i` per class, in time units.
    pub effort: Vec<f64>,
    pub t_end: f64,
}

impl Counters {
    fn new(n: usize) -> Self {
        Counters { arrivals: vec![0; n], departures: vec![0; n], effort: vec![0.0; n], t_end: 0.0 }
    }

    pub fn events(&self) -> u64 {
        self.arrivals.iter().sum::<u64>() + self.departures.iter().sum::<u64>()
    }
}

/// A simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub q_init: StateVector,
    /// Empty unless events were recorded.
    pub events: Vec<Event>,
    pub q_final: StateVector,
    pub counters: Counters,
    /// Set when the event guard stopped the run before its stop condition.
    pub budget_exhausted: bool,
}

impl PathRecord {
    /// Replays the recorded events, yielding `(time, state)` after the start and after each event.
    pub fn states(&self) -> impl Iterator<Item = (f64, StateVector)> + '_ {
        let mut q = self.q_init.clone();
        std::iter::once((0.0, q.clone())).chain(self.events.iter().map(move |e| {
            match e.kind {
                EventKind::Arrival => q.q[e.class] += 1,
                EventKind::Departure => q.q[e.class] -= 1,
            }
            (e.time, q.clone())
        }))
    }

    /// Writes `t,class,kind,Q1..QN` rows, one per event, with post-jump queue lengths.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.q_init.n();
        let header: Vec<String> = (1..=n).map(|i| format!("Q{i}")).collect();
        writeln!(out, "t,class,kind,{}", header.join(","))?;
        for ((_, state), event) in self.states().skip(1).zip(&self.events) {
            let qs: Vec<String> = state.q.iter().map(u64::to_string).collect();
            writeln!(out, "{},{},{},{}", event.time, event.class + 1, event.kind.as_str(), qs.join(","))?;
        }
        Ok(())
    }
}

/// Mutable simulation state of one chain.
pub struct Chain<'m> {
    model: &'m ScaledModel,
    q: Vec<u64>,
    set: ClassSet,
    radial: f64,
    counters: Counters,
}

impl<'m> Chain<'m> {
    pub fn new(model: &'m ScaledModel, init: &StateVector) -> Result<Self, SimError> {
        if init.n() != model.n() {
            return Err(ModelError::Dimension { expected: model.n(), got: init.n() }.into());
        }
        let mut chain =
            Chain { model, q: init.q.clone(), set: ClassSet::EMPTY, radial: 0.0, counters: Counters::new(model.n()) };
        chain.refresh();
        Ok(chain)
    }

    fn refresh(&mut self) {
        self.set = shortest_set_raw(&self.q, self.model.mu_r());
        self.radial = self.q.iter().zip(self.model.step()).map(|(&q, h)| q as f64 * h).sum();
    }

    pub fn time(&self) -> f64 {
        self.counters.t_end
    }

    pub fn queue(&self) -> &[u64] {
        &self.q
    }

    pub fn state(&self) -> StateVector {
        StateVector::new(self.q.clone())
    }

    /// Scaled total workload of the current state.
    pub fn radial(&self) -> f64 {
        self.radial
    }

    pub fn shortest(&self) -> ClassSet {
        self.set
    }

    pub fn scaled_workload(&self) -> Vec<f64> {
        self.q.iter().zip(self.model.step()).map(|(&q, h)| q as f64 * h).collect()
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn into_counters(self) -> Counters {
        self.counters
    }

    /// Total exit rate of the current state.
    pub fn exit_rate(&self) -> f64 {
        exit_rate(self.model, self.set)
    }

    /// Performs the next jump if it happens no later than `horizon`.
    ///
    /// Otherwise time is advanced to `horizon` (with effort accrued) and `None` is returned.
    #[inline]
    pub fn advance(&mut self, horizon: f64, rng: &mut RandomStream) -> Option<Event> {
        let model = self.model;
        let total = exit_rate(model, self.set);
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        let now = self.counters.t_end;
        let (elapsed, fires) = if now + dt > horizon { (horizon - now, false) } else { (dt, true) };
        let effort = &mut self.counters.effort;
        model.tie_break().for_each_fraction(self.set, |i, p| effort[i] += p * elapsed);
        if !fires {
            self.counters.t_end = horizon;
            return None;
        }
        self.counters.t_end = now + dt;
        let (class, kind) = pick_event(model, self.set, rng.random::<f64>() * total);
        match kind {
            EventKind::Arrival => {
                self.q[class] += 1;
                self.counters.arrivals[class] += 1;
            }
            EventKind::Departure => {
                self.q[class] -= 1;
                self.counters.departures[class] += 1;
            }
        }
        self.refresh();
        Some(Event { time: self.counters.t_end, class, kind })
    }
}

#[inline]
fn exit_rate(model: &ScaledModel, set: ClassSet) -> f64 {
    let mut total = model.arrival_total();
    let mu = model.mu_r();
    model.tie_break().for_each_fraction(set, |i, p| total += p * mu[i]);
    total
}

/// Chooses the event whose cumulative rate first exceeds `u`, for `u` in `[0, exit_rate)`.
#[inline]
fn pick_event(model: &ScaledModel, set: ClassSet, mut u: f64) -> (usize, EventKind) {
    for (i, &l) in model.lambda_r().iter().enumerate() {
        if u < l {
            return (i, EventKind::Arrival);
        }
        u -= l;
    }
    let mu = model.mu_r();
    let mut chosen = None;
    let mut last = None;
    model.tie_break().for_each_fraction(set, |i, p| {
        let rate = p * mu[i];
        if chosen.is_some() || rate <= 0.0 {
            return;
        }
        last = Some(i);
        if u < rate {
            chosen = Some(i);
        } else {
            u -= rate;
        }
    });
    // the last positive-rate class absorbs rounding at the top of the range
    let class = chosen.or(last).expect("departure drawn from an empty shortest set");
    (class, EventKind::Departure)
}

/// One transition from `state`: holding time and the event that ends it.
pub fn step(state: &StateVector, model: &ScaledModel, rng: &mut RandomStream) -> (f64, usize, EventKind) {
    let set = shortest_set_raw(&state.q, model.mu_r());
    let total = exit_rate(model, set);
    let dt = rng.sample::<f64, _>(Exp1) / total;
    let (class, kind) = pick_event(model, set, rng.random::<f64>() * total);
    (dt, class, kind)
}

/// Total exit rate `sum_i lambda^r_i + sum_{i in K} p^K_i mu^r_i` of `state`.
pub fn total_rate(state: &StateVector, model: &ScaledModel) -> f64 {
    exit_rate(model, shortest_set_raw(&state.q, model.mu_r()))
}

fn stop_reached(stop: StopCondition, chain: &Chain<'_>, steps: u64) -> bool {
    match stop {
        StopCondition::TimeHorizon(_) => false,
        StopCondition::RadialReaches(eps) => chain.radial >= eps,
        StopCondition::RadialHitsZero => chain.radial == 0.0,
        StopCondition::RadialExits(eps) => chain.radial == 0.0 || chain.radial >= eps,
        StopCondition::EventBudget(max) => steps >= max,
    }
}

/// Simulates from `init` until `stop`, optionally recording every event.
pub fn run(
    model: &ScaledModel,
    init: &StateVector,
    stop: StopCondition,
    rng: &mut RandomStream,
    record: bool,
) -> Result<PathRecord, SimError> {
    let mut chain = Chain::new(model, init)?;
    let horizon = match stop {
        StopCondition::TimeHorizon(t) if !(t >= 0.0) => {
            return Err(SimError::BadParameter(format!("time horizon {t}")));
        }
        StopCondition::TimeHorizon(t) => t,
        _ => f64::INFINITY,
    };
    let guard = match stop {
        StopCondition::EventBudget(_) => u64::MAX,
        _ => DEFAULT_EVENT_BUDGET,
    };
    let mut events = Vec::new();
    let mut steps = 0u64;
    let mut budget_exhausted = false;
    while !stop_reached(stop, &chain, steps) {
        if steps >= guard {
            budget_exhausted = true;
            break;
        }
        match chain.advance(horizon, rng) {
            Some(event) => {
                steps += 1;
                if record {
                    events.push(event);
                }
            }
            None => break,
        }
    }
    Ok(PathRecord {
        q_init: init.clone(),
        events,
        q_final: chain.state(),
        counters: chain.into_counters(),
        budget_exhausted,
    })
}

/// [`run`] with every event recorded.
pub fn simulate(
    model: &ScaledModel,
    init: &StateVector,
    stop: StopCondition,
    rng: &mut RandomStream,
) -> Result<PathRecord, SimError> {
    run(model, init, stop, rng, true)
}

/// Radius `r^{-kappa0}` of the balls used to mark entrance points.
pub fn ball_radius(r: f64, kappa0: f64) -> f64 {
    r.powf(-kappa0)
}

/// Rejects `(eps, radius)` pairs for which the balls around `eps * e_i` intersect.
pub fn check_balls(eps: f64, radius: f64) -> Result<(), SimError> {
    if !(eps > 0.0) {
        return Err(SimError::BadParameter(format!("eps = {eps} must be positive")));
    }
    // centres are eps * sqrt(2) apart
    if 2.0 * radius >= eps * std::f64::consts::SQRT_2 {
        return Err(SimError::AmbiguousBall { eps, radius });
    }
    Ok(())
}

/// Class `i` with `|x - eps e_i| <= radius`, if any.
pub fn ball_mark(x: &[f64], eps: f64, radius: f64) -> Option<usize> {
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let r2 = radius * radius;
    // |x - eps e_i|^2 = |x|^2 - 2 eps x_i + eps^2
    (0..x.len()).find(|&i| norm2 - 2.0 * eps * x[i] + eps * eps <= r2)
}

/// Result of one run from the empty state to the first time the radial part reaches `eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entrance {
    pub tau: f64,
    pub terminal: StateVector,
    pub mark: Option<usize>,
    pub counters: Counters,
}

/// Runs from `Q = 0` until the scaled total workload reaches `eps`, marking the entrance ball.
pub fn first_entrance(
    model: &ScaledModel,
    eps: f64,
    kappa0: f64,
    rng: &mut RandomStream,
) -> Result<Entrance, SimError> {
    if !(kappa0 > 0.0 && kappa0 < 0.5) {
        return Err(SimError::BadParameter(format!("kappa0 = {kappa0} must lie in (0, 1/2)")));
    }
    let radius = ball_radius(model.r(), kappa0);
    check_balls(eps, radius)?;
    let path = run(model, &StateVector::zero(model.n()), StopCondition::RadialReaches(eps), rng, false)?;
    if path.budget_exhausted {
        return Err(SimError::BudgetExhausted(DEFAULT_EVENT_BUDGET));
    }
    let x = path.q_final.scaled_workload(model);
    Ok(Entrance {
        tau: path.counters.t_end,
        mark: ball_mark(&x, eps, radius),
        terminal: path.q_final,
        counters: path.counters,
    })
}

/// One completed upcrossing from 0 to `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcursionMark {
    pub zeta: f64,
    pub tau: f64,
    pub mark: Option<usize>,
}

/// Extracts the alternating hitting times of 0 and `eps` from a recorded path.
pub fn excursions(path: &PathRecord, model: &ScaledModel, eps: f64, kappa0: f64) -> Vec<ExcursionMark> {
    let radius = ball_radius(model.r(), kappa0);
    let mut out = Vec::new();
    let mut zeta: Option<f64> = None;
    for (t, state) in path.states() {
        let radial = state.radial(model);
        match zeta {
            None if radial == 0.0 => zeta = Some(t),
            Some(z) if radial >= eps => {
                let x = state.scaled_workload(model);
                out.push(ExcursionMark { zeta: z, tau: t, mark: ball_mark(&x, eps, radius) });
                zeta = None;
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, RateMode, TieBreakRule};
    use crate::rng::replication_stream;

    fn sym(r: f64) -> ScaledModel {
        ScaledModel::new(&ModelSpec::symmetric_pair(), r, RateMode::Homogeneous).unwrap()
    }

    #[test]
    fn rates_at_empty_and_tied_states() {
        let m = sym(10.0);
        assert_eq!(total_rate(&StateVector::zero(2), &m), 2000.0);
        assert_eq!(total_rate(&StateVector::new(vec![1, 1]), &m), 2000.0 + 2000.0);
        let mut rng = replication_stream(1, 0);
        for _ in 0..200 {
            let (dt, _, kind) = step(&StateVector::zero(2), &m, &mut rng);
            assert!(dt > 0.0);
            assert_eq!(kind, EventKind::Arrival);
        }
    }

    #[test]
    fn departures_only_from_the_shortest_class() {
        let m = sym(10.0);
        let mut rng = replication_stream(2, 0);
        let mut departures = [0usize; 2];
        for _ in 0..5000 {
            let (_, class, kind) = step(&StateVector::new(vec![3, 1]), &m, &mut rng);
            if kind == EventKind::Departure {
                departures[class] += 1;
            }
        }
        assert_eq!(departures[0], 0);
        assert!(departures[1] > 0);
    }

    #[test]
    fn tied_departures_split_by_the_tie_break() {
        let spec = ModelSpec::symmetric_pair().with_tie_break(TieBreakRule::two_class(0.25).unwrap());
        let m = ScaledModel::new(&spec, 10.0, RateMode::Homogeneous).unwrap();
        let mut rng = replication_stream(3, 0);
        let mut departures = [0usize; 2];
        let trials = 40_000;
        for _ in 0..trials {
            let (_, class, kind) = step(&StateVector::new(vec![2, 2]), &m, &mut rng);
            if kind == EventKind::Departure {
                departures[class] += 1;
            }
        }
        let total = (departures[0] + departures[1]) as f64;
        // half of all events are departures; a quarter of those from class 1
        assert!((total / trials as f64 - 0.5).abs() < 0.02);
        assert!((departures[0] as f64 / total - 0.25).abs() < 0.015);
    }

    #[test]
    fn zero_horizon_is_empty() {
        let m = sym(10.0);
        let init = StateVector::new(vec![4, 2]);
        let path = simulate(&m, &init, StopCondition::TimeHorizon(0.0), &mut replication_stream(0, 0)).unwrap();
        assert!(path.events.is_empty());
        assert_eq!(path.q_final, init);
        assert_eq!(path.counters.t_end, 0.0);
    }

    #[test]
    fn radial_reach_overshoot_is_one_jump() {
        for r in [3.0, 10.0] {
            let m = sym(r);
            for seed in 0..20 {
                let path = run(
                    &m,
                    &StateVector::zero(2),
                    StopCondition::RadialReaches(1.0),
                    &mut replication_stream(seed, 0),
                    false,
                )
                .unwrap();
                let radial = path.q_final.radial(&m);
                assert!(radial >= 1.0 && radial <= 1.0 + m.max_step() + 1e-12, "radial {radial}");
            }
        }
    }

    #[test]
    fn balance_and_effort_bookkeeping() {
        let spec = ModelSpec::first_order(vec![5.0, 10.0], vec![10.0, 20.0])
            .with_tie_break(TieBreakRule::two_class(0.3).unwrap());
        let m = ScaledModel::new(&spec, 4.0, RateMode::Homogeneous).unwrap();
        let init = StateVector::new(vec![3, 7]);
        let path = simulate(&m, &init, StopCondition::TimeHorizon(3.0), &mut replication_stream(9, 0)).unwrap();
        for i in 0..2 {
            assert_eq!(
                path.q_final.q[i] as i64,
                init.q[i] as i64 + path.counters.arrivals[i] as i64 - path.counters.departures[i] as i64
            );
        }
        // effort accrues at total rate one exactly while the system is non-empty
        let mut busy = 0.0;
        let mut last = (0.0, init.clone());
        for (t, state) in path.states().skip(1) {
            if !last.1.is_empty() {
                busy += t - last.0;
            }
            last = (t, state);
        }
        if !last.1.is_empty() {
            busy += path.counters.t_end - last.0;
        }
        let effort: f64 = path.counters.effort.iter().sum();
        assert!((effort - busy).abs() < 1e-9, "effort {effort} busy {busy}");
        assert_eq!(path.counters.t_end, 3.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = sym(5.0);
        let a = simulate(&m, &StateVector::zero(2), StopCondition::TimeHorizon(2.0), &mut replication_stream(11, 4))
            .unwrap();
        let b = simulate(&m, &StateVector::zero(2), StopCondition::TimeHorizon(2.0), &mut replication_stream(11, 4))
            .unwrap();
        assert_eq!(a, b);
        assert!(!a.events.is_empty());
    }

    #[test]
    fn event_budget_stops_and_guards() {
        let m = sym(5.0);
        let path =
            simulate(&m, &StateVector::zero(2), StopCondition::EventBudget(17), &mut replication_stream(0, 0)).unwrap();
        assert_eq!(path.events.len(), 17);
        assert!(!path.budget_exhausted);
    }

    #[test]
    fn hits_zero_and_exit_conditions() {
        let m = sym(5.0);
        let path =
            simulate(&m, &StateVector::zero(2), StopCondition::RadialHitsZero, &mut replication_stream(0, 0)).unwrap();
        assert!(path.events.is_empty());
        let init = StateVector::new(vec![10, 0]);
        let path = run(&m, &init, StopCondition::RadialExits(1.0), &mut replication_stream(5, 0), false).unwrap();
        let radial = path.q_final.radial(&m);
        assert!(radial == 0.0 || radial >= 1.0);
    }

    #[test]
    fn ball_geometry() {
        assert!(check_balls(1.0, 10f64.powf(-0.25)).is_ok());
        assert!(matches!(check_balls(1.0, 0.75), Err(SimError::AmbiguousBall { .. })));
        assert_eq!(ball_mark(&[0.9, 0.2], 1.0, 0.5), Some(0));
        assert_eq!(ball_mark(&[0.1, 0.95], 1.0, 0.5), Some(1));
        assert_eq!(ball_mark(&[0.5, 0.5], 1.0, 0.5), None);
    }

    #[test]
    fn first_entrance_rejects_coarse_balls() {
        let m = sym(2.0);
        let err = first_entrance(&m, 1.0, 0.25, &mut replication_stream(0, 0)).unwrap_err();
        assert!(matches!(err, SimError::AmbiguousBall { .. }));
    }

    #[test]
    fn first_entrance_terminates_in_band() {
        let m = sym(10.0);
        let mut rng = replication_stream(21, 0);
        for _ in 0..20 {
            let e = first_entrance(&m, 1.0, 0.25, &mut rng).unwrap();
            let radial = e.terminal.radial(&m);
            assert!(radial >= 1.0 && radial <= 1.0 + m.max_step() + 1e-12);
            assert!(e.tau > 0.0);
        }
    }

    #[test]
    fn excursions_from_definitions() {
        let m = sym(5.0);
        // never empty: starts high and is cut short
        let high = simulate(
            &m,
            &StateVector::new(vec![500, 0]),
            StopCondition::TimeHorizon(0.01),
            &mut replication_stream(1, 0),
        )
        .unwrap();
        assert!(excursions(&high, &m, 1.0, 0.25).is_empty());

        // one upcrossing from 0
        let up = simulate(&m, &StateVector::zero(2), StopCondition::RadialReaches(1.0), &mut replication_stream(2, 0))
            .unwrap();
        let marks = excursions(&up, &m, 1.0, 0.25);
        assert_eq!(marks.len(), 1);
        assert_eq!(marks[0].zeta, 0.0);
        assert_eq!(marks[0].tau, up.counters.t_end);

        let long =
            simulate(&m, &StateVector::zero(2), StopCondition::TimeHorizon(200.0), &mut replication_stream(3, 0))
                .unwrap();
        let marks = excursions(&long, &m, 0.5, 0.25);
        for pair in marks.windows(2) {
            assert!(pair[0].zeta <= pair[0].tau && pair[0].tau < pair[1].zeta);
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_event() {
        let m = sym(2.0);
        let path =
            simulate(&m, &StateVector::zero(2), StopCondition::EventBudget(5), &mut replication_stream(0, 0)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,class,kind,Q1,Q2");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].contains(",arrival,"));
    }
}
