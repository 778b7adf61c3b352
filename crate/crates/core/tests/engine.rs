use proptest::prelude::*;
use ssq_core::ctmc::{excursions, run, simulate, StopCondition};
use ssq_core::estimators::estimate_q;
use ssq_core::model::{ModelSpec, RateMode, ScaledModel, StateVector};
use ssq_core::rng::{replication_stream, stream};
use ssq_core::stats::{chi_square_test, ks2_test};

fn asymmetric() -> ModelSpec {
    ModelSpec::first_order(vec![8.0, 18.0], vec![16.0, 36.0])
}

fn radial_at(model: &ScaledModel, t: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|k| {
            let mut rng = stream(seed, 0, k);
            let path = run(model, &StateVector::zero(2), StopCondition::TimeHorizon(t), &mut rng, false).unwrap();
            path.q_final.radial(model)
        })
        .collect()
}

#[test]
fn diffusive_rescaling_of_the_unscaled_chain() {
    let spec = ModelSpec::symmetric_pair();
    let r = 5.0;
    let unit = ScaledModel::new(&spec, 1.0, RateMode::Homogeneous).unwrap();
    let scaled = ScaledModel::new(&spec, r, RateMode::Homogeneous).unwrap();
    let a: Vec<f64> = radial_at(&unit, r * r, 1500, 1).into_iter().map(|x| x / r).collect();
    let b = radial_at(&scaled, 1.0, 1500, 2);
    let gof = ks2_test(&a, &b);
    assert!(gof.pass, "{gof:?}");
}

#[test]
fn service_effort_fills_busy_time_exactly() {
    let model = ScaledModel::new(&asymmetric(), 4.0, RateMode::Homogeneous).unwrap();
    for seed in 0..5 {
        let mut rng = replication_stream(seed, 0);
        let path = simulate(&model, &StateVector::zero(2), StopCondition::TimeHorizon(3.0), &mut rng).unwrap();
        let states: Vec<_> = path.states().collect();
        let mut idle = 0.0;
        for (k, (t, q)) in states.iter().enumerate() {
            let next = states.get(k + 1).map_or(path.counters.t_end, |s| s.0);
            if q.is_empty() {
                idle += next - t;
            }
        }
        let effort: f64 = path.counters.effort.iter().sum();
        assert!((effort + idle - path.counters.t_end).abs() < 1e-9);
    }
}

#[test]
fn excursion_marks_of_a_symmetric_chain_are_fair() {
    let model = ScaledModel::new(&ModelSpec::symmetric_pair(), 5.0, RateMode::Homogeneous).unwrap();
    let mut counts = [0u64; 2];
    for k in 0..600 {
        let mut rng = stream(7, 0, k);
        let path = simulate(&model, &StateVector::zero(2), StopCondition::RadialReaches(1.0), &mut rng).unwrap();
        let marks = excursions(&path, &model, 1.0, 0.25);
        assert_eq!(marks.len(), 1);
        if let Some(i) = marks[0].mark {
            counts[i] += 1;
        }
    }
    let gof = chi_square_test(&counts, &[0.5, 0.5]);
    assert!(gof.pass, "{counts:?} {gof:?}");
}

#[test]
fn relabelling_classes_permutes_the_estimate() {
    let spec = asymmetric();
    let swapped = spec.permuted(&[1, 0]);
    let a = estimate_q(&spec, RateMode::Homogeneous, 5.0, 1.0, 0.25, 2000, 11).unwrap();
    let b = estimate_q(&swapped, RateMode::Homogeneous, 5.0, 1.0, 0.25, 2000, 12).unwrap();
    for i in 0..2 {
        let gap = (a.q_hat[i] - b.q_hat[1 - i]).abs();
        let se = a.se(i).hypot(b.se(1 - i));
        assert!(gap <= 3.0 * se, "class {i}: gap {gap}, se {se}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn paths_are_deterministic_and_balanced(seed in any::<u64>(), q1 in 0u64..20, q2 in 0u64..20, t in 0.0f64..0.5) {
        let model = ScaledModel::new(&asymmetric(), 3.0, RateMode::General).unwrap();
        let init = StateVector::new(vec![q1, q2]);
        let a = simulate(&model, &init, StopCondition::TimeHorizon(t), &mut replication_stream(seed, 0)).unwrap();
        let b = simulate(&model, &init, StopCondition::TimeHorizon(t), &mut replication_stream(seed, 0)).unwrap();
        prop_assert_eq!(&a, &b);
        for i in 0..2 {
            let lhs = a.q_final.q[i] as i64;
            let rhs = a.q_init.q[i] as i64 + a.counters.arrivals[i] as i64 - a.counters.departures[i] as i64;
            prop_assert_eq!(lhs, rhs);
        }
    }
}
