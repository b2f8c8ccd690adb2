mod common;

use fairaudit::ingest::{stratified_split, FeatureMatrix, Group, Outcome};
use fairaudit::trainer::{
    predict, predict_proba, train_constrained, train_unconstrained, Objective, TrainConfig,
};
use fairaudit::Error;
use proptest::prelude::*;

fn central_difference(obj: &Objective, p: &[f64], h: f64) -> Vec<f64> {
    (0..p.len())
        .map(|k| {
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[k] += h;
            b[k] -= h;
            (obj.value(&a) - obj.value(&b)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

fn small_problem(seed: u64, n: usize) -> (FeatureMatrix, Vec<Outcome>, Vec<Group>) {
    let ds = common::synthetic(n, seed, 0.6);
    (ds.features().clone(), ds.labels().to_vec(), ds.protected().to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(
        seed in any::<u64>(),
        p in prop::collection::vec(-1.5..1.5f64, 3),
        tau in 0.0..1.0f64,
        m in prop_oneof![Just(0.0), Just(1.0), Just(8.0), Just(64.0)],
    ) {
        let (z, y, g) = small_problem(seed, 40);
        if !g.contains(&Group::Privileged) || !g.contains(&Group::Unprivileged) {
            return Ok(());
        }
        let obj = Objective::new(&z, &y, &g, 1e-2).with_fairness(tau, m);
        // the hinge is not differentiable at its kink
        prop_assume!(m == 0.0 || (tau - obj.soft_dp(&p)).abs() > 1e-3);
        let (v, grad) = obj.value_and_gradient(&p);
        prop_assert!((v - obj.value(&p)).abs() < 1e-12);
        let fd = central_difference(&obj, &p, 1e-6);
        let e = rel_err(&grad, &fd);
        prop_assert!(e <= 1e-5, "relative error {e}: {grad:?} vs {fd:?}");
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let ds = common::synthetic(150, 3, 0.5);
    let cfg = TrainConfig::default();
    for tau in [0.0, 0.8] {
        let a = train_constrained(&ds, tau, &cfg).unwrap();
        let b = train_constrained(&ds, tau, &cfg).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.weights), bits(&b.weights));
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
        assert_eq!(a.group_thresholds, b.group_thresholds);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}

#[test]
fn tau_zero_matches_unconstrained() {
    let ds = common::synthetic(200, 11, 0.7);
    let cfg = TrainConfig::default();
    let plain = train_unconstrained(&ds, &cfg).unwrap();
    let zero = train_constrained(&ds, 0.0, &cfg).unwrap();
    let a = predict(&plain, ds.features(), ds.protected()).unwrap();
    let b = predict(&zero, ds.features(), ds.protected()).unwrap();
    assert_eq!(a.outcomes(), b.outcomes());
    assert_eq!(
        predict_proba(&plain, ds.features()).unwrap(),
        predict_proba(&zero, ds.features()).unwrap()
    );
}

#[test]
fn thresholds_are_near_optimal_on_small_instances() {
    let cfg = TrainConfig::default();
    let grid = cfg.threshold_grid();
    for seed in 0..6u64 {
        let ds = common::synthetic(60, 100 + seed, 0.8);
        for tau in [0.5, 0.7, 0.9] {
            let required = tau - cfg.epsilon;
            match train_constrained(&ds, tau, &cfg) {
                Ok(m) => {
                    let proba = predict_proba(&m, ds.features()).unwrap();
                    let oracle = common::exhaustive_threshold_accuracy(
                        &proba,
                        ds.labels(),
                        ds.protected(),
                        &grid,
                        required,
                    )
                    .expect("the trained pair is itself feasible");
                    assert!(
                        oracle - m.train_accuracy <= 0.02,
                        "seed {seed} tau {tau}: {} vs oracle {oracle}",
                        m.train_accuracy
                    );
                    let pred = predict(&m, ds.features(), ds.protected()).unwrap();
                    let dp = common::dp(pred.outcomes(), ds.protected()).unwrap();
                    assert!(dp + 1e-12 >= required);
                }
                Err(Error::Infeasible { closest, .. }) => {
                    let proba = predict_proba(&closest, ds.features()).unwrap();
                    assert!(common::exhaustive_threshold_accuracy(
                        &proba,
                        ds.labels(),
                        ds.protected(),
                        &grid,
                        required
                    )
                    .is_none());
                }
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn fixture_training_meets_its_guarantee() {
    let ds = common::load_fixture("trainer");
    let cfg = TrainConfig::default();
    let (train, test) = stratified_split(&ds, 0.7, 42).unwrap();
    assert_eq!(train.len() + test.len(), ds.len());
    for tau in [0.2, 0.5, 0.8, 0.95] {
        let m = train_constrained(&train, tau, &cfg).unwrap();
        assert!(m.converged);
        let pred = predict(&m, train.features(), train.protected()).unwrap();
        let dp = common::dp(pred.outcomes(), train.protected()).unwrap();
        assert!((dp - m.train_dp).abs() < 1e-12);
        assert!(dp >= tau - cfg.epsilon - 1e-12, "tau {tau}: dp {dp}");
    }
}
