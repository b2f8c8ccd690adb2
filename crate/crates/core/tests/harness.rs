mod common;

use fairaudit::harness::{tau_sweep, EvalPlan, MeanStd, SweepResult};
use fairaudit::par::Execution;
use proptest::prelude::*;

proptest! {
    #[test]
    fn mean_std_ignores_order(mut v in prop::collection::vec(0.0..1.0f64, 2..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = MeanStd::of(&v).unwrap();
        v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let b = MeanStd::of(&v).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.stddev.to_bits(), b.stddev.to_bits());

        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((a.mean - mean).abs() < 1e-12);
        prop_assert!((a.stddev - var.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn single_value_has_zero_spread() {
    let m = MeanStd::of(&[0.4]).unwrap();
    assert_eq!((m.mean, m.stddev, m.n), (0.4, 0.0, 1));
    assert!(MeanStd::of(&[]).is_none());
}

#[test]
fn sweep_is_reproducible_and_serializable() {
    let ds = common::synthetic(160, 21, 0.7);
    let taus = [0.0, 0.6, 0.9];
    let plan = EvalPlan {
        repeats: 3,
        best_effort: true,
        ..EvalPlan::default()
    };
    let a = tau_sweep(&ds, &taus, &plan).unwrap();
    let b = tau_sweep(
        &ds,
        &taus,
        &EvalPlan {
            execution: Execution::Sequential,
            ..plan.clone()
        },
    )
    .unwrap();
    assert_eq!(a.to_long_csv(), b.to_long_csv());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.seeds, vec![42, 43, 44]);
    assert_eq!(SweepResult::from_json(&a.to_json().unwrap()).unwrap(), a);

    // ground truth does not depend on tau, so every run of a repeat shares it
    for r in &a.runs {
        let t = &a.truth_runs[r.repeat];
        assert_eq!(t.seed, r.seed);
        assert_eq!(r.test.n, ds.len() - (0.7 * ds.len() as f64).round() as usize);
    }
    let dp_at = |tau: f64| a.at_tau(tau).unwrap().train_dp.unwrap().mean;
    assert!(dp_at(0.9) >= 0.85 - 1e-12);
}
