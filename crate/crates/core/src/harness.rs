//! Repeated stratified splits, tau sweeps, and their aggregates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{stratified_split_indices, Dataset};
use crate::metrics::{full_report, FairnessReport, OutcomeVector, CDD_WEIGHTING};
use crate::par::{map_indexed, Execution};
use crate::trainer::{predict, train_constrained_best_effort, train_unconstrained, Model, TrainConfig};

pub const SPLIT_PROTOCOL: &str = "repeated stratified 70/30 random splits, seeds base_seed..base_seed+n-1";

/// Default tau grid 0.0, 0.1, ..., 1.0.
pub fn default_taus() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Scores `model` on `test` against its labels.
pub fn evaluate(model: &Model, test: &Dataset) -> Result<FairnessReport> {
    let pred = predict(model, test.features(), test.protected())?;
    let truth = OutcomeVector::ground_truth(test.labels().to_vec())?;
    full_report(&pred, test.protected(), test.explanatory(), Some(&truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPlan {
    pub train: TrainConfig,
    pub repeats: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    /// Keep the closest model when a tau cannot be met instead of failing.
    pub best_effort: bool,
    pub execution: Execution,
}

impl Default for EvalPlan {
    fn default() -> Self {
        EvalPlan {
            train: TrainConfig::default(),
            repeats: 10,
            base_seed: 42,
            train_fraction: 0.7,
            best_effort: false,
            execution: Execution::default(),
        }
    }
}

impl EvalPlan {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|i| self.base_seed + i).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("at least one repetition is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        self.train.validate()
    }
}

/// One trained and evaluated model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub seed: u64,
    pub tau: f64,
    pub converged: bool,
    pub multiplier: f64,
    pub train_dp: f64,
    pub train_accuracy: f64,
    pub test: FairnessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub repeat: usize,
    pub seed: u64,
    pub tau: f64,
    /// The tau could not be met; other failures are data or numeric errors.
    pub infeasible: bool,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Repeats {
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl Repeats {
    pub fn reports(&self) -> Vec<&FairnessReport> {
        self.runs.iter().map(|r| &r.test).collect()
    }
}

/// Ground-truth metrics of one test part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub repeat: usize,
    pub seed: u64,
    pub dp: f64,
    pub cdd_weighted: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub stddev: f64,
    pub n: usize,
}

impl MeanStd {
    /// `None` for no values. Values are sorted first so the result does not
    /// depend on their order, down to the last bit.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            dev.sort_by(f64::total_cmp);
            (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, stddev, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauAggregate {
    pub tau: f64,
    pub dp: Option<MeanStd>,
    pub cdd_weighted: Option<MeanStd>,
    pub accuracy: Option<MeanStd>,
    pub train_dp: Option<MeanStd>,
    pub n_runs: usize,
    pub n_converged: usize,
    pub n_failed: usize,
}

impl TauAggregate {
    fn from_runs(tau: f64, runs: &[&RunRecord], n_failed: usize) -> Self {
        // Runs with an undefined metric are left out of that metric's mean.
        let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| {
            MeanStd::of(&runs.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        TauAggregate {
            tau,
            dp: col(&|r| Some(r.test.dp)),
            cdd_weighted: col(&|r| r.test.cdd_weighted),
            accuracy: col(&|r| r.test.accuracy),
            train_dp: col(&|r| Some(r.train_dp)),
            n_runs: runs.len(),
            n_converged: runs.iter().filter(|r| r.converged).count(),
            n_failed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset_id: String,
    pub protected_attribute: String,
    pub explanatory_attribute: String,
    pub taus: Vec<f64>,
    pub n_repeats: usize,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub split_protocol: String,
    pub cdd_weighting: String,
    pub train_config: TrainConfig,
    pub best_effort: bool,
    pub per_tau: Vec<TauAggregate>,
    /// Ground-truth metrics over the test parts, independent of tau.
    pub truth_dp: Option<MeanStd>,
    pub truth_cdd_weighted: Option<MeanStd>,
    pub truth_runs: Vec<TruthRecord>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl SweepResult {
    pub fn at_tau(&self, tau: f64) -> Option<&TauAggregate> {
        self.per_tau.iter().find(|a| (a.tau - tau).abs() < 1e-9)
    }

    pub fn has_infeasible(&self) -> bool {
        self.failures.iter().any(|f| f.infeasible)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Long format: `dataset,protected,tau,repeat,metric,value`, one line per
    /// run and metric, runs in (tau, repeat) order.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("dataset,protected,tau,repeat,metric,value\n");
        for r in &self.runs {
            let metrics = [
                ("dp", Some(r.test.dp)),
                ("cdd_weighted", r.test.cdd_weighted),
                ("accuracy", r.test.accuracy),
                ("spd", Some(r.test.spd)),
                ("train_dp", Some(r.train_dp)),
            ];
            for (name, v) in metrics {
                let v = v.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.dataset_id, self.protected_attribute, r.tau, r.repeat, name, v
                );
            }
        }
        out
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Config("no tau values".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("tau {t} outside [0, 1]")));
    }
    Ok(())
}

fn truth_report(test: &Dataset) -> Result<FairnessReport> {
    let t = OutcomeVector::ground_truth(test.labels().to_vec())?;
    full_report(&t, test.protected(), test.explanatory(), None)
}

fn truth_record(test: &Dataset, repeat: usize, seed: u64) -> Result<TruthRecord> {
    let r = truth_report(test)?;
    Ok(TruthRecord {
        repeat,
        seed,
        dp: r.dp,
        cdd_weighted: r.cdd_weighted,
    })
}

/// Ground-truth reports on the test parts of the splits `plan` describes,
/// without training anything.
pub fn ground_truth_splits(ds: &Dataset, plan: &EvalPlan) -> Result<Vec<FairnessReport>> {
    plan.validate()?;
    ds.check_usable()?;
    plan.seeds()
        .into_iter()
        .map(|seed| {
            let (_, test_idx) = stratified_split_indices(ds.labels(), plan.train_fraction, seed)?;
            truth_report(&ds.select(&test_idx))
        })
        .collect()
}

struct SplitOutcome {
    truth: std::result::Result<TruthRecord, String>,
    runs: Vec<std::result::Result<RunRecord, RunFailure>>,
}

fn run_split(ds: &Dataset, taus: &[f64], plan: &EvalPlan, repeat: usize) -> Result<SplitOutcome> {
    let seed = plan.base_seed + repeat as u64;
    let (train_idx, test_idx) = stratified_split_indices(ds.labels(), plan.train_fraction, seed)?;
    let (train, test) = (ds.select(&train_idx), ds.select(&test_idx));

    let truth = truth_record(&test, repeat, seed).map_err(|e| e.to_string());

    let fail = |tau: f64, e: &Error| RunFailure {
        repeat,
        seed,
        tau,
        infeasible: matches!(e, Error::Infeasible { .. }),
        message: e.to_string(),
    };
    let base = match train_unconstrained(&train, &plan.train) {
        Ok(m) => m,
        Err(e) => {
            return Ok(SplitOutcome {
                truth,
                runs: taus.iter().map(|&t| Err(fail(t, &e))).collect(),
            })
        }
    };
    let runs = taus
        .iter()
        .map(|&tau| {
            let model = train_constrained_best_effort(&train, tau, &plan.train, &base, plan.best_effort)
                .map_err(|e| fail(tau, &e))?;
            let test_report = evaluate(&model, &test).map_err(|e| fail(tau, &e))?;
            Ok(RunRecord {
                repeat,
                seed,
                tau,
                converged: model.converged,
                multiplier: model.multiplier,
                train_dp: model.train_dp,
                train_accuracy: model.train_accuracy,
                test: test_report,
            })
        })
        .collect();
    Ok(SplitOutcome { truth, runs })
}

/// Trains and evaluates at one `tau` on `plan.repeats` splits.
pub fn run_repeats(ds: &Dataset, tau: f64, plan: &EvalPlan) -> Result<Repeats> {
    let sweep = tau_sweep(ds, &[tau], plan)?;
    Ok(Repeats {
        runs: sweep.runs,
        failures: sweep.failures,
    })
}

/// Evaluates every tau on the same splits; one unconstrained fit per split is
/// shared by all taus.
pub fn tau_sweep(ds: &Dataset, taus: &[f64], plan: &EvalPlan) -> Result<SweepResult> {
    check_taus(taus)?;
    plan.validate()?;
    ds.check_usable()?;

    let outcomes = map_indexed(plan.repeats, plan.execution, |j| run_split(ds, taus, plan, j));
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut truth_runs = Vec::new();
    let mut failures = Vec::new();
    let mut by_tau: Vec<Vec<RunRecord>> = vec![Vec::new(); taus.len()];
    for (j, o) in outcomes.into_iter().enumerate() {
        match o.truth {
            Ok(t) => truth_runs.push(t),
            Err(message) => failures.push(RunFailure {
                repeat: j,
                seed: plan.base_seed + j as u64,
                tau: f64::NAN,
                infeasible: false,
                message,
            }),
        }
        for (k, run) in o.runs.into_iter().enumerate() {
            match run {
                Ok(r) => by_tau[k].push(r),
                Err(f) => failures.push(f),
            }
        }
    }

    let per_tau = taus
        .iter()
        .zip(&by_tau)
        .map(|(&tau, runs)| {
            let refs: Vec<&RunRecord> = runs.iter().collect();
            let n_failed = failures.iter().filter(|f| f.tau == tau).count();
            TauAggregate::from_runs(tau, &refs, n_failed)
        })
        .collect();
    failures.sort_by(|a, b| a.tau.total_cmp(&b.tau).then(a.repeat.cmp(&b.repeat)));

    let truth_dp = MeanStd::of(&truth_runs.iter().map(|t| t.dp).collect::<Vec<_>>());
    let truth_cdd_weighted =
        MeanStd::of(&truth_runs.iter().filter_map(|t| t.cdd_weighted).collect::<Vec<_>>());

    Ok(SweepResult {
        dataset_id: ds.provenance().to_string(),
        protected_attribute: ds.protected_name().to_string(),
        explanatory_attribute: ds.explanatory_name().to_string(),
        taus: taus.to_vec(),
        n_repeats: plan.repeats,
        seeds: plan.seeds(),
        train_fraction: plan.train_fraction,
        split_protocol: SPLIT_PROTOCOL.to_string(),
        cdd_weighting: CDD_WEIGHTING.to_string(),
        train_config: plan.train.clone(),
        best_effort: plan.best_effort,
        per_tau,
        truth_dp,
        truth_cdd_weighted,
        truth_runs,
        runs: by_tau.into_iter().flatten().collect(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ColumnKind, FeatureMatrix, Group, Outcome};
    use crate::trainer::{GroupThresholds, Standardizer};

    fn toy(n: usize) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        let mut strata = Vec::new();
        for i in 0..n {
            let x = ((i * 37) % 101) as f64 / 50.0 - 1.0;
            let g = if i % 3 == 0 { Group::Unprivileged } else { Group::Privileged };
            let shift = if g == Group::Privileged { 0.3 } else { -0.3 };
            rows.push(vec![x]);
            labels.push(if x + shift > 0.0 { Outcome::Favorable } else { Outcome::Unfavorable });
            groups.push(g);
            strata.push(if i % 2 == 0 { "a".to_string() } else { "b".to_string() });
        }
        Dataset::new(
            FeatureMatrix::from_rows(&rows).unwrap(),
            vec!["x".into()],
            vec![ColumnKind::Numeric],
            groups,
            labels,
            strata,
            "toy",
        )
        .unwrap()
        .with_attribute_names("g", "s")
    }

    fn constant_model(bias: f64) -> Model {
        Model {
            weights: vec![0.0],
            bias,
            group_thresholds: GroupThresholds::NEUTRAL,
            tau: 0.0,
            trained_epsilon: 0.05,
            converged: true,
            multiplier: 0.0,
            standardizer: Standardizer::identity(1),
            train_dp: 1.0,
            train_accuracy: 0.0,
        }
    }

    fn plan(repeats: usize) -> EvalPlan {
        EvalPlan {
            repeats,
            train: TrainConfig {
                max_iters: 300,
                ..TrainConfig::default()
            },
            ..EvalPlan::default()
        }
    }

    #[test]
    fn constant_positive_classifier() {
        let ds = toy(60);
        let r = evaluate(&constant_model(5.0), &ds).unwrap();
        assert_eq!(r.dp, 1.0);
        let favorable = ds.labels().iter().filter(|o| o.is_favorable()).count();
        assert_eq!(r.accuracy, Some(favorable as f64 / 60.0));
    }

    #[test]
    fn evaluate_checks_width() {
        let mut m = constant_model(0.0);
        m.weights = vec![0.0, 0.0];
        m.standardizer = Standardizer::identity(2);
        assert!(matches!(evaluate(&m, &toy(30)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(MeanStd::of(&[]), None);
        let m = MeanStd::of(&[2.0]).unwrap();
        assert_eq!((m.mean, m.stddev), (2.0, 0.0));
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_repeat_is_one_split_train_evaluate() {
        let ds = toy(120);
        let p = plan(1);
        let rep = run_repeats(&ds, 0.0, &p).unwrap();
        let (tr, te) = crate::ingest::stratified_split(&ds, 0.7, p.base_seed).unwrap();
        let m = train_unconstrained(&tr, &p.train).unwrap();
        assert_eq!(rep.runs.len(), 1);
        assert_eq!(rep.runs[0].test, evaluate(&m, &te).unwrap());
    }

    #[test]
    fn sweep_is_deterministic_and_mode_independent() {
        let ds = toy(150);
        let taus = [0.0, 0.5, 0.9];
        let mut p = plan(3);
        p.best_effort = true;
        let a = tau_sweep(&ds, &taus, &p).unwrap();
        p.execution = Execution::Sequential;
        let b = tau_sweep(&ds, &taus, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_tau.len(), 3);
        assert_eq!(a.seeds, vec![42, 43, 44]);
        assert_eq!(a.protected_attribute, "g");
        for r in a.runs.iter().filter(|r| r.converged) {
            assert!(r.train_dp >= r.tau - p.train.epsilon - 1e-12);
        }
    }

    #[test]
    fn singleton_sweep_matches_run_repeats() {
        let ds = toy(90);
        let p = plan(2);
        let s = tau_sweep(&ds, &[0.0], &p).unwrap();
        let r = run_repeats(&ds, 0.0, &p).unwrap();
        assert_eq!(s.runs, r.runs);
        let dps: Vec<f64> = r.runs.iter().map(|x| x.test.dp).collect();
        assert_eq!(s.per_tau[0].dp, MeanStd::of(&dps));
    }

    #[test]
    fn long_csv_shape() {
        let ds = toy(90);
        let s = tau_sweep(&ds, &[0.0, 0.2], &plan(2)).unwrap();
        let csv = s.to_long_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("dataset,protected,tau,repeat,metric,value"));
        assert_eq!(lines.count(), s.runs.len() * 5);
        assert!(csv.contains("\ntoy,g,0.2,1,dp,"));
        assert_eq!(SweepResult::from_json(&s.to_json().unwrap()).unwrap().runs.len(), s.runs.len());
    }

    #[test]
    fn bad_inputs() {
        let ds = toy(30);
        assert!(matches!(tau_sweep(&ds, &[], &plan(1)), Err(Error::Config(_))));
        assert!(matches!(tau_sweep(&ds, &[1.5], &plan(1)), Err(Error::Config(_))));
        assert!(matches!(tau_sweep(&ds, &[0.0], &plan(0)), Err(Error::Config(_))));
    }
}
