//! Logistic scorer with per-group decision thresholds, trained either
//! unconstrained or under a minimum demographic-parity ratio `tau`.
//!
//! Constrained training runs in two stages. First the scorer is refit on the
//! log-loss plus `lambda * max(0, tau - soft_dp)`, where `soft_dp` is the
//! min/max ratio of the mean sigmoid score of each group, for
//! `lambda = 0, 1, 2, 4, ...` up to the configured cap. Then, for every fitted
//! scorer, a grid over `(threshold_unprivileged, threshold_privileged)` picks
//! the pair with the best training accuracy among those whose thresholded
//! predictions satisfy `dp >= tau - epsilon`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, Dataset, FeatureMatrix, Group, Outcome};
use crate::metrics::{parity_ratio, OutcomeVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub l2_penalty: f64,
    /// Allowed shortfall of the training DP below `tau`.
    pub epsilon: f64,
    pub seed: u64,
    pub multiplier_cap: f64,
    pub threshold_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            max_iters: 2000,
            l2_penalty: 1e-4,
            epsilon: 0.05,
            seed: 42,
            multiplier_cap: 64.0,
            threshold_step: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be non-negative");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.multiplier_cap > 0.0) {
            return bad("multiplier_cap must be positive");
        }
        if !(self.threshold_step > 0.0 && self.threshold_step < 0.5) {
            return bad("threshold_step must lie in (0, 0.5)");
        }
        Ok(())
    }

    /// Interior grid points k/K, k = 1..K-1.
    pub fn threshold_grid(&self) -> Vec<f64> {
        let k = (1.0 / self.threshold_step).round() as usize;
        (1..k).map(|i| i as f64 / k as f64).collect()
    }

    pub fn multipliers(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut m = 1.0;
        while m <= self.multiplier_cap {
            out.push(m);
            m *= 2.0;
        }
        out
    }
}

/// Z-scoring of numeric columns, fitted on training data. Indicator columns
/// pass through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &FeatureMatrix, kinds: &[ColumnKind]) -> Standardizer {
        let d = features.n_cols();
        let n = features.n_rows().max(1) as f64;
        let mut means = vec![0.0; d];
        let mut scales = vec![1.0; d];
        for j in 0..d {
            if kinds.get(j) != Some(&ColumnKind::Numeric) {
                continue;
            }
            let mean = features.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = features.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            scales[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Standardizer { means, scales }
    }

    pub fn identity(d: usize) -> Standardizer {
        Standardizer {
            means: vec![0.0; d],
            scales: vec![1.0; d],
        }
    }

    pub fn transform(&self, features: &FeatureMatrix) -> FeatureMatrix {
        let mut data = Vec::with_capacity(features.n_rows() * features.n_cols());
        for row in features.rows() {
            data.extend(
                row.iter()
                    .zip(self.means.iter().zip(&self.scales))
                    .map(|(x, (m, s))| (x - m) / s),
            );
        }
        FeatureMatrix::new(features.n_rows(), features.n_cols(), data)
            .expect("same shape as input")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub privileged: f64,
    pub unprivileged: f64,
}

impl GroupThresholds {
    pub const NEUTRAL: GroupThresholds = GroupThresholds {
        privileged: 0.5,
        unprivileged: 0.5,
    };

    pub fn get(&self, g: Group) -> f64 {
        match g {
            Group::Privileged => self.privileged,
            Group::Unprivileged => self.unprivileged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    /// Weights over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub group_thresholds: GroupThresholds,
    pub tau: f64,
    pub trained_epsilon: f64,
    pub converged: bool,
    /// Fairness multiplier of the selected scorer (0 for unconstrained fits).
    pub multiplier: f64,
    pub standardizer: Standardizer,
    pub train_dp: f64,
    pub train_accuracy: f64,
}

impl Model {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        let mut s = self.bias;
        for (j, &x) in row.iter().enumerate() {
            s += self.weights[j] * (x - self.standardizer.means[j]) / self.standardizer.scales[j];
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^s) without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn check_width(m: &Model, features: &FeatureMatrix) -> Result<()> {
    if features.n_cols() != m.n_features() {
        return Err(Error::Dimension {
            expected: m.n_features(),
            found: features.n_cols(),
        });
    }
    Ok(())
}

/// sigmoid(w . standardize(x) + b) per row.
pub fn predict_proba(m: &Model, features: &FeatureMatrix) -> Result<Vec<f64>> {
    check_width(m, features)?;
    Ok(features.rows().map(|r| sigmoid(m.score_row(r))).collect())
}

fn threshold_outcomes(m: &Model, proba: &[f64], groups: &[Group]) -> Vec<Outcome> {
    proba
        .iter()
        .zip(groups)
        .map(|(&p, &g)| {
            if p >= m.group_thresholds.get(g) {
                Outcome::Favorable
            } else {
                Outcome::Unfavorable
            }
        })
        .collect()
}

/// `+` iff the probability reaches the instance's group threshold.
pub fn predict(m: &Model, features: &FeatureMatrix, groups: &[Group]) -> Result<OutcomeVector> {
    let proba = predict_proba(m, features)?;
    if groups.len() != proba.len() {
        return Err(Error::LengthMismatch {
            expected: proba.len(),
            found: groups.len(),
        });
    }
    OutcomeVector::predicted(threshold_outcomes(m, &proba, groups))
}

/// Penalized training objective over standardized features. Parameters are
/// laid out as `[w_0, .., w_{d-1}, bias]`.
pub struct Objective<'a> {
    z: &'a FeatureMatrix,
    y: Vec<f64>,
    groups: &'a [Group],
    n_group: [f64; 2],
    l2: f64,
    tau: f64,
    multiplier: f64,
}

fn group_slot(g: Group) -> usize {
    usize::from(g == Group::Unprivileged)
}

impl<'a> Objective<'a> {
    pub fn new(z: &'a FeatureMatrix, labels: &[Outcome], groups: &'a [Group], l2: f64) -> Self {
        let mut n_group = [0.0; 2];
        for &g in groups {
            n_group[group_slot(g)] += 1.0;
        }
        Objective {
            z,
            y: labels.iter().map(|o| f64::from(u8::from(o.is_favorable()))).collect(),
            groups,
            n_group,
            l2,
            tau: 0.0,
            multiplier: 0.0,
        }
    }

    pub fn with_fairness(mut self, tau: f64, multiplier: f64) -> Self {
        self.tau = tau;
        self.multiplier = multiplier;
        self
    }

    fn scores(&self, params: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(params.len() - 1);
        self.z
            .rows()
            .map(|r| b[0] + r.iter().zip(w).map(|(x, w)| x * w).sum::<f64>())
            .collect()
    }

    /// Mean log-loss plus L2 on the weights.
    pub fn log_loss(&self, params: &[f64]) -> f64 {
        self.log_loss_from(params, &self.scores(params))
    }

    fn log_loss_from(&self, params: &[f64], scores: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let data: f64 = scores
            .iter()
            .zip(&self.y)
            .map(|(&s, &y)| softplus(s) - y * s)
            .sum::<f64>()
            / n;
        let w = &params[..params.len() - 1];
        data + 0.5 * self.l2 * w.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn log_loss_gradient(&self, params: &[f64]) -> Vec<f64> {
        let scores = self.scores(params);
        self.log_loss_gradient_from(params, &scores)
    }

    fn log_loss_gradient_from(&self, params: &[f64], scores: &[f64]) -> Vec<f64> {
        let d = params.len() - 1;
        let n = self.y.len() as f64;
        let mut grad = vec![0.0; d + 1];
        for ((row, &s), &y) in self.z.rows().zip(scores).zip(&self.y) {
            let r = sigmoid(s) - y;
            for (g, x) in grad[..d].iter_mut().zip(row) {
                *g += r * x;
            }
            grad[d] += r;
        }
        for (g, w) in grad[..d].iter_mut().zip(params) {
            *g = *g / n + self.l2 * w;
        }
        grad[d] /= n;
        grad
    }

    /// Group means of the sigmoid score, indexed [privileged, unprivileged].
    fn soft_rates(&self, scores: &[f64]) -> [f64; 2] {
        let mut sums = [0.0; 2];
        for (&s, &g) in scores.iter().zip(self.groups) {
            sums[group_slot(g)] += sigmoid(s);
        }
        [sums[0] / self.n_group[0], sums[1] / self.n_group[1]]
    }

    /// min/max ratio of the group mean scores.
    pub fn soft_dp(&self, params: &[f64]) -> f64 {
        let [p, u] = self.soft_rates(&self.scores(params));
        parity_ratio(p, u)
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let base = self.log_loss(params);
        if self.multiplier == 0.0 {
            return base;
        }
        base + self.multiplier * (self.tau - self.soft_dp(params)).max(0.0)
    }

    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let scores = self.scores(params);
        let mut grad = self.log_loss_gradient_from(params, &scores);
        let mut value = self.log_loss_from(params, &scores);
        if self.multiplier == 0.0 {
            return (value, grad);
        }
        let rates = self.soft_rates(&scores);
        let soft = parity_ratio(rates[0], rates[1]);
        let gap = self.tau - soft;
        if gap <= 0.0 || rates[0].max(rates[1]) <= 0.0 {
            return (value, grad);
        }
        value += self.multiplier * gap;

        // d(rate_g)/d(theta) = mean over g of sigma'(s) [x, 1]
        let d = params.len() - 1;
        let mut drate = [vec![0.0; d + 1], vec![0.0; d + 1]];
        for ((row, &s), &g) in self.z.rows().zip(&scores).zip(self.groups) {
            let k = group_slot(g);
            let sg = sigmoid(s);
            let ds = sg * (1.0 - sg) / self.n_group[k];
            for (acc, x) in drate[k][..d].iter_mut().zip(row) {
                *acc += ds * x;
            }
            drate[k][d] += ds;
        }
        let (lo, hi) = if rates[0] <= rates[1] { (0, 1) } else { (1, 0) };
        for j in 0..=d {
            let dsoft =
                (drate[lo][j] * rates[hi] - rates[lo] * drate[hi][j]) / (rates[hi] * rates[hi]);
            grad[j] -= self.multiplier * dsoft;
        }
        (value, grad)
    }
}

struct Descent {
    params: Vec<f64>,
    initial: f64,
    last: f64,
}

/// Full-batch gradient descent with a 1/sqrt(t) step decay.
fn descend(obj: &Objective<'_>, mut params: Vec<f64>, cfg: &TrainConfig) -> Descent {
    let initial = obj.value(&params);
    let mut last = initial;
    for t in 0..cfg.max_iters {
        let (value, grad) = obj.value_and_gradient(&params);
        last = value;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-9 || !norm.is_finite() {
            break;
        }
        let step = cfg.learning_rate / ((t + 1) as f64).sqrt();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= step * g;
        }
    }
    let final_value = obj.value(&params);
    if final_value.is_finite() {
        last = final_value;
    }
    Descent {
        params,
        initial,
        last,
    }
}

fn initial_params(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.01..0.01)).collect();
    p.push(0.0);
    p
}

fn model_from(params: &[f64], standardizer: &Standardizer, cfg: &TrainConfig) -> Model {
    let (w, b) = params.split_at(params.len() - 1);
    Model {
        weights: w.to_vec(),
        bias: b[0],
        group_thresholds: GroupThresholds::NEUTRAL,
        tau: 0.0,
        trained_epsilon: cfg.epsilon,
        converged: false,
        multiplier: 0.0,
        standardizer: standardizer.clone(),
        train_dp: 0.0,
        train_accuracy: 0.0,
    }
}

/// DP ratio and accuracy of thresholded predictions.
fn score_predictions(pred: &[Outcome], ds: &Dataset) -> (f64, f64) {
    let mut fav = [0usize; 2];
    let mut n = [0usize; 2];
    let mut correct = 0;
    for ((&p, &y), &g) in pred.iter().zip(ds.labels()).zip(ds.protected()) {
        n[group_slot(g)] += 1;
        fav[group_slot(g)] += usize::from(p.is_favorable());
        correct += usize::from(p == y);
    }
    let rate = |k: usize| fav[k] as f64 / n[k].max(1) as f64;
    (parity_ratio(rate(0), rate(1)), correct as f64 / pred.len() as f64)
}

fn finish(mut m: Model, train: &Dataset) -> Result<Model> {
    let pred = predict(&m, train.features(), train.protected())?;
    let (dp, acc) = score_predictions(pred.outcomes(), train);
    m.train_dp = dp;
    m.train_accuracy = acc;
    Ok(m)
}

/// Plain regularized logistic regression with neutral 0.5 thresholds.
pub fn train_unconstrained(train: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    train.check_usable()?;
    let standardizer = Standardizer::fit(train.features(), train.feature_kinds());
    let z = standardizer.transform(train.features());
    let obj = Objective::new(&z, train.labels(), train.protected(), cfg.l2_penalty);
    let fit = descend(&obj, initial_params(z.n_cols(), cfg.seed), cfg);
    if fit.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonConvergence("parameters are not finite".into()));
    }
    let mut m = model_from(&fit.params, &standardizer, cfg);
    m.converged = fit.last < fit.initial;
    finish(m, train)
}

/// Positive-prediction and correct counts per grid threshold for one group.
struct ThresholdCurve {
    n: usize,
    positives: Vec<usize>,
    correct: Vec<usize>,
}

impl ThresholdCurve {
    fn new(proba: &[f64], labels: &[Outcome], members: &[usize], grid: &[f64]) -> Self {
        let mut sorted: Vec<(f64, bool)> = members
            .iter()
            .map(|&i| (proba[i], labels[i].is_favorable()))
            .collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut fav_prefix = Vec::with_capacity(sorted.len() + 1);
        fav_prefix.push(0usize);
        for &(_, fav) in &sorted {
            fav_prefix.push(fav_prefix.last().unwrap() + usize::from(fav));
        }
        let n = sorted.len();
        let total_fav = fav_prefix[n];
        let mut positives = Vec::with_capacity(grid.len());
        let mut correct = Vec::with_capacity(grid.len());
        for &t in grid {
            let below = sorted.partition_point(|&(p, _)| p < t);
            let fav_below = fav_prefix[below];
            positives.push(n - below);
            correct.push((total_fav - fav_below) + (below - fav_below));
        }
        ThresholdCurve {
            n,
            positives,
            correct,
        }
    }

    fn rate(&self, k: usize) -> f64 {
        self.positives[k] as f64 / self.n as f64
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    thresholds: GroupThresholds,
    correct: usize,
    dp: f64,
}

struct GridResult {
    best_feasible: Option<Candidate>,
    closest: Candidate,
}

/// Exhaustive search over threshold pairs. The neutral pair is the incumbent,
/// so a constraint it already meets never moves the thresholds needlessly.
fn search_thresholds(proba: &[f64], train: &Dataset, grid: &[f64], required: f64) -> GridResult {
    let members = |g: Group| -> Vec<usize> {
        (0..train.len()).filter(|&i| train.protected()[i] == g).collect()
    };
    let priv_curve = ThresholdCurve::new(proba, train.labels(), &members(Group::Privileged), grid);
    let unpriv_curve =
        ThresholdCurve::new(proba, train.labels(), &members(Group::Unprivileged), grid);
    let neutral = grid.iter().position(|&t| t == 0.5);

    let candidate = |ku: usize, kp: usize| Candidate {
        thresholds: GroupThresholds {
            privileged: grid[kp],
            unprivileged: grid[ku],
        },
        correct: unpriv_curve.correct[ku] + priv_curve.correct[kp],
        dp: parity_ratio(unpriv_curve.rate(ku), priv_curve.rate(kp)),
    };

    let mut best: Option<Candidate> = None;
    let mut closest = candidate(neutral.unwrap_or(0), neutral.unwrap_or(0));
    if closest.dp >= required {
        best = Some(closest);
    }
    for ku in 0..grid.len() {
        for kp in 0..grid.len() {
            let c = candidate(ku, kp);
            if c.dp >= required && best.is_none_or(|b| c.correct > b.correct) {
                best = Some(c);
            }
            if c.dp > closest.dp || (c.dp == closest.dp && c.correct > closest.correct) {
                closest = c;
            }
        }
    }
    GridResult {
        best_feasible: best,
        closest,
    }
}

/// Trains a model whose thresholded training predictions reach
/// `dp >= tau - epsilon`, maximizing training accuracy.
///
/// On failure the error carries the closest model found.
pub fn train_constrained(train: &Dataset, tau: f64, cfg: &TrainConfig) -> Result<Model> {
    let base = train_unconstrained(train, cfg)?;
    train_constrained_from(train, tau, cfg, &base)
}

/// As [`train_constrained`], reusing an unconstrained fit on the same data so
/// a sweep over `tau` pays for it once.
pub fn train_constrained_from(
    train: &Dataset,
    tau: f64,
    cfg: &TrainConfig,
    base: &Model,
) -> Result<Model> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau {tau} outside [0, 1]")));
    }
    cfg.validate()?;
    train.check_usable()?;
    check_width(base, train.features())?;
    if tau == 0.0 {
        let mut m = base.clone();
        m.tau = 0.0;
        m.converged = true;
        return Ok(m);
    }

    let required = tau - cfg.epsilon;
    let grid = cfg.threshold_grid();
    let standardizer = base.standardizer.clone();
    let z = standardizer.transform(train.features());
    let mut params: Vec<f64> = base.weights.iter().copied().chain([base.bias]).collect();

    let mut best: Option<(Candidate, f64, Vec<f64>)> = None;
    let mut closest: Option<(Candidate, f64, Vec<f64>)> = None;
    for multiplier in cfg.multipliers() {
        let obj = Objective::new(&z, train.labels(), train.protected(), cfg.l2_penalty)
            .with_fairness(tau, multiplier);
        if multiplier > 0.0 {
            params = descend(&obj, params, cfg).params;
            if params.iter().any(|p| !p.is_finite()) {
                break;
            }
        }
        let scorer = model_from(&params, &standardizer, cfg);
        let proba = predict_proba(&scorer, train.features())?;
        let found = search_thresholds(&proba, train, &grid, required);
        if let Some(c) = found.best_feasible {
            if best.as_ref().is_none_or(|(b, _, _)| c.correct > b.correct) {
                best = Some((c, multiplier, params.clone()));
            }
        }
        let c = found.closest;
        if closest.as_ref().is_none_or(|(b, _, _)| c.dp > b.dp) {
            closest = Some((c, multiplier, params.clone()));
        }
        // Once the hinge is inactive larger multipliers leave the fit unchanged.
        if obj.soft_dp(&params) >= tau {
            break;
        }
    }

    let build = |(c, multiplier, params): (Candidate, f64, Vec<f64>), converged: bool| {
        let mut m = model_from(&params, &standardizer, cfg);
        m.group_thresholds = c.thresholds;
        m.tau = tau;
        m.multiplier = multiplier;
        m.converged = converged;
        finish(m, train)
    };
    match best {
        Some(b) => build(b, true),
        None => {
            let c = closest.expect("at least one multiplier is tried");
            let best_dp = c.0.dp;
            Err(Error::Infeasible {
                required,
                best_dp,
                closest: Box::new(build(c, false)?),
            })
        }
    }
}

/// Returns the trained model, or the closest infeasible one when
/// `best_effort` is set.
pub fn train_constrained_best_effort(
    train: &Dataset,
    tau: f64,
    cfg: &TrainConfig,
    base: &Model,
    best_effort: bool,
) -> Result<Model> {
    match train_constrained_from(train, tau, cfg, base) {
        Err(Error::Infeasible { closest, .. }) if best_effort => Ok(*closest),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        // label favorable iff x0 + 0.5 x1 > 0; group alternates
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let x0 = ((i * 37) % 101) as f64 / 50.0 - 1.0;
            let x1 = ((i * 53) % 97) as f64 / 48.0 - 1.0;
            rows.push(vec![x0, x1]);
            labels.push(if x0 + 0.5 * x1 > 0.0 { Outcome::Favorable } else { Outcome::Unfavorable });
            groups.push(if i % 2 == 0 { Group::Privileged } else { Group::Unprivileged });
        }
        Dataset::new(
            FeatureMatrix::from_rows(&rows).unwrap(),
            vec!["x0".into(), "x1".into()],
            vec![ColumnKind::Numeric; 2],
            groups,
            labels,
            vec!["r".into(); n],
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_is_learned() {
        let ds = toy(200);
        let m = train_unconstrained(&ds, &TrainConfig::default()).unwrap();
        assert!(m.converged);
        assert!(m.train_accuracy >= 0.95, "{}", m.train_accuracy);
        assert_eq!(m.group_thresholds, GroupThresholds::NEUTRAL);
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = model_from(&[0.0, 0.0, 0.0], &Standardizer::identity(2), &TrainConfig::default());
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(predict_proba(&m, &x).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn saturation() {
        let m = model_from(&[100.0, 0.0], &Standardizer::identity(1), &TrainConfig::default());
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let p = predict_proba(&m, &x).unwrap();
        assert!((1.0 - p[0]).abs() < 1e-6 && p[1] < 1e-6);
    }

    #[test]
    fn width_mismatch() {
        let m = model_from(&[1.0, 1.0, 0.0], &Standardizer::identity(2), &TrainConfig::default());
        let x = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(predict_proba(&m, &x), Err(Error::Dimension { expected: 2, found: 1 })));
    }

    #[test]
    fn group_thresholds_apply() {
        let mut m = model_from(&[0.0, 0.0], &Standardizer::identity(1), &TrainConfig::default());
        m.group_thresholds = GroupThresholds {
            privileged: 0.7,
            unprivileged: 0.3,
        };
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let out = predict(&m, &x, &[Group::Unprivileged, Group::Privileged]).unwrap();
        assert_eq!(out.outcomes(), [Outcome::Favorable, Outcome::Unfavorable]);
        // proba exactly at threshold is favorable
        m.group_thresholds = GroupThresholds::NEUTRAL;
        let out = predict(&m, &x, &[Group::Unprivileged, Group::Privileged]).unwrap();
        assert_eq!(out.outcomes(), [Outcome::Favorable; 2]);
    }

    #[test]
    fn tau_zero_returns_unconstrained() {
        let ds = toy(120);
        let cfg = TrainConfig::default();
        let a = train_unconstrained(&ds, &cfg).unwrap();
        let b = train_constrained(&ds, 0.0, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.group_thresholds, b.group_thresholds);
    }

    #[test]
    fn rejects_bad_tau_and_config() {
        let ds = toy(50);
        let cfg = TrainConfig::default();
        assert!(matches!(train_constrained(&ds, 1.5, &cfg), Err(Error::Config(_))));
        let bad = TrainConfig {
            epsilon: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_unconstrained(&ds, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn threshold_curve_counts() {
        let proba = [0.1, 0.4, 0.6, 0.9];
        let labels = [
            Outcome::Unfavorable,
            Outcome::Favorable,
            Outcome::Unfavorable,
            Outcome::Favorable,
        ];
        let curve = ThresholdCurve::new(&proba, &labels, &[0, 1, 2, 3], &[0.05, 0.5, 0.6, 0.95]);
        assert_eq!(curve.positives, [4, 2, 2, 0]);
        assert_eq!(curve.correct, [2, 2, 2, 2]);
        let curve = ThresholdCurve::new(&proba, &labels, &[1, 3], &[0.3, 0.5]);
        assert_eq!((curve.positives.clone(), curve.correct.clone()), (vec![2, 1], vec![2, 1]));
    }

    #[test]
    fn model_json_round_trip() {
        let ds = toy(60);
        let m = train_constrained(&ds, 0.8, &TrainConfig::default()).unwrap();
        assert_eq!(Model::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
