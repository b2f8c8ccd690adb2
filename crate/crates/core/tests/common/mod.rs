//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use fairaudit::ingest::{ColumnKind, Dataset, FeatureMatrix, Group, Outcome};
use proptest::prelude::*;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn recipe_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../recipes").join(name)
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a.min(b) / a.max(b)
    }
}

/// Counts favorable outcomes by hand, one group at a time.
pub fn rate(out: &[Outcome], g: &[Group], which: Group) -> Option<f64> {
    let mut total = 0;
    let mut fav = 0;
    for i in 0..out.len() {
        if g[i] == which {
            total += 1;
            if out[i] == Outcome::Favorable {
                fav += 1;
            }
        }
    }
    (total > 0).then(|| fav as f64 / total as f64)
}

pub fn dp(out: &[Outcome], g: &[Group]) -> Option<f64> {
    Some(ratio(rate(out, g, Group::Unprivileged)?, rate(out, g, Group::Privileged)?))
}

/// Per-stratum ratio, `None` when undefined.
pub fn cdd_in(out: &[Outcome], g: &[Group], s: &[String], r: &str) -> Option<f64> {
    let share_u = |o: Outcome| {
        let idx: Vec<usize> = (0..out.len()).filter(|&i| s[i] == r && out[i] == o).collect();
        if idx.is_empty() {
            return None;
        }
        let u = idx.iter().filter(|&&i| g[i] == Group::Unprivileged).count();
        Some(u as f64 / idx.len() as f64)
    };
    let (p, m) = (share_u(Outcome::Favorable)?, share_u(Outcome::Unfavorable)?);
    if p.max(m) == 0.0 {
        return None;
    }
    Some(p.min(m) / p.max(m))
}

/// Weighted CDD over defined strata, `None` when none is defined.
pub fn cdd(out: &[Outcome], g: &[Group], s: &[String]) -> Option<f64> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for x in s {
        *sizes.entry(x).or_default() += 1;
    }
    let mut num = 0.0;
    let mut den = 0usize;
    for (r, n) in sizes {
        if let Some(c) = cdd_in(out, g, s, r) {
            num += n as f64 * c;
            den += n;
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Pearson statistic through the N (sum O^2 / (r c) - 1) identity.
pub fn chi2_statistic(counts: &[Vec<u64>]) -> f64 {
    let rows: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..counts[0].len())
        .map(|j| counts.iter().map(|r| r[j] as f64).sum())
        .collect();
    let n: f64 = rows.iter().sum();
    let mut s = 0.0;
    for (i, r) in counts.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            s += (o as f64).powi(2) / (rows[i] * cols[j]);
        }
    }
    n * (s - 1.0)
}

fn gamma_half(k: usize) -> f64 {
    // Gamma(k / 2) by the recurrence from Gamma(1/2) or Gamma(1)
    let (mut g, mut s) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while s < k as f64 / 2.0 - 1e-12 {
        g *= s;
        s += 1.0;
    }
    g
}

/// Upper tail by Simpson quadrature of the density after t = u^2.
pub fn chi2_sf_quadrature(x: f64, k: usize) -> f64 {
    let c = 2.0 / (2f64.powf(k as f64 / 2.0) * gamma_half(k));
    let f = |u: f64| c * u.powi(k as i32 - 1) * (-u * u / 2.0).exp();
    let b = x.sqrt();
    let n = 20_000;
    let h = b / n as f64;
    let mut acc = f(0.0) + f(b);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - acc * h / 3.0
}

/// Best training accuracy over every threshold pair of the grid that keeps
/// dp >= required, or `None` when no pair qualifies.
pub fn exhaustive_threshold_accuracy(
    proba: &[f64],
    labels: &[Outcome],
    groups: &[Group],
    grid: &[f64],
    required: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &tp in grid {
        for &tu in grid {
            let pred: Vec<Outcome> = (0..proba.len())
                .map(|i| {
                    let t = if groups[i] == Group::Privileged { tp } else { tu };
                    if proba[i] >= t {
                        Outcome::Favorable
                    } else {
                        Outcome::Unfavorable
                    }
                })
                .collect();
            if dp(&pred, groups)? + 1e-12 < required {
                continue;
            }
            let acc = pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
            if best.is_none_or(|b| acc > b) {
                best = Some(acc);
            }
        }
    }
    best
}

pub fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::Favorable), Just(Outcome::Unfavorable)]
}

pub fn group() -> impl Strategy<Value = Group> {
    prop_oneof![Just(Group::Privileged), Just(Group::Unprivileged)]
}

/// Rows of (outcome, group, stratum) with both groups present.
pub fn instance(max_len: usize) -> impl Strategy<Value = (Vec<Outcome>, Vec<Group>, Vec<String>)> {
    prop::collection::vec((outcome(), group(), 0..3u8), 2..=max_len)
        .prop_filter("both groups", |rows| {
            rows.iter().any(|r| r.1 == Group::Privileged) && rows.iter().any(|r| r.1 == Group::Unprivileged)
        })
        .prop_map(|rows| {
            let o = rows.iter().map(|r| r.0).collect();
            let g = rows.iter().map(|r| r.1).collect();
            let s = rows.iter().map(|r| format!("s{}", r.2)).collect();
            (o, g, s)
        })
}

/// Deterministic two-feature dataset where the label depends on x0 and the
/// group shifts its base rate.
pub fn synthetic(n: usize, seed: u64, shift: f64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut strata = Vec::new();
    for _ in 0..n {
        let g = if rng.gen_bool(0.5) { Group::Privileged } else { Group::Unprivileged };
        let x0: f64 = rng.gen_range(-2.0..2.0);
        let x1: f64 = rng.gen_range(-1.0..1.0);
        let bump = if g == Group::Privileged { shift } else { -shift };
        let noise: f64 = rng.gen_range(-0.5..0.5);
        labels.push(if x0 + bump + noise > 0.0 { Outcome::Favorable } else { Outcome::Unfavorable });
        rows.push(vec![x0 + 0.5 * bump, x1]);
        groups.push(g);
        strata.push(if x1 < 0.0 { "lo".to_string() } else { "hi".to_string() });
    }
    Dataset::new(
        FeatureMatrix::from_rows(&rows).unwrap(),
        vec!["x0".into(), "x1".into()],
        vec![ColumnKind::Numeric; 2],
        groups,
        labels,
        strata,
        "synthetic",
    )
    .unwrap()
}

/// Loads `fixtures/<stem>.csv` through `fixtures/<stem>.json`.
pub fn load_fixture(stem: &str) -> Dataset {
    use fairaudit::ingest::{apply_recipe, Recipe};
    let recipe = Recipe::load(fixture(&format!("{stem}.json")))
        .unwrap()
        .select(None, None)
        .unwrap();
    let raw = recipe.load_table(fixture(&format!("{stem}.csv"))).unwrap();
    apply_recipe(&raw, &recipe).unwrap()
}
