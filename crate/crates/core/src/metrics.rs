//! Demographic parity, conditional demographic disparity and accuracy over
//! any outcome vector, ground truth or predicted.
//!
//! All ratios follow the min/max convention: 1 means parity, 0 means one side
//! receives nothing. When both rates are zero the groups are treated equally
//! and the ratio is 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Group, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    GroundTruth,
    Predicted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeVector {
    outcomes: Vec<Outcome>,
    kind: OutcomeKind,
}

impl OutcomeVector {
    pub fn new(outcomes: Vec<Outcome>, kind: OutcomeKind) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Degenerate("empty outcome vector".into()));
        }
        Ok(OutcomeVector { outcomes, kind })
    }

    pub fn ground_truth(outcomes: Vec<Outcome>) -> Result<Self> {
        Self::new(outcomes, OutcomeKind::GroundTruth)
    }

    pub fn predicted(outcomes: Vec<Outcome>) -> Result<Self> {
        Self::new(outcomes, OutcomeKind::Predicted)
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Favorable-outcome and total counts per group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupOutcomeCounts {
    pub privileged_favorable: usize,
    pub privileged_unfavorable: usize,
    pub unprivileged_favorable: usize,
    pub unprivileged_unfavorable: usize,
}

impl GroupOutcomeCounts {
    pub fn tally(outcomes: &[Outcome], groups: &[Group]) -> Result<Self> {
        check_len(outcomes.len(), groups.len())?;
        let mut c = GroupOutcomeCounts::default();
        for (&o, &g) in outcomes.iter().zip(groups) {
            *c.cell_mut(g, o) += 1;
        }
        Ok(c)
    }

    fn cell_mut(&mut self, g: Group, o: Outcome) -> &mut usize {
        match (g, o) {
            (Group::Privileged, Outcome::Favorable) => &mut self.privileged_favorable,
            (Group::Privileged, Outcome::Unfavorable) => &mut self.privileged_unfavorable,
            (Group::Unprivileged, Outcome::Favorable) => &mut self.unprivileged_favorable,
            (Group::Unprivileged, Outcome::Unfavorable) => &mut self.unprivileged_unfavorable,
        }
    }

    pub fn get(&self, g: Group, o: Outcome) -> usize {
        match (g, o) {
            (Group::Privileged, Outcome::Favorable) => self.privileged_favorable,
            (Group::Privileged, Outcome::Unfavorable) => self.privileged_unfavorable,
            (Group::Unprivileged, Outcome::Favorable) => self.unprivileged_favorable,
            (Group::Unprivileged, Outcome::Unfavorable) => self.unprivileged_unfavorable,
        }
    }

    pub fn group_total(&self, g: Group) -> usize {
        self.get(g, Outcome::Favorable) + self.get(g, Outcome::Unfavorable)
    }

    pub fn total(&self) -> usize {
        self.group_total(Group::Privileged) + self.group_total(Group::Unprivileged)
    }

    pub fn rate(&self, g: Group) -> Result<f64> {
        let n = self.group_total(g);
        if n == 0 {
            return Err(Error::EmptyGroup(g));
        }
        Ok(self.get(g, Outcome::Favorable) as f64 / n as f64)
    }
}

/// min/max ratio with 0/0 treated as equality.
pub fn parity_ratio(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi <= 0.0 {
        1.0
    } else {
        lo / hi
    }
}

/// P(outcome = + | g = which).
pub fn positive_rate(out: &OutcomeVector, groups: &[Group], which: Group) -> Result<f64> {
    GroupOutcomeCounts::tally(out.outcomes(), groups)?.rate(which)
}

fn both_rates(out: &OutcomeVector, groups: &[Group]) -> Result<(f64, f64)> {
    let c = GroupOutcomeCounts::tally(out.outcomes(), groups)?;
    Ok((c.rate(Group::Unprivileged)?, c.rate(Group::Privileged)?))
}

pub fn dp_ratio(out: &OutcomeVector, groups: &[Group]) -> Result<f64> {
    let (u, p) = both_rates(out, groups)?;
    Ok(parity_ratio(u, p))
}

/// Statistical parity difference, rate_unprivileged - rate_privileged.
pub fn spd(out: &OutcomeVector, groups: &[Group]) -> Result<f64> {
    let (u, p) = both_rates(out, groups)?;
    Ok(u - p)
}

fn di_from_rates(u: f64, p: f64) -> f64 {
    match (u > 0.0, p > 0.0) {
        (false, false) => 1.0,
        (true, false) => f64::INFINITY,
        _ => u / p,
    }
}

/// rate_unprivileged / rate_privileged; `f64::INFINITY` when only the
/// privileged rate is zero.
pub fn disparate_impact(out: &OutcomeVector, groups: &[Group]) -> Result<f64> {
    let (u, p) = both_rates(out, groups)?;
    Ok(di_from_rates(u, p))
}

/// CDD inside a single stratum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumCdd {
    /// `None` when undefined.
    pub ratio: Option<f64>,
    /// Share of the defined population; 0 for undefined strata.
    pub weight: f64,
    pub defined: bool,
    pub n: usize,
}

fn stratum_cdd_from(
    outcomes: &[Outcome],
    groups: &[Group],
    members: impl Iterator<Item = usize>,
) -> StratumCdd {
    // [outcome][group]
    let mut c = [[0usize; 2]; 2];
    let mut n = 0;
    for i in members {
        let o = usize::from(!outcomes[i].is_favorable());
        let g = usize::from(groups[i] == Group::Unprivileged);
        c[o][g] += 1;
        n += 1;
    }
    let plus = c[0][0] + c[0][1];
    let minus = c[1][0] + c[1][1];
    let ratio = if plus == 0 || minus == 0 {
        None
    } else {
        let p_plus = c[0][1] as f64 / plus as f64;
        let p_minus = c[1][1] as f64 / minus as f64;
        (p_plus.max(p_minus) > 0.0).then(|| parity_ratio(p_plus, p_minus))
    };
    StratumCdd {
        ratio,
        weight: 0.0,
        defined: ratio.is_some(),
        n,
    }
}

/// Ratio of P(g = unprivileged | +, R = r) to P(g = unprivileged | -, R = r).
pub fn cdd_stratum<S: AsRef<str>>(
    out: &OutcomeVector,
    groups: &[Group],
    strata: &[S],
    r: &str,
) -> Result<StratumCdd> {
    check_len(out.len(), groups.len())?;
    check_len(out.len(), strata.len())?;
    let members: Vec<usize> = (0..strata.len()).filter(|&i| strata[i].as_ref() == r).collect();
    if members.is_empty() {
        return Err(Error::UnknownStratum(r.to_string()));
    }
    Ok(stratum_cdd_from(out.outcomes(), groups, members.into_iter()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CddSummary {
    pub summary: f64,
    pub per_stratum: BTreeMap<String, StratumCdd>,
}

/// Per-stratum CDD with weights filled in, and the weighted summary when at
/// least one stratum is defined.
fn cdd_strata<S: AsRef<str>>(
    out: &OutcomeVector,
    groups: &[Group],
    strata: &[S],
) -> Result<(Option<f64>, BTreeMap<String, StratumCdd>)> {
    check_len(out.len(), groups.len())?;
    check_len(out.len(), strata.len())?;
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        members.entry(s.as_ref()).or_default().push(i);
    }
    let mut per_stratum: BTreeMap<String, StratumCdd> = members
        .into_iter()
        .map(|(k, idx)| (k.to_string(), stratum_cdd_from(out.outcomes(), groups, idx.into_iter())))
        .collect();

    let defined_n: usize = per_stratum.values().filter(|s| s.defined).map(|s| s.n).sum();
    if defined_n == 0 {
        return Ok((None, per_stratum));
    }
    let mut summary = 0.0;
    for s in per_stratum.values_mut() {
        if let Some(ratio) = s.ratio {
            s.weight = s.n as f64 / defined_n as f64;
            summary += s.weight * ratio;
        }
    }
    Ok((Some(summary.clamp(0.0, 1.0)), per_stratum))
}

/// Population-weighted mean of the per-stratum CDD ratios, renormalized over
/// the defined strata.
pub fn cdd_weighted<S: AsRef<str>>(
    out: &OutcomeVector,
    groups: &[Group],
    strata: &[S],
) -> Result<CddSummary> {
    match cdd_strata(out, groups, strata)? {
        (Some(summary), per_stratum) => Ok(CddSummary { summary, per_stratum }),
        (None, _) => Err(Error::AllStrataUndefined),
    }
}

pub fn accuracy(pred: &OutcomeVector, truth: &OutcomeVector) -> Result<f64> {
    if pred.kind() != OutcomeKind::Predicted {
        return Err(Error::KindMismatch("first argument must be predictions"));
    }
    if truth.kind() != OutcomeKind::GroundTruth {
        return Err(Error::KindMismatch("second argument must be ground truth"));
    }
    check_len(truth.len(), pred.len())?;
    let agree = pred
        .outcomes()
        .iter()
        .zip(truth.outcomes())
        .filter(|(a, b)| a == b)
        .count();
    Ok(agree as f64 / pred.len() as f64)
}

/// Every metric for one outcome vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub kind: OutcomeKind,
    pub n: usize,
    pub dp: f64,
    pub spd: f64,
    /// Infinite values serialize as `null`.
    #[serde(with = "infinite_as_null")]
    pub disparate_impact: f64,
    pub rate_privileged: f64,
    pub rate_unprivileged: f64,
    /// `None` when no stratum has both outcomes.
    pub cdd_weighted: Option<f64>,
    pub cdd_per_stratum: BTreeMap<String, StratumCdd>,
    /// Present only for predictions scored against ground truth.
    pub accuracy: Option<f64>,
    pub counts: GroupOutcomeCounts,
    /// How strata are weighted in `cdd_weighted`.
    pub cdd_weighting: String,
}

pub const CDD_WEIGHTING: &str = "stratum_population";

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub fn full_report<S: AsRef<str>>(
    out: &OutcomeVector,
    groups: &[Group],
    strata: &[S],
    truth: Option<&OutcomeVector>,
) -> Result<FairnessReport> {
    let counts = GroupOutcomeCounts::tally(out.outcomes(), groups)?;
    let (u, p) = (counts.rate(Group::Unprivileged)?, counts.rate(Group::Privileged)?);
    let (cdd, per_stratum) = cdd_strata(out, groups, strata)?;
    let accuracy = truth.map(|t| accuracy(out, t)).transpose()?;
    Ok(FairnessReport {
        kind: out.kind(),
        n: out.len(),
        dp: parity_ratio(u, p),
        spd: u - p,
        disparate_impact: di_from_rates(u, p),
        rate_privileged: p,
        rate_unprivileged: u,
        cdd_weighted: cdd,
        cdd_per_stratum: per_stratum,
        accuracy,
        counts,
        cdd_weighting: CDD_WEIGHTING.to_string(),
    })
}
