//! Chi-square test of independence and Cramér's V.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if counts.len() != row_labels.len() {
            return Err(Error::LengthMismatch {
                expected: row_labels.len(),
                found: counts.len(),
            });
        }
        if let Some(row) = counts.iter().find(|r| r.len() != col_labels.len()) {
            return Err(Error::LengthMismatch {
                expected: col_labels.len(),
                found: row.len(),
            });
        }
        if counts.len() < 2 || col_labels.len() < 2 {
            return Err(Error::Degenerate(format!(
                "{}x{} table; need at least 2x2",
                counts.len(),
                col_labels.len()
            )));
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::Degenerate("empty table".into()));
        }
        Ok(ContingencyTable {
            counts,
            row_labels,
            col_labels,
        })
    }

    /// Table with default labels, handy for literal counts.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let r = counts.len();
        let c = counts.first().map_or(0, Vec::len);
        Self::new(
            counts,
            (0..r).map(|i| i.to_string()).collect(),
            (0..c).map(|j| j.to_string()).collect(),
        )
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> ContingencyTable {
        let counts = (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|row| row[j]).collect())
            .collect();
        ContingencyTable {
            counts,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }
}

/// Cross-tabulates two aligned categorical vectors; labels sorted.
pub fn contingency_table<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> Result<ContingencyTable> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut cells: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut rows = std::collections::BTreeSet::new();
    let mut cols = std::collections::BTreeSet::new();
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_ref(), y.as_ref());
        rows.insert(x);
        cols.insert(y);
        *cells.entry((x, y)).or_default() += 1;
    }
    if rows.len() < 2 || cols.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need two distinct values per vector, got {} and {}",
            rows.len(),
            cols.len()
        )));
    }
    let counts = rows
        .iter()
        .map(|r| cols.iter().map(|c| cells.get(&(*r, *c)).copied().unwrap_or(0)).collect())
        .collect();
    ContingencyTable::new(
        counts,
        rows.into_iter().map(str::to_string).collect(),
        cols.into_iter().map(str::to_string).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub x2: f64,
    pub dof: usize,
    pub p: f64,
    pub cramers_v: f64,
    pub n: u64,
}

impl fmt::Display for ChiSquareResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "X²({}, N={})={:.2}, p={:.4}, V={:.2}",
            self.dof, self.n, self.x2, self.p, self.cramers_v
        )
    }
}

fn margins(t: &ContingencyTable) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let rows: Vec<f64> = t.counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..t.col_labels.len())
        .map(|j| t.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if rows.contains(&0.0) {
        return Err(Error::ZeroMargin("row"));
    }
    if cols.contains(&0.0) {
        return Err(Error::ZeroMargin("column"));
    }
    let n = rows.iter().sum();
    Ok((rows, cols, n))
}

fn statistic(t: &ContingencyTable) -> Result<f64> {
    let (rows, cols, n) = margins(t)?;
    let mut x2 = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] * cols[j] / n;
            let d = obs as f64 - expected;
            x2 += d * d / expected;
        }
    }
    Ok(x2)
}

fn v_from(x2: f64, t: &ContingencyTable) -> f64 {
    let k = (t.row_labels.len().min(t.col_labels.len()) - 1) as f64;
    (x2 / (t.total() as f64 * k)).sqrt().clamp(0.0, 1.0)
}

pub fn chi_square(t: &ContingencyTable) -> Result<ChiSquareResult> {
    let x2 = statistic(t)?;
    let dof = (t.row_labels.len() - 1) * (t.col_labels.len() - 1);
    Ok(ChiSquareResult {
        x2,
        dof,
        p: chi2_sf(x2, dof),
        cramers_v: v_from(x2, t),
        n: t.total(),
    })
}

pub fn cramers_v(t: &ContingencyTable) -> Result<f64> {
    Ok(v_from(statistic(t)?, t))
}

/// Upper tail P(X >= x) of a chi-square variable with `k` degrees of freedom.
pub fn chi2_sf(x: f64, k: usize) -> f64 {
    assert!(k > 0, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(k as f64 / 2.0, x / 2.0)
}

/// Lower tail P(X < x).
pub fn chi2_cdf(x: f64, k: usize) -> f64 {
    assert!(k > 0, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    gamma_lr(k as f64 / 2.0, x / 2.0)
}
