//! Comparison tables with the blue/green/red cell taxonomy and
//! fairness-vs-tau charts.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{MeanStd, SweepResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "CDD")]
    Cdd,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Dp => "DP",
            Metric::Cdd => "CDD",
        })
    }
}

/// Ground-truth value, unconstrained prediction, and prediction at the
/// selected tau for one (dataset, protected, metric).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTriple {
    pub dataset: String,
    pub protected: String,
    pub metric: Metric,
    pub test: f64,
    pub tau0: f64,
    pub taubest: f64,
}

impl CellTriple {
    pub fn new(
        dataset: impl Into<String>,
        protected: impl Into<String>,
        metric: Metric,
        test: f64,
        tau0: f64,
        taubest: f64,
    ) -> Self {
        CellTriple {
            dataset: dataset.into(),
            protected: protected.into(),
            metric,
            test,
            tau0,
            taubest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("test", self.test), ("tau0", self.tau0), ("taubest", self.taubest)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "{} value {v} of ({}, {}, {}) outside [0, 1]",
                    name, self.dataset, self.protected, self.metric
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellCategory {
    Blue,
    Green,
    Red,
    Uncategorized,
}

impl fmt::Display for CellCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub const RED_DROP: f64 = 0.2;
pub const BLUE_HIGH: f64 = 0.75;
pub const BLUE_DROP: f64 = 0.15;
// Table values are two-decimal roundings; 0.95 - 0.80 must count as 0.15.
const EPS: f64 = 1e-9;

/// Red, then Blue, then Green; the first rule that holds wins.
pub fn classify_cell(c: &CellTriple) -> CellCategory {
    let (test, tau0, best) = (c.test, c.tau0, c.taubest);
    if test - best > RED_DROP + EPS {
        CellCategory::Red
    } else if test >= BLUE_HIGH - EPS && test - tau0 <= BLUE_DROP + EPS && test - best <= BLUE_DROP + EPS {
        CellCategory::Blue
    } else if best >= tau0 - EPS || best >= test - EPS {
        CellCategory::Green
    } else {
        CellCategory::Uncategorized
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategorizedCell {
    #[serde(flatten)]
    pub cell: CellTriple,
    pub category: CellCategory,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableDocument {
    pub cells: Vec<CategorizedCell>,
}

pub const TABLE_CSV_HEADER: &str = "dataset,protected,metric,test,tau0,taubest,category";

impl TableDocument {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn count(&self, category: CellCategory) -> usize {
        self.cells.iter().filter(|c| c.category == category).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TABLE_CSV_HEADER}\n");
        for c in &self.cells {
            let t = &c.cell;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.dataset, t.protected, t.metric, t.test, t.tau0, t.taubest, c.category
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.cells)?)
    }

    /// Parses a JSON array of cells; categories are recomputed and must agree.
    pub fn from_json(text: &str) -> Result<Self> {
        let cells: Vec<CategorizedCell> = serde_json::from_str(text)?;
        let triples: Vec<CellTriple> = cells.iter().map(|c| c.cell.clone()).collect();
        let doc = emit_table(&triples)?;
        if let Some((a, b)) = doc.cells.iter().zip(&cells).find(|(a, b)| a.category != b.category) {
            return Err(Error::Format(format!(
                "cell ({}, {}, {}) is labeled {} but classifies as {}",
                b.cell.dataset, b.cell.protected, b.cell.metric, b.category, a.category
            )));
        }
        Ok(doc)
    }

    /// Plain-text grid: metrics as row blocks, datasets as column blocks.
    pub fn to_text(&self) -> String {
        let mut datasets: Vec<&str> = Vec::new();
        let mut protected: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !datasets.contains(&c.cell.dataset.as_str()) {
                datasets.push(&c.cell.dataset);
            }
            if !protected.contains(&c.cell.protected.as_str()) {
                protected.push(&c.cell.protected);
            }
        }
        let metrics: BTreeSet<Metric> = self.cells.iter().map(|c| c.cell.metric).collect();
        let label_w = protected.iter().map(|p| p.len()).max().unwrap_or(0).max(6);
        const COL_W: usize = 28;

        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for d in &datasets {
            let _ = write!(out, " | {d:COL_W$}");
        }
        out.push('\n');
        let _ = write!(out, "{:label_w$}", "");
        for _ in &datasets {
            let _ = write!(out, " | {:COL_W$}", "test  tau0  best  category");
        }
        out.push('\n');
        for m in metrics {
            let _ = writeln!(out, "{m}");
            for p in &protected {
                let _ = write!(out, "{p:label_w$}");
                for d in &datasets {
                    let cell = self.cells.iter().find(|c| {
                        c.cell.metric == m && c.cell.dataset == *d && c.cell.protected == *p
                    });
                    let text = match cell {
                        Some(c) => format!(
                            "{:.2}  {:.2}  {:.2}  {}",
                            c.cell.test, c.cell.tau0, c.cell.taubest, c.category
                        ),
                        None => "-".to_string(),
                    };
                    let _ = write!(out, " | {text:COL_W$}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Classifies every cell; each (dataset, protected, metric) may appear once.
pub fn emit_table(cells: &[CellTriple]) -> Result<TableDocument> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cells.len());
    for c in cells {
        c.validate()?;
        if !seen.insert((c.dataset.as_str(), c.protected.as_str(), c.metric)) {
            return Err(Error::DuplicateCell {
                dataset: c.dataset.clone(),
                protected: c.protected.clone(),
                metric: c.metric.to_string(),
            });
        }
        out.push(CategorizedCell {
            cell: c.clone(),
            category: classify_cell(c),
        });
    }
    Ok(TableDocument { cells: out })
}

fn mean_of(m: Option<MeanStd>, what: &str, s: &SweepResult) -> Result<f64> {
    m.map(|m| m.mean).ok_or_else(|| {
        Error::Config(format!(
            "{what} undefined in sweep ({}, {})",
            s.dataset_id, s.protected_attribute
        ))
    })
}

/// DP and CDD cells from a sweep that contains tau = 0 and `best_tau`.
pub fn cells_from_sweep(s: &SweepResult, best_tau: f64) -> Result<Vec<CellTriple>> {
    let at = |tau: f64| {
        s.at_tau(tau).ok_or_else(|| {
            Error::Config(format!(
                "sweep ({}, {}) has no tau = {tau}",
                s.dataset_id, s.protected_attribute
            ))
        })
    };
    let (zero, best) = (at(0.0)?, at(best_tau)?);
    let cell = |metric, test, tau0, taubest| {
        CellTriple::new(&s.dataset_id, &s.protected_attribute, metric, test, tau0, taubest)
    };
    Ok(vec![
        cell(
            Metric::Dp,
            mean_of(s.truth_dp, "ground-truth DP", s)?,
            mean_of(zero.dp, "DP at tau 0", s)?,
            mean_of(best.dp, "DP at the selected tau", s)?,
        ),
        cell(
            Metric::Cdd,
            mean_of(s.truth_cdd_weighted, "ground-truth CDD", s)?,
            mean_of(zero.cdd_weighted, "CDD at tau 0", s)?,
            mean_of(best.cdd_weighted, "CDD at the selected tau", s)?,
        ),
    ])
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 640.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 450.0;

fn px(tau: f64) -> f64 {
    LEFT + tau.clamp(0.0, 1.0) * (RIGHT - LEFT)
}

fn py(v: f64) -> f64 {
    BOTTOM - v.clamp(0.0, 1.0) * (BOTTOM - TOP)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn plot_file_name(s: &SweepResult) -> String {
    format!("{}_{}.svg", s.dataset_id, s.protected_attribute)
}

/// Standalone SVG: mean DP, CDD and accuracy against tau with shaded
/// one-standard-deviation bands.
pub fn render_svg(s: &SweepResult) -> String {
    let series: [(&str, &str, fn(&crate::harness::TauAggregate) -> Option<MeanStd>); 3] = [
        ("DP", "#1f77b4", |a| a.dp),
        ("CDD", "#ff7f0e", |a| a.cdd_weighted),
        ("Accuracy", "#2ca02c", |a| a.accuracy),
    ];
    let mut points: Vec<(f64, &crate::harness::TauAggregate)> =
        s.per_tau.iter().map(|a| (a.tau, a)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        escape(&format!("{} & {}", s.dataset_id, s.protected_attribute))
    );

    // grid and ticks
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let (x, y) = (px(v), py(v));
        let _ = writeln!(
            o,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{RIGHT}" y2="{y:.2}" stroke="#dddddd"/>"##
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            o,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#,
            BOTTOM + 18.0
        );
    }
    let _ = writeln!(
        o,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">τ</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 38.0
    );

    for (name, color, get) in &series {
        let vals: Vec<(f64, MeanStd)> = points.iter().filter_map(|(t, a)| get(a).map(|m| (*t, m))).collect();
        let upper = vals.iter().map(|(t, m)| (px(*t), py(m.mean + m.stddev)));
        let lower = vals.iter().rev().map(|(t, m)| (px(*t), py(m.mean - m.stddev)));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let line: Vec<String> = vals.iter().map(|(t, m)| format!("{:.2},{:.2}", px(*t), py(m.mean))).collect();
        let _ = writeln!(
            o,
            r#"<g class="series" data-name="{name}"><polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/><polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            band.join(" "),
            line.join(" ")
        );
        for (t, m) in &vals {
            let _ = writeln!(
                o,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(*t),
                py(m.mean)
            );
        }
        o.push_str("</g>\n");
    }

    for (i, (name, color, _)) in series.iter().enumerate() {
        let y = TOP + 10.0 + 22.0 * i as f64;
        let _ = writeln!(
            o,
            r#"<rect x="{}" y="{y:.2}" width="18" height="10" fill="{color}"/><text x="{}" y="{:.2}">{name}</text>"#,
            RIGHT + 20.0,
            RIGHT + 44.0,
            y + 10.0
        );
    }
    o.push_str("</svg>\n");
    o
}

/// Writes [`render_svg`] to `path`.
pub fn emit_plot(s: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    if s.per_tau.is_empty() {
        return Err(Error::Config("sweep has no tau values".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, render_svg(s)).map_err(|e| Error::io(path, e))
}
