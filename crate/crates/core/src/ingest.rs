//! Raw table loading, declarative recipes, and stratified splitting.
//!
//! A [`Recipe`] names the label, protected and explanatory columns of a raw
//! CSV table together with the feature columns a scorer may use. Applying it
//! yields an immutable [`Dataset`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Value of the binary protected attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Privileged,
    Unprivileged,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Privileged, Group::Unprivileged];

    pub fn other(self) -> Group {
        match self {
            Group::Privileged => Group::Unprivileged,
            Group::Unprivileged => Group::Privileged,
        }
    }
}

/// Binary outcome; `Favorable` is the `+` class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "+")]
    Favorable,
    #[serde(rename = "-")]
    Unfavorable,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Favorable, Outcome::Unfavorable];

    pub fn is_favorable(self) -> bool {
        self == Outcome::Favorable
    }

    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Favorable => Outcome::Unfavorable,
            Outcome::Unfavorable => Outcome::Favorable,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Favorable => "+",
            Outcome::Unfavorable => "-",
        })
    }
}

/// Text table exactly as read from disk, cells trimmed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTable {
    column_names: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let width = column_names.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Format(format!(
                "row {} has {} cells, expected {}",
                i + 1,
                row.len(),
                width
            )));
        }
        Ok(RawTable { column_names, rows })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Index of the first column with this name. Duplicate headers occur in
    /// real files (COMPAS repeats `priors_count`), first one wins.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    /// Replaces the column names, e.g. for header-less files.
    pub fn with_column_names(self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.column_names.len() {
            return Err(Error::Format(format!(
                "{} column names given for a table of width {}",
                names.len(),
                self.column_names.len()
            )));
        }
        Ok(RawTable {
            column_names: names,
            rows: self.rows,
        })
    }

    /// Values of one column, in row order.
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }
}

/// Reads a comma-separated, double-quoted UTF-8 file.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, has_header)
}

pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (line, rec) in records.by_ref().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("record {}: {e}", line + 1)))?;
        // A lone empty field is a blank line (trailing newlines in adult.data).
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        if has_header && header.is_none() {
            header = Some(cells);
            continue;
        }
        if let Some(first) = rows.first().map(Vec::len).or(header.as_ref().map(Vec::len)) {
            if cells.len() != first {
                return Err(Error::Format(format!(
                    "record {} has {} cells, expected {}",
                    line + 1,
                    cells.len(),
                    first
                )));
            }
        }
        rows.push(cells);
    }
    let names = match header {
        Some(h) => h,
        None => {
            let width = rows.first().map_or(0, Vec::len);
            (0..width).map(|i| format!("c{i}")).collect()
        }
    };
    RawTable::new(names, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub name: String,
    pub favorable_values: BTreeSet<String>,
    /// When given, values in neither set are a mapping error instead of
    /// silently counting as unfavorable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unfavorable_values: Option<BTreeSet<String>>,
}

/// Wildcard for `unprivileged_values`: any other non-missing value.
pub const ANY_OTHER: &str = "*";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectedSpec {
    pub name: String,
    pub privileged_values: BTreeSet<String>,
    pub unprivileged_values: BTreeSet<String>,
    /// Filters that only apply when this attribute is the protected one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub row_filters: Vec<RowFilter>,
    /// Expected row count; a deviation above 1% is flagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rows: Option<usize>,
}

impl ProtectedSpec {
    fn map(&self, raw: &str) -> Option<Group> {
        if self.privileged_values.contains(raw) {
            Some(Group::Privileged)
        } else if self.unprivileged_values.contains(raw)
            || self.unprivileged_values.contains(ANY_OTHER)
        {
            Some(Group::Unprivileged)
        } else {
            None
        }
    }
}

/// Half-open numeric bin `[lo, hi)`; `None` bounds are unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Bin {
    pub fn new(label: impl Into<String>, lo: Option<f64>, hi: Option<f64>) -> Self {
        Bin {
            label: label.into(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo.is_none_or(|lo| value >= lo) && self.hi.is_none_or(|hi| value < hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSet {
    pub label: String,
    pub values: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinSpec {
    Range(Bin),
    Values(ValueSet),
}

impl BinSpec {
    pub fn label(&self) -> &str {
        match self {
            BinSpec::Range(b) => &b.label,
            BinSpec::Values(v) => &v.label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanatorySpec {
    pub name: String,
    /// Empty means raw values are the strata.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bins: Vec<BinSpec>,
}

impl ExplanatorySpec {
    fn ranges(&self) -> Option<Vec<Bin>> {
        self.bins
            .iter()
            .map(|b| match b {
                BinSpec::Range(r) => Some(r.clone()),
                BinSpec::Values(_) => None,
            })
            .collect()
    }

    fn stratum_of(&self, raw: &str) -> Result<String> {
        if self.bins.is_empty() {
            return Ok(raw.to_string());
        }
        if let Some(ranges) = self.ranges() {
            let value: f64 = raw.parse().map_err(|_| Error::Mapping {
                column: self.name.clone(),
                value: raw.to_string(),
            })?;
            return discretize(value, &ranges).map(str::to_string);
        }
        self.bins
            .iter()
            .find_map(|b| match b {
                BinSpec::Values(v) if v.values.contains(raw) => Some(v.label.clone()),
                _ => None,
            })
            .ok_or_else(|| Error::Mapping {
                column: self.name.clone(),
                value: raw.to_string(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    pub allowed_values: BTreeSet<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    DropRow,
    OwnCategory,
}

fn default_true() -> bool {
    true
}

fn default_missing_values() -> BTreeSet<String> {
    ["", "?", "NA"].iter().map(|s| s.to_string()).collect()
}

/// Declarative preprocessing of one raw table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub id: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    pub label_column: LabelSpec,
    #[serde(deserialize_with = "one_or_many", serialize_with = "ser_one_or_many")]
    pub protected_column: Vec<ProtectedSpec>,
    #[serde(deserialize_with = "one_or_many", serialize_with = "ser_one_or_many")]
    pub explanatory_column: Vec<ExplanatorySpec>,
    /// Adds the stratum as one-hot features.
    #[serde(default)]
    pub include_explanatory: bool,
    pub feature_columns: Vec<FeatureSpec>,
    #[serde(default)]
    pub row_filters: Vec<RowFilter>,
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_missing_values")]
    pub missing_values: BTreeSet<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(t) => vec![t],
        OneOrMany::Many(v) => v,
    })
}

fn ser_one_or_many<S, T>(v: &[T], s: S) -> std::result::Result<S::Ok, S::Error>
where
    S: Serializer,
    T: Serialize,
{
    match v {
        [one] => one.serialize(s),
        many => many.serialize(s),
    }
}

impl Recipe {
    pub fn from_json(text: &str) -> Result<Self> {
        let recipe: Recipe = serde_json::from_str(text)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_column.favorable_values.is_empty() {
            return Err(Error::Recipe("label favorable_values is empty".into()));
        }
        if self.protected_column.is_empty() || self.explanatory_column.is_empty() {
            return Err(Error::Recipe(
                "protected_column and explanatory_column are required".into(),
            ));
        }
        for p in &self.protected_column {
            if let Some(v) = p.privileged_values.intersection(&p.unprivileged_values).next() {
                return Err(Error::Recipe(format!(
                    "`{v}` is both privileged and unprivileged in `{}`",
                    p.name
                )));
            }
            if p.privileged_values.contains(ANY_OTHER) {
                return Err(Error::Recipe("wildcard only allowed for unprivileged".into()));
            }
        }
        for e in &self.explanatory_column {
            validate_bins(e)?;
        }
        Ok(())
    }

    /// Narrows a multi-attribute recipe to one protected and one explanatory
    /// column. `None` is accepted only when there is a single candidate.
    pub fn select(&self, protected: Option<&str>, explanatory: Option<&str>) -> Result<Recipe> {
        let protected = pick(&self.protected_column, protected, |p| &p.name, "protected")?;
        let explanatory = pick(&self.explanatory_column, explanatory, |e| &e.name, "explanatory")?;
        Ok(Recipe {
            protected_column: vec![protected],
            explanatory_column: vec![explanatory],
            ..self.clone()
        })
    }

    pub fn protected(&self) -> Result<&ProtectedSpec> {
        single(&self.protected_column, "protected")
    }

    pub fn explanatory(&self) -> Result<&ExplanatorySpec> {
        single(&self.explanatory_column, "explanatory")
    }

    /// Reads the CSV this recipe describes.
    pub fn load_table(&self, path: impl AsRef<Path>) -> Result<RawTable> {
        let raw = load_csv(path, self.has_header)?;
        match &self.column_names {
            Some(names) => raw.with_column_names(names.clone()),
            None => Ok(raw),
        }
    }

    fn is_missing(&self, cell: &str) -> bool {
        self.missing_values.contains(cell)
    }

    /// Rows surviving the row filters and the missing-value policy.
    pub fn filter_rows(&self, raw: &RawTable) -> Result<RawTable> {
        let protected = self.protected()?;
        let filters = self
            .row_filters
            .iter()
            .chain(&protected.row_filters)
            .map(|f| Ok((raw.column_index(&f.column)?, &f.allowed_values)))
            .collect::<Result<Vec<_>>>()?;

        let mut required = vec![
            raw.column_index(&self.label_column.name)?,
            raw.column_index(&protected.name)?,
            raw.column_index(&self.explanatory()?.name)?,
        ];
        for f in &self.feature_columns {
            let idx = raw.column_index(&f.name)?;
            if f.kind == FeatureKind::Numeric || self.missing_policy == MissingPolicy::DropRow {
                required.push(idx);
            }
        }

        let rows = raw
            .rows()
            .iter()
            .filter(|row| filters.iter().all(|(i, allowed)| allowed.contains(&row[*i])))
            .filter(|row| required.iter().all(|&i| !self.is_missing(&row[i])))
            .cloned()
            .collect();
        RawTable::new(raw.column_names().to_vec(), rows)
    }
}

fn pick<T: Clone>(
    items: &[T],
    wanted: Option<&str>,
    name: impl Fn(&T) -> &String,
    role: &str,
) -> Result<T> {
    match wanted {
        Some(w) => items
            .iter()
            .find(|i| name(i) == w)
            .cloned()
            .ok_or_else(|| Error::Recipe(format!("recipe has no {role} column `{w}`"))),
        None => single(items, role).cloned(),
    }
}

fn single<'a, T>(items: &'a [T], role: &str) -> Result<&'a T> {
    match items {
        [one] => Ok(one),
        _ => Err(Error::Recipe(format!(
            "recipe lists {} {role} columns; select one",
            items.len()
        ))),
    }
}

fn validate_bins(spec: &ExplanatorySpec) -> Result<()> {
    if spec.bins.is_empty() {
        return Ok(());
    }
    let mut labels = BTreeSet::new();
    for b in &spec.bins {
        if !labels.insert(b.label()) {
            return Err(Error::Recipe(format!("duplicate bin label `{}`", b.label())));
        }
    }
    match spec.ranges() {
        Some(ranges) => validate_ranges(&ranges),
        None => {
            if spec.bins.iter().any(|b| matches!(b, BinSpec::Range(_))) {
                return Err(Error::Recipe(format!(
                    "`{}` mixes numeric and value-set bins",
                    spec.name
                )));
            }
            let mut seen = BTreeSet::new();
            for b in &spec.bins {
                if let BinSpec::Values(v) = b {
                    for value in &v.values {
                        if !seen.insert(value) {
                            return Err(Error::Recipe(format!("value `{value}` in two bins")));
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

/// Ranges must be non-empty, ordered, and non-overlapping; only the first may
/// be unbounded below and only the last unbounded above.
pub fn validate_ranges(bins: &[Bin]) -> Result<()> {
    for (i, b) in bins.iter().enumerate() {
        if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Recipe(format!("bin `{}` is empty", b.label)));
            }
        }
        if b.lo.is_none() && i != 0 || b.hi.is_none() && i + 1 != bins.len() {
            return Err(Error::Recipe(format!("bin `{}` is unbounded mid-list", b.label)));
        }
    }
    for w in bins.windows(2) {
        match (w[0].hi, w[1].lo) {
            (Some(hi), Some(lo)) if hi <= lo => {}
            _ => {
                return Err(Error::Recipe(format!(
                    "bins `{}` and `{}` overlap or are out of order",
                    w[0].label, w[1].label
                )))
            }
        }
    }
    Ok(())
}

/// Label of the unique bin containing `value`.
pub fn discretize(value: f64, bins: &[Bin]) -> Result<&str> {
    bins.iter()
        .find(|b| b.contains(value))
        .map(|b| b.label.as_str())
        .ok_or(Error::Bin(value))
}

/// How a feature column should be treated by scalers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Indicator,
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::LengthMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        Ok(FeatureMatrix {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::LengthMismatch {
                    expected: n_cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0; a zero-width matrix has no data anyway
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            data,
            n_rows: idx.len(),
            n_cols: self.n_cols,
        }
    }
}

/// Encoded instances: features X, protected g, labels Y and strata R.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: FeatureMatrix,
    feature_names: Vec<String>,
    feature_kinds: Vec<ColumnKind>,
    protected: Vec<Group>,
    labels: Vec<Outcome>,
    explanatory: Vec<String>,
    provenance: String,
    protected_name: String,
    explanatory_name: String,
}

impl Dataset {
    pub fn new(
        features: FeatureMatrix,
        feature_names: Vec<String>,
        feature_kinds: Vec<ColumnKind>,
        protected: Vec<Group>,
        labels: Vec<Outcome>,
        explanatory: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let n = features.n_rows();
        for len in [protected.len(), labels.len(), explanatory.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        for len in [feature_names.len(), feature_kinds.len()] {
            if len != features.n_cols() {
                return Err(Error::LengthMismatch {
                    expected: features.n_cols(),
                    found: len,
                });
            }
        }
        Ok(Dataset {
            features,
            feature_names,
            feature_kinds,
            protected,
            labels,
            explanatory,
            provenance: provenance.into(),
            protected_name: "protected".into(),
            explanatory_name: "explanatory".into(),
        })
    }

    /// Names of the protected and explanatory source columns.
    pub fn with_attribute_names(
        mut self,
        protected: impl Into<String>,
        explanatory: impl Into<String>,
    ) -> Self {
        self.protected_name = protected.into();
        self.explanatory_name = explanatory.into();
        self
    }

    pub fn protected_name(&self) -> &str {
        &self.protected_name
    }

    pub fn explanatory_name(&self) -> &str {
        &self.explanatory_name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[ColumnKind] {
        &self.feature_kinds
    }

    pub fn protected(&self) -> &[Group] {
        &self.protected
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn explanatory(&self) -> &[String] {
        &self.explanatory
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Counts by (group, label); always sums to `len()`.
    pub fn group_label_counts(&self) -> BTreeMap<(Group, Outcome), usize> {
        let mut counts = BTreeMap::new();
        for g in Group::BOTH {
            for o in Outcome::BOTH {
                counts.insert((g, o), 0);
            }
        }
        for (&g, &o) in self.protected.iter().zip(&self.labels) {
            *counts.entry((g, o)).or_default() += 1;
        }
        counts
    }

    /// Both groups and both labels must be present for training or metrics.
    pub fn check_usable(&self) -> Result<()> {
        for g in Group::BOTH {
            if !self.protected.contains(&g) {
                return Err(Error::EmptyGroup(g));
            }
        }
        for o in Outcome::BOTH {
            if !self.labels.contains(&o) {
                return Err(Error::Degenerate(format!("no `{o}` labels")));
            }
        }
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            protected: idx.iter().map(|&i| self.protected[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            explanatory: idx.iter().map(|&i| self.explanatory[i].clone()).collect(),
            provenance: self.provenance.clone(),
            protected_name: self.protected_name.clone(),
            explanatory_name: self.explanatory_name.clone(),
        }
    }
}

/// Label given to the one-hot column of a categorical value.
fn onehot_name(column: &str, value: &str) -> String {
    format!("{column}={value}")
}

/// Maps a raw table to a [`Dataset`] following `recipe`, which must already
/// be narrowed to one protected and one explanatory column.
pub fn apply_recipe(raw: &RawTable, recipe: &Recipe) -> Result<Dataset> {
    recipe.validate()?;
    let protected = recipe.protected()?;
    let explanatory = recipe.explanatory()?;
    let table = recipe.filter_rows(raw)?;

    let label_idx = table.column_index(&recipe.label_column.name)?;
    let protected_idx = table.column_index(&protected.name)?;
    let explanatory_idx = table.column_index(&explanatory.name)?;

    let mut groups = Vec::with_capacity(table.n_rows());
    let mut labels = Vec::with_capacity(table.n_rows());
    let mut strata = Vec::with_capacity(table.n_rows());
    for row in table.rows() {
        let raw_g = &row[protected_idx];
        groups.push(protected.map(raw_g).ok_or_else(|| Error::Mapping {
            column: protected.name.clone(),
            value: raw_g.clone(),
        })?);

        let raw_y = &row[label_idx];
        let label = if recipe.label_column.favorable_values.contains(raw_y) {
            Outcome::Favorable
        } else {
            match &recipe.label_column.unfavorable_values {
                Some(set) if !set.contains(raw_y) => {
                    return Err(Error::Mapping {
                        column: recipe.label_column.name.clone(),
                        value: raw_y.clone(),
                    })
                }
                _ => Outcome::Unfavorable,
            }
        };
        labels.push(label);
        strata.push(explanatory.stratum_of(&row[explanatory_idx])?);
    }

    // Column layout: declared features in order, then optional stratum one-hots.
    enum Col {
        Numeric(usize),
        OneHot(usize, String),
        Stratum(String),
    }
    let mut cols = Vec::new();
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    for f in &recipe.feature_columns {
        let idx = table.column_index(&f.name)?;
        match f.kind {
            FeatureKind::Numeric => {
                cols.push(Col::Numeric(idx));
                names.push(f.name.clone());
                kinds.push(ColumnKind::Numeric);
            }
            FeatureKind::Categorical => {
                let levels: BTreeSet<&str> = table.rows().iter().map(|r| r[idx].as_str()).collect();
                for level in levels {
                    cols.push(Col::OneHot(idx, level.to_string()));
                    names.push(onehot_name(&f.name, level));
                    kinds.push(ColumnKind::Indicator);
                }
            }
        }
    }
    if recipe.include_explanatory {
        for level in stratum_order(explanatory, &strata) {
            names.push(onehot_name(&explanatory.name, &level));
            cols.push(Col::Stratum(level));
            kinds.push(ColumnKind::Indicator);
        }
    }

    let mut data = Vec::with_capacity(table.n_rows() * cols.len());
    let mut parsed: HashMap<usize, Vec<f64>> = HashMap::new();
    for col in &cols {
        if let Col::Numeric(idx) = col {
            let values = table
                .rows()
                .iter()
                .map(|r| {
                    r[*idx].parse::<f64>().map_err(|_| Error::Mapping {
                        column: table.column_names()[*idx].clone(),
                        value: r[*idx].clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            parsed.insert(*idx, values);
        }
    }
    for (i, row) in table.rows().iter().enumerate() {
        for col in &cols {
            data.push(match col {
                Col::Numeric(idx) => parsed[idx][i],
                Col::OneHot(idx, level) => f64::from(u8::from(&row[*idx] == level)),
                Col::Stratum(level) => f64::from(u8::from(&strata[i] == level)),
            });
        }
    }
    let features = FeatureMatrix::new(table.n_rows(), cols.len(), data)?;
    Ok(
        Dataset::new(features, names, kinds, groups, labels, strata, recipe.id.clone())?
            .with_attribute_names(&protected.name, &explanatory.name),
    )
}

/// Strata in declared bin order, or sorted when raw values are used.
pub fn stratum_order(spec: &ExplanatorySpec, observed: &[String]) -> Vec<String> {
    let present: BTreeSet<&str> = observed.iter().map(String::as_str).collect();
    if spec.bins.is_empty() {
        present.into_iter().map(str::to_string).collect()
    } else {
        spec.bins
            .iter()
            .map(BinSpec::label)
            .filter(|l| present.contains(l))
            .map(str::to_string)
            .collect()
    }
}

/// Per-class stratified partition of row indices.
///
/// Each class contributes `floor(fraction * n_class)` training rows; the
/// remaining `round(fraction * n) - sum(floors)` slots go to the classes with
/// the largest fractional remainders, ties resolved favorable-first. Both
/// returned index lists are ascending.
pub fn stratified_split_indices(
    labels: &[Outcome],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let by_class: Vec<Vec<usize>> = Outcome::BOTH
        .iter()
        .map(|&o| (0..labels.len()).filter(|&i| labels[i] == o).collect())
        .collect();
    for (o, members) in Outcome::BOTH.iter().zip(&by_class) {
        if members.len() < 2 {
            return Err(Error::Degenerate(format!(
                "class `{o}` has {} instance(s); need at least 2",
                members.len()
            )));
        }
    }

    // Guard against 0.7 * 70 = 48.999...
    const SLACK: f64 = 1e-9;
    let exact: Vec<f64> = by_class
        .iter()
        .map(|m| train_fraction * m.len() as f64)
        .collect();
    let mut take: Vec<usize> = exact.iter().map(|x| (x + SLACK).floor() as usize).collect();
    let total = (train_fraction * labels.len() as f64 + 0.5 + SLACK).floor() as usize;
    let mut leftover = total.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - take[a] as f64;
        let rb = exact[b] - take[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (members, k) in by_class.into_iter().zip(take) {
        let mut shuffled = members;
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..k]);
        test.extend_from_slice(&shuffled[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(ds.labels(), train_fraction, seed)?;
    Ok((ds.select(&train), ds.select(&test)))
}

/// Majority-class rate, the accuracy a useful classifier must beat.
pub fn baseline_rate(ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Degenerate("empty dataset".into()));
    }
    let fav = ds.labels().iter().filter(|o| o.is_favorable()).count();
    let n = ds.len();
    Ok(fav.max(n - fav) as f64 / n as f64)
}

/// Returns a warning when `n` deviates from the recipe's expected row count
/// by more than 1%.
pub fn expected_rows_warning(recipe: &Recipe, n: usize) -> Option<String> {
    let expected = recipe.protected().ok()?.expected_rows?;
    let rel = (n as f64 - expected as f64).abs() / expected as f64;
    (rel > 0.01).then(|| {
        format!(
            "recipe `{}` produced {n} rows, {:.1}% away from the expected {expected}",
            recipe.id,
            rel * 100.0
        )
    })
}
