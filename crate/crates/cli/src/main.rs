//! `fairaudit`: ground-truth audits, tau sweeps, and comparison tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fairaudit::harness::{self, EvalPlan, MeanStd, SweepResult};
use fairaudit::ingest::{apply_recipe, baseline_rate, expected_rows_warning, Dataset, Recipe};
use fairaudit::metrics::{full_report, FairnessReport, OutcomeVector};
use fairaudit::par::Execution;
use fairaudit::report::{self, emit_table, plot_file_name};
use fairaudit::stats::{chi_square, contingency_table, ChiSquareResult};
use fairaudit::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_MISSING: u8 = 4;

#[derive(Parser)]
#[command(name = "fairaudit", version, about = "Fairness audits with DP and CDD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-truth metrics, baseline and chi-square diagnostics.
    Audit(AuditArgs),
    /// Train constrained models over a tau grid on repeated splits.
    Sweep(SweepArgs),
    /// Assemble a categorized comparison table from sweep outputs.
    Table(TableArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Raw CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Recipe JSON describing the columns.
    #[arg(long)]
    recipe: PathBuf,
    /// Protected column, when the recipe lists several.
    #[arg(long)]
    protected: Option<String>,
    /// Explanatory column, when the recipe lists several.
    #[arg(long)]
    explanatory: Option<String>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma list (0,0.5,0.9) or range start:end:step.
    #[arg(long, default_value = "0:1:0.1")]
    taus: String,
    /// Keep the closest model when a tau cannot be met.
    #[arg(long)]
    best_effort: bool,
    /// Run repetitions on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Sweep output directories, each holding sweep.json.
    #[arg(required = true)]
    sweeps: Vec<PathBuf>,
    /// Selected tau: a number for every sweep, or dataset:protected=tau
    /// entries (comma separated or repeated).
    #[arg(long = "best-tau", required = true, value_delimiter = ',')]
    best_tau: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    recipe_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    protected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanatory: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    taus: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_effort: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sweep_dirs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    best_tau: BTreeMap<String, f64>,
    output_dir: String,
    tool_version: String,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    fn missing(e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_MISSING,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::input(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit(a) => cmd_audit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Table(a) => cmd_table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::input(format!("writing {}: {e}", display(path))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(Failure::input)?;
    write_file(path, &(text + "\n"))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("creating {}: {e}", display(dir))))
}

struct Loaded {
    recipe: Recipe,
    dataset: Dataset,
    /// Filtered raw cells of the explanatory column, before binning.
    raw_explanatory: Vec<String>,
}

fn load(a: &DataArgs) -> Result<Loaded, Failure> {
    let recipe = Recipe::load(&a.recipe)?.select(a.protected.as_deref(), a.explanatory.as_deref())?;
    let raw = recipe.load_table(&a.data)?;
    let filtered = recipe.filter_rows(&raw)?;
    let dataset = apply_recipe(&raw, &recipe)?;
    let raw_explanatory = filtered
        .column(&recipe.explanatory()?.name)?
        .into_iter()
        .map(str::to_string)
        .collect();
    if let Some(w) = expected_rows_warning(&recipe, dataset.len()) {
        eprintln!("warning: {w}");
    }
    Ok(Loaded {
        recipe,
        dataset,
        raw_explanatory,
    })
}

fn base_manifest(command: &str, a: &DataArgs, l: &Loaded) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        recipe_path: Some(display(&a.recipe)),
        dataset_path: Some(display(&a.data)),
        protected: Some(l.dataset.protected_name().to_string()),
        explanatory: Some(l.dataset.explanatory_name().to_string()),
        repeats: Some(a.repeats),
        seed: Some(a.seed),
        output_dir: display(&a.out),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        ..RunManifest::default()
    }
}

#[derive(Serialize)]
struct ChiSquareEntry {
    variables: String,
    result: ChiSquareResult,
}

#[derive(Serialize)]
struct AuditDocument {
    dataset: String,
    protected: String,
    explanatory: String,
    n_rows: usize,
    baseline_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    row_count_warning: Option<String>,
    /// Metrics of the labels over all rows.
    full_data: FairnessReport,
    /// Labels of the test parts of the sweep splits.
    test_split_dp: Option<MeanStd>,
    test_split_cdd_weighted: Option<MeanStd>,
    test_splits: Vec<FairnessReport>,
    chi_square: Vec<ChiSquareEntry>,
}

fn cmd_audit(a: AuditArgs) -> CmdResult {
    let a = a.data;
    let l = load(&a)?;
    let ds = &l.dataset;
    let labels: Vec<String> = ds.labels().iter().map(|o| o.to_string()).collect();
    let truth = OutcomeVector::ground_truth(ds.labels().to_vec())?;
    let full_data = full_report(&truth, ds.protected(), ds.explanatory(), None)?;

    let plan = EvalPlan {
        repeats: a.repeats,
        base_seed: a.seed,
        ..EvalPlan::default()
    };
    let test_splits = harness::ground_truth_splits(ds, &plan)?;

    let explanatory = ds.explanatory_name().to_string();
    let label = l.recipe.label_column.name.clone();
    let protected: Vec<String> = ds.protected().iter().map(|g| format!("{g:?}")).collect();
    let mut chi = vec![(format!("{explanatory} (strata) x {label}"), contingency_table(ds.explanatory(), &labels))];
    if !l.recipe.explanatory()?.bins.is_empty() {
        chi.push((format!("{explanatory} (raw) x {label}"), contingency_table(&l.raw_explanatory, &labels)));
    }
    chi.push((format!("{} x {label}", ds.protected_name()), contingency_table(&protected, &labels)));
    let mut entries = Vec::new();
    let mut text = String::new();
    for (variables, table) in chi {
        let result = match table.and_then(|t| chi_square(&t)) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: chi-square for {variables} skipped: {e}");
                continue;
            }
        };
        text.push_str(&format!("{variables}: {result}\n"));
        entries.push(ChiSquareEntry { variables, result });
    }

    let doc = AuditDocument {
        dataset: ds.provenance().to_string(),
        protected: ds.protected_name().to_string(),
        explanatory,
        n_rows: ds.len(),
        baseline_accuracy: baseline_rate(ds)?,
        row_count_warning: expected_rows_warning(&l.recipe, ds.len()),
        test_split_dp: MeanStd::of(&test_splits.iter().map(|r| r.dp).collect::<Vec<_>>()),
        test_split_cdd_weighted: MeanStd::of(
            &test_splits.iter().filter_map(|r| r.cdd_weighted).collect::<Vec<_>>(),
        ),
        full_data,
        test_splits,
        chi_square: entries,
    };

    create_dir(&a.out)?;
    write_json(&a.out.join("audit.json"), &doc)?;
    write_file(&a.out.join("chi_square.txt"), &text)?;
    write_json(&a.out.join("manifest.json"), &base_manifest("audit", &a, &l))?;

    let fmt = |m: Option<MeanStd>| m.map_or("undefined".to_string(), |m| format!("{:.3} ± {:.3}", m.mean, m.stddev));
    println!("{} / {} ({} rows)", doc.dataset, doc.protected, doc.n_rows);
    println!("  baseline accuracy  {:.3}", doc.baseline_accuracy);
    println!("  DP  all rows {:.3}, test splits {}", doc.full_data.dp, fmt(doc.test_split_dp));
    println!(
        "  CDD all rows {}, test splits {}",
        doc.full_data.cdd_weighted.map_or("undefined".into(), |v| format!("{v:.3}")),
        fmt(doc.test_split_cdd_weighted)
    );
    print!("{text}");
    Ok(())
}

fn round_tau(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn parse_number(s: &str) -> Result<f64, Failure> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Failure::input(format!("`{s}` is not a number")))
}

/// `0,0.5,0.9` or `start:end:step` (end inclusive).
fn parse_taus(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let taus = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (parse_number(start)?, parse_number(end)?, parse_number(step)?);
            if !(step > 0.0) || end < start {
                return Err(Failure::input(format!("bad tau range `{spec}`")));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| round_tau(start + k as f64 * step)).collect()
        }
        [list] => list.split(',').map(parse_number).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(Failure::input(format!("bad tau list `{spec}`"))),
    };
    if taus.is_empty() || taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Failure::input(format!("taus must lie in [0, 1]: `{spec}`")));
    }
    Ok(taus)
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let taus = parse_taus(&a.taus)?;
    let d = &a.data;
    let l = load(d)?;
    let plan = EvalPlan {
        repeats: d.repeats,
        base_seed: d.seed,
        best_effort: a.best_effort,
        execution: if a.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        ..EvalPlan::default()
    };
    let sweep = harness::tau_sweep(&l.dataset, &taus, &plan)?;

    create_dir(&d.out)?;
    write_file(&d.out.join("sweep.json"), &(sweep.to_json()? + "\n"))?;
    write_file(&d.out.join("sweep.csv"), &sweep.to_long_csv())?;
    report::emit_plot(&sweep, d.out.join(plot_file_name(&sweep)))?;
    let manifest = RunManifest {
        taus: taus.clone(),
        best_effort: Some(a.best_effort),
        ..base_manifest("sweep", d, &l)
    };
    write_json(&d.out.join("manifest.json"), &manifest)?;

    println!("{} / {}", sweep.dataset_id, sweep.protected_attribute);
    println!("  tau    DP              CDD             accuracy        runs");
    let fmt = |m: Option<MeanStd>| m.map_or(format!("{:15}", "-"), |m| format!("{:.3} ± {:.3}  ", m.mean, m.stddev));
    for agg in &sweep.per_tau {
        println!(
            "  {:<5}  {}{}{}{}/{}",
            agg.tau,
            fmt(agg.dp),
            fmt(agg.cdd_weighted),
            fmt(agg.accuracy),
            agg.n_runs,
            sweep.n_repeats
        );
    }
    for f in &sweep.failures {
        eprintln!("warning: tau {} repeat {}: {}", f.tau, f.repeat, f.message);
    }
    if sweep.has_infeasible() && !a.best_effort {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            message: "some repetitions could not meet their tau; rerun with --best-effort to keep the closest models".into(),
        });
    }
    Ok(())
}

/// Default tau plus per-(dataset, protected) overrides.
fn parse_best_tau(entries: &[String]) -> Result<(Option<f64>, BTreeMap<String, f64>), Failure> {
    let mut default = None;
    let mut keyed = BTreeMap::new();
    for e in entries.iter().map(|e| e.trim()).filter(|e| !e.is_empty()) {
        match e.split_once('=') {
            Some((key, tau)) => {
                if !key.contains(':') {
                    return Err(Failure::input(format!("best-tau key `{key}` must be dataset:protected")));
                }
                keyed.insert(key.trim().to_string(), parse_number(tau)?);
            }
            None => default = Some(parse_number(e)?),
        }
    }
    Ok((default, keyed))
}

fn cmd_table(a: TableArgs) -> CmdResult {
    let (default, keyed) = parse_best_tau(&a.best_tau)?;
    let mut cells = Vec::new();
    let mut used = BTreeMap::new();
    for dir in &a.sweeps {
        let path = dir.join("sweep.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::missing(format!("reading {}: {e}", display(&path))))?;
        let sweep = SweepResult::from_json(&text)
            .map_err(|e| Failure::missing(format!("malformed {}: {e}", display(&path))))?;
        let key = format!("{}:{}", sweep.dataset_id, sweep.protected_attribute);
        let tau = keyed.get(&key).copied().or(default).ok_or_else(|| {
            Failure::input(format!("no --best-tau given for {key}"))
        })?;
        cells.extend(report::cells_from_sweep(&sweep, tau).map_err(Failure::missing)?);
        used.insert(key, tau);
    }
    let doc = emit_table(&cells)?;

    create_dir(&a.out)?;
    write_file(&a.out.join("table.csv"), &doc.to_csv())?;
    write_file(&a.out.join("table.json"), &(doc.to_json()? + "\n"))?;
    let text = doc.to_text();
    write_file(&a.out.join("table.txt"), &text)?;
    let manifest = RunManifest {
        command: "table".into(),
        sweep_dirs: a.sweeps.iter().map(|p| display(p)).collect(),
        best_tau: used,
        output_dir: display(&a.out),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        ..RunManifest::default()
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    print!("{text}");
    Ok(())
}
