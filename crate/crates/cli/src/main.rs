//! `mopol`: synthetic data, scores, Pareto frontiers and final policy trees
//! from the command line.
//!
//! Exit status is 0 on success, 2 when inputs fail validation, 3 when a
//! frontier run stopped before its initialization design was evaluated, and 1
//! for any other failure.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mopol::data::{aipw_scores, load_dataset, synth_generate, Dataset, NuisanceEstimates, Schema, ScoreMatrix, SynthSpec, DEFAULT_PROPENSITY_FLOOR};
use mopol::driver::{evaluate_rules, fit_final, run_mopol, write_value_curve, Budget, FinalReport, FinalSpec, MopolConfig, SeMode, SplitMode};
use mopol::pareto::{FrontierReport, WeightVector};
use mopol::policytree::{FitterKind, PolicyTree, TreeFitConfig};
use mopol::MopolError;

#[derive(Parser)]
#[command(name = "mopol", version, about = "Multi-objective policy learning with policy trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset with its oracle nuisances and scores.
    Synth(SynthArgs),
    /// Compute AIPW scores from a dataset and nuisance estimates.
    Scores(ScoresArgs),
    /// Map the Pareto frontier over outcome weights.
    Frontier(FrontierArgs),
    /// Fit one tree on a training split and value it on both partitions.
    Final(FinalArgs),
    /// Value a given tree on a dataset.
    Eval(EvalArgs),
    /// Summarize trace CSVs from one or more runs into a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec (JSON); the built-in two-outcome trade-off design when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sample size for the built-in design.
    #[arg(long, default_value_t = 2000, conflicts_with = "spec")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Column-role schema (JSON).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct ScoreSource {
    /// Precomputed score CSV (`row,treatment,outcome,score`).
    #[arg(long, conflicts_with = "nuisance")]
    scores: Option<PathBuf>,
    /// Outcome-model and propensity CSVs, in that order.
    #[arg(long, num_args = 2, value_names = ["MHAT", "EHAT"])]
    nuisance: Option<Vec<PathBuf>>,
    /// Rows with a propensity at or below this value are rejected.
    #[arg(long, default_value_t = DEFAULT_PROPENSITY_FLOOR)]
    propensity_floor: f64,
}

#[derive(Args)]
struct ScoresArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, num_args = 2, value_names = ["MHAT", "EHAT"], required = true)]
    nuisance: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PROPENSITY_FLOOR)]
    propensity_floor: f64,
    /// Output score CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: ScoreSource,
    /// Run config (JSON, or TOML by extension). Flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    fitter: Option<FitterKind>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, conflicts_with = "budget_iters")]
    budget_seconds: Option<f64>,
    #[arg(long)]
    budget_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    se_mode: Option<SeMode>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FinalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: ScoreSource,
    /// Outcome weights, comma separated. A single number `l` with two outcomes means `(l, 1 - l)`.
    #[arg(long)]
    lambda: String,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value = "greedy")]
    fitter: FitterKind,
    #[arg(long, value_enum, default_value = "shuffle")]
    split: SplitArg,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Shuffle,
    Head,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Part {
    All,
    Train,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: ScoreSource,
    /// Tree file: JSON, or the indented text rules written by `final`.
    #[arg(long)]
    tree: PathBuf,
    /// Final report whose training rows define the partition.
    #[arg(long, required_if_eq_any = [("part", "train"), ("part", "test")])]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    part: Part,
    /// Output JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSV files, or directories searched recursively for `trace.csv`.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Other(String),
}

impl From<MopolError> for Failure {
    fn from(e: MopolError) -> Self {
        match e {
            MopolError::Io { .. } | MopolError::Factorization { .. } => Failure::Other(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

type CmdResult<T = ExitCode> = Result<T, Failure>;

fn create_dir(path: &Path) -> CmdResult<()> {
    std::fs::create_dir_all(path).map_err(|e| Failure::Invalid(format!("cannot create output directory {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::Other(format!("cannot write {}: {e}", path.display())))
}

fn load_inputs(data: &DataArgs, source: &ScoreSource) -> CmdResult<(Dataset, ScoreMatrix)> {
    let schema = Schema::from_path(&data.schema)?;
    let ds = load_dataset(&data.data, &schema)?;
    for w in &ds.provenance.warnings {
        log::warn!("{w}");
    }
    let scores = match (&source.scores, &source.nuisance) {
        (Some(path), None) => ScoreMatrix::read_csv(path)?,
        (None, Some(files)) => {
            let nuisance = NuisanceEstimates::read_csv(&files[0], &files[1])?;
            aipw_scores(&ds, &nuisance, source.propensity_floor)?
        }
        _ => return Err(Failure::Invalid("exactly one of --scores and --nuisance is required".into())),
    };
    if scores.n() != ds.n() || scores.n_treatments() != ds.n_treatments || scores.n_outcomes() != ds.n_outcomes() {
        return Err(Failure::Invalid(format!(
            "scores have shape ({}, {}, {}) but the dataset has {} rows, {} treatments and {} outcomes",
            scores.n(),
            scores.n_treatments(),
            scores.n_outcomes(),
            ds.n(),
            ds.n_treatments,
            ds.n_outcomes()
        )));
    }
    Ok((ds, scores))
}

fn parse_lambda(text: &str, n_outcomes: usize) -> CmdResult<WeightVector> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Invalid(format!("--lambda '{text}': {e}")))?;
    let weights = match parts.as_slice() {
        [l] if n_outcomes == 2 => vec![*l, 1.0 - *l],
        _ => parts,
    };
    if weights.len() != n_outcomes {
        return Err(Failure::Invalid(format!(
            "--lambda has {} weights for {n_outcomes} outcomes",
            weights.len()
        )));
    }
    Ok(WeightVector::new(weights)?)
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let spec = match &a.spec {
        Some(p) => SynthSpec::from_path(p)?,
        None => SynthSpec::tradeoff(a.n),
    };
    spec.validate()?;
    create_dir(&a.out)?;
    let s = synth_generate(&spec, a.seed)?;
    s.data.write_csv(a.out.join("data.csv"))?;
    s.data.schema().write(a.out.join("schema.json"))?;
    s.nuisance.write_csv(a.out.join("mhat.csv"), a.out.join("ehat.csv"))?;
    s.scores.write_csv(a.out.join("scores.csv"))?;
    println!("wrote {} rows to {}", s.data.n(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_scores(a: ScoresArgs) -> CmdResult {
    let source = ScoreSource {
        scores: None,
        nuisance: Some(a.nuisance),
        propensity_floor: a.propensity_floor,
    };
    let (_, scores) = load_inputs(&a.data, &source)?;
    scores.write_csv(&a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn frontier_config(a: &FrontierArgs) -> CmdResult<MopolConfig> {
    let mut cfg = match &a.config {
        Some(p) => MopolConfig::from_path(p)?,
        None => {
            let budget = match (a.budget_iters, a.budget_seconds) {
                (Some(n), None) => Budget::Iterations(n),
                (None, Some(s)) => Budget::Seconds(s),
                _ => {
                    return Err(Failure::Invalid(
                        "without --config, one of --budget-iters and --budget-seconds is required".into(),
                    ))
                }
            };
            MopolConfig::new(TreeFitConfig::new(FitterKind::Greedy, 2), budget)
        }
    };
    if let Some(d) = a.depth {
        cfg.tree.depth = d;
    }
    if let Some(k) = a.fitter {
        cfg.tree.kind = k;
    }
    if let Some(b) = a.replicates {
        cfg.replicates = b;
    }
    if let Some(n) = a.budget_iters {
        cfg.budget_iterations = Some(n);
        cfg.budget_seconds = None;
    }
    if let Some(s) = a.budget_seconds {
        cfg.budget_seconds = Some(s);
        cfg.budget_iterations = None;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.se_mode {
        cfg.se_mode = m;
    }
    Ok(cfg)
}

fn cmd_frontier(a: FrontierArgs) -> CmdResult {
    let cfg = frontier_config(&a)?;
    let (ds, scores) = load_inputs(&a.data, &a.source)?;
    cfg.validate(ds.p())?;
    create_dir(&a.out)?;
    let run = run_mopol(ds.covariates.view(), &scores, &cfg)?;
    let report = FrontierReport::new(&run.pareto, run.reference.clone(), ds.outcome_names.clone());
    report.write_json(a.out.join("frontier.json"))?;
    report.write_csv(a.out.join("frontier.csv"))?;
    run.trace.write_csv(a.out.join("trace.csv"))?;
    write_value_curve(&run.evaluations, &ds.outcome_names, a.out.join("value_curve.csv"))?;
    println!(
        "{} evaluations, {} on the frontier, hypervolume {}",
        run.evaluations.len(),
        run.pareto.len(),
        report.hypervolume
    );
    if run.partial {
        log::warn!("budget exhausted before the initialization design was evaluated");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_final(a: FinalArgs) -> CmdResult {
    let (ds, scores) = load_inputs(&a.data, &a.source)?;
    let lambda = parse_lambda(&a.lambda, ds.n_outcomes())?;
    let tree = TreeFitConfig::new(a.fitter, a.depth);
    tree.validate(ds.p())?;
    let spec = FinalSpec {
        lambda,
        tree,
        train_fraction: a.train_fraction,
        split: match a.split {
            SplitArg::Shuffle => SplitMode::Shuffle,
            SplitArg::Head => SplitMode::Head,
        },
        seed: a.seed,
    };
    create_dir(&a.out)?;
    let report = fit_final(
        ds.covariates.view(),
        &scores,
        Some(&ds.treatments),
        &spec,
        &ds.covariate_names,
        &ds.outcome_names,
    )?;
    report.write_json(a.out.join("report.json"))?;
    write_text(&a.out.join("tree.txt"), &report.tree_text)?;
    write_text(&a.out.join("tree.dot"), &report.tree.render_dot(&ds.covariate_names))?;
    write_text(&a.out.join("tree.json"), &(report.tree.to_json()? + "\n"))?;
    for (y, name) in ds.outcome_names.iter().enumerate() {
        println!("{name}: train {} test {}", report.train_values[y], report.test_values[y]);
    }
    Ok(ExitCode::SUCCESS)
}

fn read_tree(path: &Path, names: &[String]) -> CmdResult<PolicyTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let tree = if path.extension().is_some_and(|e| e == "json") {
        PolicyTree::from_json(&text)?
    } else {
        PolicyTree::parse_text(&text, names)?
    };
    Ok(tree)
}

#[derive(serde::Serialize)]
struct EvalOutput<'a> {
    outcome_names: &'a [String],
    n: usize,
    values: Vec<f64>,
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let (ds, scores) = load_inputs(&a.data, &a.source)?;
    let tree = read_tree(&a.tree, &ds.covariate_names)?;
    let rows: Vec<usize> = match (a.part, &a.report) {
        (Part::All, _) => (0..ds.n()).collect(),
        (part, Some(path)) => {
            let r = FinalReport::read_json(path)?;
            if r.n_train + r.n_test != ds.n() {
                return Err(Failure::Invalid(format!(
                    "report covers {} rows but the dataset has {}",
                    r.n_train + r.n_test,
                    ds.n()
                )));
            }
            let train = r.train_rows;
            if train.iter().any(|&i| i >= ds.n()) {
                return Err(Failure::Invalid("report lists a training row outside the dataset".into()));
            }
            match part {
                Part::Train => train,
                _ => {
                    let mut is_train = vec![false; ds.n()];
                    for &i in &train {
                        is_train[i] = true;
                    }
                    (0..ds.n()).filter(|&i| !is_train[i]).collect()
                }
            }
        }
        (_, None) => return Err(Failure::Invalid("--part train/test needs --report".into())),
    };
    let x = ds.covariates.select(ndarray::Axis(0), &rows);
    let values = evaluate_rules(&tree, &scores.select_rows(&rows), x.view())?;
    let out = EvalOutput {
        outcome_names: &ds.outcome_names,
        n: rows.len(),
        values,
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| Failure::Other(e.to_string()))? + "\n";
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Scores(a) => cmd_scores(a),
        Command::Frontier(a) => cmd_frontier(a),
        Command::Final(a) => cmd_final(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => report::cmd_report(&a.paths, a.out.as_deref()),
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MOPOL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Invalid(format!("MOPOL_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(code) => code,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
