//! `stagewise` command line: run, ablate, synth, report and eval.
//!
//! Exit statuses are 0 on success, 1 for configuration errors (nothing was
//! computed) and 2 for runtime failures (partial artifacts are kept).

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use stagewise::datakit::{generate_synthetic_domain, SyntheticDomainSpec};
use stagewise::eval::{evaluate_ner, evaluate_qa, evaluate_qcls, MetricReport, QaPredictions};
use stagewise::pipeline::{
    expand_sweep, load_dataset, rebuild_index, run_many, scan_runs, validate_regimen, Dataset, DatasetRef, RegimenSpec,
    RunOptions, RunRecord, RunStatus, TaskKind,
};
use stagewise::report::{
    reference_aux_ladder, reference_budget_sweep, reference_grid, table_from_records, Layout, ReportTable,
};

use config::{read_strict, RunConfigFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "stagewise", version, about = "Sequential transfer-learning experiments on a tiny encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Grid,
    Sweep,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Grid => Layout::Grid,
            LayoutArg::Sweep => Layout::Sweep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// Regimen × domain grid.
    Grid,
    /// Auxiliary-task ladder on one domain.
    Ladder,
    /// QA fine-tuning budget sweep.
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Qa,
    Ner,
    Qcls,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one regimen or every cell of a grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 1)]
        decimals: usize,
    },
    /// Run one regimen per sweep cell and write a summary table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 4)]
        decimals: usize,
    },
    /// Generate a synthetic domain bundle from a generator spec.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render the results table of a results directory.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "grid")]
        layout: LayoutArg,
        #[arg(long)]
        decimals: Option<usize>,
        /// Render a built-in table of published reference results instead.
        #[arg(long, value_enum)]
        fixture: Option<Fixture>,
    },
    /// Score a predictions file against a dataset.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        /// A dataset path, or `<bundle dir>#<member>`.
        #[arg(long)]
        dataset: String,
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
}

/// Parses `args` (program name first), executes, and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("stagewise: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            out,
            seed,
            workers,
            decimals,
        } => cmd_run(&config, out, seed, workers, decimals),
        Command::Ablate {
            config,
            out,
            seed,
            workers,
            decimals,
        } => cmd_ablate(&config, out, seed, workers, decimals),
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed).map(|_| ()),
        Command::Report {
            out,
            layout,
            decimals,
            fixture,
        } => {
            let table = match (fixture, &out) {
                (Some(f), _) => fixture_table(f),
                (None, Some(dir)) => cmd_report(dir, layout.into())?,
                (None, None) => return Err(CliError::Config("report needs --out or --fixture".into())),
            };
            let layout: Layout = layout.into();
            println!("{}", table.to_markdown(decimals.unwrap_or(layout.default_decimals())));
            if let (None, Some(dir)) = (fixture, &out) {
                write_table(dir, "report", &table, decimals.unwrap_or(layout.default_decimals()))?;
            }
            Ok(())
        }
        Command::Eval {
            predictions,
            dataset,
            task,
        } => {
            let report = cmd_eval(&predictions, &parse_dataset_ref(&dataset), task)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfigFile) -> PathBuf {
    flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn check_specs(specs: &[RegimenSpec]) -> Result<(), CliError> {
    for s in specs {
        let problems = validate_regimen(s);
        if !problems.is_empty() {
            return Err(CliError::Config(format!("regimen {:?}: {}", s.name, problems.join("; "))));
        }
    }
    Ok(())
}

/// Runs `specs` and returns their records in order. The first failure is
/// reported after every run has finished and the index is rebuilt.
fn execute_runs(specs: &[RegimenSpec], root: &Path, workers: usize, opts: RunOptions) -> Result<Vec<RunRecord>, CliError> {
    let results = run_many(specs, root, workers.max(1), opts);
    let mut records = Vec::new();
    let mut first_failure: Option<String> = None;
    for (dir, result) in results {
        match result {
            Ok(rec) => {
                match &rec.status {
                    RunStatus::Completed => {
                        eprintln!("completed {} -> {}", rec.name, dir.display());
                    }
                    RunStatus::Failed { stage, message } => {
                        eprintln!("FAILED {} at stage {stage}: {message}", rec.name);
                        first_failure.get_or_insert(format!("{} failed at stage {stage}: {message}", rec.name));
                    }
                }
                records.push(rec);
            }
            Err(e) => {
                eprintln!("FAILED {}: {e}", dir.display());
                first_failure.get_or_insert(format!("{}: {e}", dir.display()));
            }
        }
    }
    rebuild_index(root).map_err(runtime)?;
    match first_failure {
        Some(m) => Err(CliError::Runtime(m)),
        None => Ok(records),
    }
}

fn write_table(dir: &Path, stem: &str, table: &ReportTable, decimals: usize) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    for (ext, body) in [
        ("md", table.to_markdown(decimals)),
        ("csv", table.to_csv()),
        ("json", table.to_json()),
    ] {
        let path = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn cmd_run(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    decimals: usize,
) -> Result<(), CliError> {
    let cfg = RunConfigFile::load(config)?;
    let (specs, is_grid) = cfg.run_specs(seed)?;
    check_specs(&specs)?;
    let root = out_dir(out, &cfg);
    let opts = RunOptions {
        forgetting_probe: cfg.forgetting_probe.unwrap_or(true),
    };
    let records = execute_runs(&specs, &root, workers.or(cfg.workers).unwrap_or(1), opts)?;
    let layout = if is_grid { Layout::Grid } else { Layout::Sweep };
    let table = table_from_records(&records, layout).map_err(runtime)?;
    println!("{}", table.to_markdown(decimals));
    write_table(&root, "report", &table, decimals)
}

pub fn cmd_ablate(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    decimals: usize,
) -> Result<(), CliError> {
    let cfg = RunConfigFile::load(config)?;
    let spec = cfg.ablation_spec(seed)?;
    let cells = expand_sweep(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let specs: Vec<RegimenSpec> = cells.iter().map(|c| c.regimen.clone()).collect();
    check_specs(&specs)?;
    let root = out_dir(out, &cfg);
    let opts = RunOptions {
        forgetting_probe: cfg.forgetting_probe.unwrap_or(false),
    };
    let records = execute_runs(&specs, &root, workers.or(cfg.workers).unwrap_or(1), opts)?;
    let table = table_from_records(&records, Layout::Sweep).map_err(runtime)?;
    println!("{}", table.to_markdown(decimals));
    write_table(&root, "sweep_summary", &table, decimals)
}

/// Validates the generator spec, then writes the bundle and checks it.
/// Returns the problems the post-condition checker found (none on success).
pub fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> Result<Vec<String>, CliError> {
    let mut spec: SyntheticDomainSpec = read_strict(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let bundle = generate_synthetic_domain(&spec).map_err(runtime)?;
    let manifest = bundle.write_to(out).map_err(runtime)?;
    let problems = bundle.check();
    for f in &manifest.files {
        eprintln!("wrote {} ({} bytes)", out.join(&f.path).display(), f.bytes);
    }
    if problems.is_empty() {
        eprintln!(
            "checked: dev entity-answer fraction {:.4}",
            bundle.dev_entity_answer_fraction()
        );
        Ok(problems)
    } else {
        Err(CliError::Runtime(format!("bundle check failed: {}", problems.join("; "))))
    }
}

/// Rebuilds the index of `root` and tabulates its runs.
pub fn cmd_report(root: &Path, layout: Layout) -> Result<ReportTable, CliError> {
    rebuild_index(root).map_err(runtime)?;
    let records: Vec<RunRecord> = scan_runs(root).map_err(runtime)?.into_iter().map(|(_, r)| r).collect();
    if records.is_empty() {
        return Err(CliError::Runtime(format!("no runs under {}", root.display())));
    }
    table_from_records(&records, layout).map_err(runtime)
}

pub fn fixture_table(f: Fixture) -> ReportTable {
    match f {
        Fixture::Grid => reference_grid(),
        Fixture::Ladder => reference_aux_ladder(),
        Fixture::Budget => reference_budget_sweep(),
    }
}

/// `<bundle>#<member>` names a bundle member; anything else is a path.
pub fn parse_dataset_ref(s: &str) -> DatasetRef {
    match s.rsplit_once('#') {
        Some((bundle, member)) if !member.is_empty() => DatasetRef::member(bundle, member),
        _ => DatasetRef::Path(PathBuf::from(s)),
    }
}

/// QA predictions are an object of id → answer text; NER predictions an
/// array of tag sequences; QCLS predictions an array of labels. `null`
/// marks a missing prediction.
pub fn cmd_eval(predictions: &Path, dataset: &DatasetRef, task: Option<TaskArg>) -> Result<MetricReport, CliError> {
    let task = task.map(|t| match t {
        TaskArg::Qa => TaskKind::Qa,
        TaskArg::Ner => TaskKind::Ner,
        TaskArg::Qcls => TaskKind::Qcls,
    });
    let data = load_dataset(dataset, task).map_err(runtime)?;
    match data {
        Dataset::Qa(examples) => {
            let preds: QaPredictions = read_strict(predictions)?;
            evaluate_qa(&preds, &examples).map_err(runtime)
        }
        Dataset::Ner(examples) => {
            let preds: Vec<Option<Vec<String>>> = read_strict(predictions)?;
            evaluate_ner(&preds, &examples).map_err(runtime)
        }
        Dataset::Qcls(examples) => {
            let preds: Vec<Option<String>> = read_strict(predictions)?;
            evaluate_qcls(&preds, &examples).map_err(runtime)
        }
        Dataset::Corpus(_) => Err(CliError::Config(format!("{dataset} is a text corpus; nothing to score"))),
    }
}
