//! The `eagers` command line: `run`, `report` and `inspect`.

use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use url::Url;

use crate::backends::http::HttpBackend;
use crate::backends::mock::{Fixture, FixtureBackend, PlantedBackend, PlantedMode};
use crate::backends::{Backend, BackendConfig};
use crate::config::{resolve, ConfigFile, Mode, PipelineConfig};
use crate::dataset::{load_dataset, write_skip_report, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{Clock, EvalReport, Runner};
use crate::report::{collect_rows, inspect, render_table, render_trace, ReportRow};
use crate::synth::{answer_key, write_planted_corpus, SynthOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_UNKNOWN_QUESTION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "eagers", version, about = "Explanation-guided region selection for document VQA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MockKind {
    /// Planted-evidence pages; the grounding finds the evidence.
    Planted,
    /// Planted-evidence pages; the grounding is steered to the decoy.
    Adversarial,
    /// Canned explanations and answers keyed by question text.
    Fixture,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one configuration over a split.
    Run(RunArgs),
    /// Compare finished runs in one table.
    Report(ReportArgs),
    /// Trace one question of a finished run.
    Inspect(InspectArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML file or preset name (eagers_25_0, eagers_50_0, eagers_25_15, eagers_50_15, baseline).
    #[arg(long, default_value = "eagers_50_15")]
    pub config: String,
    #[arg(long)]
    pub dataset_root: Option<PathBuf>,
    /// Defaults to `<dataset-root>/val.json`.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub max_side: Option<u32>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Evaluate only the first N valid records.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output root; runs land in `<out>/runs/<config-hash>/`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = "EAGERS_BASE_URL")]
    pub base_url: Option<String>,
    /// Use an in-process mock instead of an inference service.
    #[arg(long, value_enum)]
    pub mock: Option<MockKind>,
    /// JSON fixture for `--mock fixture`.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Size of the generated corpus when a planted mock runs without a dataset.
    #[arg(long, default_value_t = 25)]
    pub questions: usize,
    /// Print the report JSON instead of a table row.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Run directories; defaults to every directory under `./runs`.
    pub run_dirs: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    pub run_dir: PathBuf,
    pub question_id: String,
    #[arg(long)]
    pub json: bool,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidGeometry(_)
        | Error::Format(_)
        | Error::EmptyDataset
        | Error::EmptyRun(_)
        | Error::DuplicateQuestion(_) => EXIT_USAGE,
        Error::BackendUnavailable(_) => EXIT_UNREACHABLE,
        Error::UnknownQuestion(_) => EXIT_UNKNOWN_QUESTION,
        _ => EXIT_OTHER,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn build_config(args: &RunArgs) -> Result<(PipelineConfig, ConfigFile)> {
    let (mut cfg, file) = resolve(&args.config)?;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(s) = args.max_side {
        cfg.max_side = s;
    }
    if let Some(c) = args.concurrency {
        cfg.concurrency = c;
    }
    cfg.validate()?;
    Ok((cfg, file))
}

struct Input {
    dataset: Dataset,
    split_file: PathBuf,
}

fn load_input(args: &RunArgs) -> Result<Input> {
    let planted = matches!(args.mock, Some(MockKind::Planted | MockKind::Adversarial));
    let (root, split_file) = match (&args.dataset_root, &args.split_file) {
        (Some(root), split) => (
            root.clone(),
            split.clone().unwrap_or_else(|| root.join("val.json")),
        ),
        (None, Some(split)) => (
            split.parent().unwrap_or(Path::new(".")).to_path_buf(),
            split.clone(),
        ),
        (None, None) if planted => {
            let dir = args
                .out
                .join("synthetic")
                .join(format!("planted-{}-{}", args.seed, args.questions));
            let split = dir.join("split.json");
            if !split.is_file() {
                let opts = SynthOptions {
                    questions: args.questions,
                    seed: args.seed,
                    ..SynthOptions::default()
                };
                write_planted_corpus(&dir, &opts)?;
            }
            (dir, split)
        }
        (None, None) => {
            return Err(Error::Config(
                "--dataset-root or --split-file is required unless a planted mock generates its own pages".into(),
            ))
        }
    };
    let mut dataset = load_dataset(&root, &split_file)?;
    if let Some(n) = args.limit {
        dataset.records.truncate(n);
    }
    Ok(Input { dataset, split_file })
}

/// Fails fast with [`Error::BackendUnavailable`] when nothing listens at `url`.
pub fn preflight(url: &Url) -> Result<()> {
    let addrs = url
        .socket_addrs(|| None)
        .map_err(|e| Error::BackendUnavailable(format!("{url}: {e}")))?;
    for addr in &addrs {
        if TcpStream::connect_timeout(addr, Duration::from_secs(3)).is_ok() {
            return Ok(());
        }
    }
    Err(Error::BackendUnavailable(format!("{url}: connection refused")))
}

fn http_backend(args: &RunArgs, cfg: &PipelineConfig, file: &ConfigFile) -> Result<(HttpBackend, String)> {
    let raw = args
        .base_url
        .clone()
        .or_else(|| file.backend.base_url.clone())
        .ok_or_else(|| {
            Error::Config("no backend: pass --base-url, set EAGERS_BASE_URL or use --mock".into())
        })?;
    let url = Url::parse(&raw).map_err(|e| Error::Config(format!("base url {raw:?}: {e}")))?;
    let mut bc = BackendConfig::new(url.clone());
    bc.embedder_ids = cfg.embedder_ids.clone();
    bc.model_id = cfg.model_id.clone();
    if let Some(t) = file.backend.timeout_seconds {
        bc.timeout_seconds = t;
    }
    if let Some(r) = file.backend.retries {
        bc.retries = r;
    }
    bc.max_in_flight = file.backend.max_in_flight.unwrap_or(cfg.concurrency);
    bc.validate()?;
    preflight(&url)?;
    Ok((HttpBackend::new(bc)?, url.to_string()))
}

fn execute<B: Backend>(
    args: &RunArgs,
    cfg: PipelineConfig,
    backend: B,
    tag: &str,
    clock: Clock,
    input: &Input,
) -> Result<(PathBuf, EvalReport)> {
    let runner = Runner::new(cfg, backend, tag, &input.dataset.root)?
        .with_store(&args.out)
        .with_clock(clock);
    let store = runner.store().expect("store attached");
    let run_dir = store.run_dir().to_path_buf();
    store.write(
        "manifest.json",
        &runner.manifest(Some(&input.split_file), Some(&input.dataset.digest)),
    )?;
    write_skip_report(&run_dir.join("skips.jsonl"), &input.dataset.skipped)?;

    if input.dataset.records.is_empty() {
        return Err(Error::EmptyRun("no records to evaluate".into()));
    }
    let outcomes = runner.run_outcomes(&input.dataset.records);
    let mut report = runner.report(&outcomes)?;
    report.skipped = input.dataset.skipped.len();
    report.skip_report = Some("skips.jsonl".into());
    store.write("report.json", &report)?;
    Ok((run_dir, report))
}

pub fn cmd_run(args: &RunArgs) -> Result<String> {
    let (cfg, file) = build_config(args)?;
    if args.fixture.is_some() && args.mock != Some(MockKind::Fixture) {
        return Err(Error::Config("--fixture needs --mock fixture".into()));
    }
    let input = load_input(args)?;
    let (run_dir, report) = match args.mock {
        Some(kind @ (MockKind::Planted | MockKind::Adversarial)) => {
            let mode = if kind == MockKind::Planted {
                PlantedMode::Faithful
            } else {
                PlantedMode::Adversarial
            };
            let backend = PlantedBackend::new(answer_key(&input.dataset.records), mode, args.seed);
            let tag = format!("mock:{}", if kind == MockKind::Planted { "planted" } else { "adversarial" });
            execute(args, cfg, backend, &tag, Clock::Reported, &input)?
        }
        Some(MockKind::Fixture) => {
            let fixture = match &args.fixture {
                Some(p) => Fixture::load(p)?,
                None => Fixture::canned(),
            };
            let backend = FixtureBackend::new(fixture, args.seed);
            execute(args, cfg, backend, "mock:fixture", Clock::Reported, &input)?
        }
        None => {
            let (backend, tag) = http_backend(args, &cfg, &file)?;
            execute(args, cfg, backend, &tag, Clock::Wall, &input)?
        }
    };

    if args.json {
        return Ok(format!("{}\n", serde_json::to_string_pretty(&report)?));
    }
    let mut out = render_table(&[ReportRow::from_report(&run_dir, &report)]);
    if report.failed > 0 {
        out.push_str(&format!("{} question(s) failed; see outcome.json files\n", report.failed));
    }
    if report.skipped > 0 {
        out.push_str(&format!("{} record(s) skipped; see skips.jsonl\n", report.skipped));
    }
    out.push_str(&format!("run: {}\n", run_dir.display()));
    Ok(out)
}

fn default_run_dirs() -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir("runs")
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.is_dir())
                .collect()
        })
        .unwrap_or_default();
    dirs.sort();
    dirs
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let dirs = if args.run_dirs.is_empty() {
        default_run_dirs()
    } else {
        args.run_dirs.clone()
    };
    if dirs.is_empty() {
        return Err(Error::Config("no run directories given and none under ./runs".into()));
    }
    let rows = collect_rows(&dirs);
    if args.json {
        Ok(format!("{}\n", serde_json::to_string_pretty(&rows)?))
    } else {
        Ok(render_table(&rows))
    }
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<String> {
    let trace = inspect(&args.run_dir, &args.question_id)?;
    if args.json {
        Ok(format!("{}\n", serde_json::to_string_pretty(&trace)?))
    } else {
        Ok(render_trace(&trace))
    }
}
