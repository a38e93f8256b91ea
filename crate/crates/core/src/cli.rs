//! Command-line entry point: `gemmas validate|analyze|sweep|generate|compare`.
//!
//! Exit codes are a stable scripting contract: 0 success, 1 validation or
//! metric failure, 2 I/O or usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::features::{build_provider, EmbedError, EmbeddingProvider};
use crate::gen::{generate_synthetic_run, GenSpec};
use crate::io::{parse_run, serialize_run, ParseError};
use crate::metrics::{
    analyze_run_with_provider, analyze_traces_with_provider, build_report, AnalysisConfig,
    MetricsError, ProblemMetrics,
};
use crate::report::{
    aggregate, compare_columns, default_sweep_grid, lambda_sweep_with_provider, render_comparison,
    render_delta, render_sweep, MetricColumns, RenderFormat, RenderOptions, RunMeta,
};
use crate::trace::RunRecord;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_IO_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gemmas",
    version,
    about = "Process-level evaluation of multi-agent LLM traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    shared: SharedOpts,
}

#[derive(Debug, Args)]
struct SharedOpts {
    /// Syntactic similarity weight; the semantic channel gets 1 - lambda1
    #[arg(long, global = true, default_value_t = 0.5)]
    lambda1: f64,

    /// Contribution-score threshold for path necessity (inclusive)
    #[arg(long, global = true, default_value_t = 0.5)]
    threshold: f64,

    /// Embedding provider for the semantic channel
    #[arg(long, global = true, value_enum, default_value_t = ProviderArg::Local)]
    provider: ProviderArg,

    /// Remote embedding endpoint (falls back to GEMMAS_EMBED_URL)
    #[arg(long, global = true)]
    remote_url: Option<String>,

    /// Worker cap for per-trace parallelism
    #[arg(long, global = true, default_value_t = 4)]
    workers: usize,

    /// Output format (analyze/compare default to markdown, sweep to csv)
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Write output to a file instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Seed for synthetic generation
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Sweep grid as START:END:STEP over the lambda1 axis
    #[arg(long, global = true)]
    grid: Option<String>,

    /// Token display divisor (1000 shows kilotokens)
    #[arg(long, global = true, default_value_t = 1000.0)]
    token_scale: f64,

    /// On provider failure, write metrics for the traces that succeeded
    #[arg(long, global = true)]
    keep_partial: bool,

    /// Emit raw unrounded values in CSV output
    #[arg(long, global = true)]
    raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderArg {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check trace files against the schema and graph invariants
    Validate { paths: Vec<PathBuf> },
    /// Compute metrics for one or more runs and render a comparison table
    Analyze { paths: Vec<PathBuf> },
    /// Sweep the syntactic weight and report mean diversity per grid point
    Sweep { path: PathBuf },
    /// Generate a synthetic run for testing
    Generate {
        /// Agents per trace
        #[arg(long, default_value_t = 4)]
        agents: usize,
        /// Problems in the run
        #[arg(long, default_value_t = 10)]
        problems: usize,
        /// Probability of each lower-to-higher edge, per matrix
        #[arg(long, default_value_t = 0.5)]
        edge_density: f64,
        /// Probability that a node's response contains the gold answer
        #[arg(long, default_value_t = 0.8)]
        correctness: f64,
        /// Distinct filler words available to responses
        #[arg(long, default_value_t = 50)]
        vocab: usize,
        /// Method name recorded in the run
        #[arg(long, default_value = "synthetic")]
        method: String,
        /// Model name recorded in the run
        #[arg(long, default_value = "none")]
        model: String,
        /// Benchmark name recorded in the run
        #[arg(long, default_value = "synthetic")]
        benchmark: String,
    },
    /// Report per-metric deltas between a baseline and a candidate
    Compare { baseline: PathBuf, candidate: PathBuf },
}

#[derive(Debug)]
enum CliError {
    /// File-system problems: missing files, unwritable output.
    Io { path: PathBuf, message: String },
    /// Bad flag combinations or malformed flag values.
    Usage(String),
    /// Invalid input data or failed metric computation.
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Usage(_) => EXIT_IO_USAGE,
            CliError::Data(_) => EXIT_INVALID,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io { path, message } => format!("{}: {message}", path.display()),
            CliError::Usage(message) => message.clone(),
            CliError::Data(message) => message.clone(),
        }
    }
}

/// Parse `std::env::args` and run; the binary's whole `main`.
pub fn run() -> ExitCode {
    run_from(std::env::args_os())
}

/// Testable entry point over explicit arguments.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own help/usage text; keep its exit semantics
            // (0 for --help/--version, 2 for usage errors).
            let code = if err.use_stderr() { EXIT_IO_USAGE } else { EXIT_OK };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    };
    ExitCode::from(code)
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Validate { paths } => cmd_validate(paths, &cli.shared),
        Command::Analyze { paths } => cmd_analyze(paths, &cli.shared),
        Command::Sweep { path } => cmd_sweep(path, &cli.shared),
        Command::Generate {
            agents,
            problems,
            edge_density,
            correctness,
            vocab,
            method,
            model,
            benchmark,
        } => cmd_generate(
            GenSpec {
                num_agents: *agents,
                num_problems: *problems,
                edge_density: *edge_density,
                correctness_rate: *correctness,
                vocabulary_size: *vocab,
                seed: cli.shared.seed,
            },
            method,
            model,
            benchmark,
            &cli.shared,
        ),
        Command::Compare { baseline, candidate } => cmd_compare(baseline, candidate, &cli.shared),
    }
}

fn analysis_config(shared: &SharedOpts) -> AnalysisConfig {
    AnalysisConfig {
        lambda1: shared.lambda1,
        upr_threshold: shared.threshold,
        provider: match shared.provider {
            ProviderArg::Local => crate::features::ProviderKind::Local,
            ProviderArg::Remote => crate::features::ProviderKind::Remote,
        },
        remote_url: shared.remote_url.clone(),
        token_scale: shared.token_scale,
        workers: shared.workers,
    }
}

fn render_options(shared: &SharedOpts, default_format: RenderFormat) -> RenderOptions {
    let format = match shared.format {
        Some(FormatArg::Markdown) => RenderFormat::Markdown,
        Some(FormatArg::Csv) => RenderFormat::Csv,
        None => default_format,
    };
    RenderOptions { format, raw_values: shared.raw }
}

/// Build the configured provider; a remote provider without a URL anywhere
/// is a usage problem, not a data problem.
fn cli_provider(config: &AnalysisConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    build_provider(config.provider, config.remote_url.as_deref()).map_err(|e| match e {
        EmbedError::NotConfigured(message) => CliError::Usage(message),
        other => CliError::Data(other.to_string()),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn load_run(path: &Path) -> Result<RunRecord, CliError> {
    let bytes = read_file(path)?;
    let parsed = parse_run(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for warning in &parsed.warnings {
        eprintln!("warning: {}: {warning}", path.display());
    }
    Ok(parsed.run)
}

fn write_output(output: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io { path: path.clone(), message: e.to_string() }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(paths: &[PathBuf], _shared: &SharedOpts) -> Result<u8, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("validate needs at least one file".to_string()));
    }
    let mut worst = EXIT_OK;
    for path in paths {
        match fs::read(path) {
            Err(e) => {
                eprintln!("{}: error: {e}", path.display());
                worst = worst.max(EXIT_IO_USAGE);
            }
            Ok(bytes) => match parse_run(&bytes) {
                Ok(parsed) => {
                    for warning in &parsed.warnings {
                        eprintln!("warning: {}: {warning}", path.display());
                    }
                    println!("{}: ok ({} traces)", path.display(), parsed.run.traces.len());
                }
                Err(err) => {
                    println!("{}: invalid", path.display());
                    match err {
                        ParseError::GraphInvariant { problem_id, violations } => {
                            for violation in violations {
                                println!("  problem {problem_id}: {violation}");
                            }
                        }
                        other => println!("  {other}"),
                    }
                    worst = worst.max(EXIT_INVALID);
                }
            },
        }
    }
    Ok(worst)
}

fn cmd_analyze(paths: &[PathBuf], shared: &SharedOpts) -> Result<u8, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("analyze needs at least one file".to_string()));
    }
    let config = analysis_config(shared);
    let provider = cli_provider(&config)?;

    let mut entries = Vec::new();
    for path in paths {
        let run = load_run(path)?;
        let outcomes = analyze_traces_with_provider(&run, &config, provider.as_ref())
            .map_err(|e| CliError::Data(e.to_string()))?;
        let failures: Vec<&MetricsError> = outcomes.iter().filter_map(|o| o.as_ref().err()).collect();
        if !failures.is_empty() {
            let first = failures[0].to_string();
            if shared.keep_partial {
                let kept: Vec<ProblemMetrics> =
                    outcomes.iter().filter_map(|o| o.as_ref().ok().cloned()).collect();
                let partial = build_report(&run, &config, kept);
                let partial_path = partial_path(shared, path);
                let body = serde_json::json!({
                    "method": run.method,
                    "model": run.model,
                    "benchmark": run.benchmark,
                    "failed_traces": failures.len(),
                    "report": partial,
                });
                let text = format!("{body:#}\n");
                fs::write(&partial_path, text).map_err(|e| CliError::Io {
                    path: partial_path.clone(),
                    message: e.to_string(),
                })?;
                eprintln!(
                    "error: {}: {} of {} traces failed ({first}); partial results in {}",
                    path.display(),
                    failures.len(),
                    run.traces.len(),
                    partial_path.display()
                );
            }
            return Err(CliError::Data(format!("{}: {first}", path.display())));
        }
        let per_problem = outcomes.into_iter().map(|o| o.expect("no failures")).collect();
        let report = build_report(&run, &config, per_problem);
        entries.push((RunMeta::of(&run), MetricColumns::from(&report)));
    }

    let table = aggregate(&entries).map_err(|e| CliError::Data(e.to_string()))?;
    let text = render_comparison(&table, render_options(shared, RenderFormat::Markdown))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_output(shared.output.as_ref(), &text)?;
    Ok(EXIT_OK)
}

fn partial_path(shared: &SharedOpts, input: &Path) -> PathBuf {
    let stem = shared.output.as_deref().unwrap_or(input);
    let mut name = stem.as_os_str().to_os_string();
    name.push(".partial.json");
    PathBuf::from(name)
}

fn cmd_sweep(path: &Path, shared: &SharedOpts) -> Result<u8, CliError> {
    let run = load_run(path)?;
    let grid = match &shared.grid {
        Some(spec) => parse_grid(spec)?,
        None => default_sweep_grid(),
    };
    let config = analysis_config(shared);
    let provider = cli_provider(&config)?;
    let table = lambda_sweep_with_provider(&run, &grid, &config, provider.as_ref())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let text = render_sweep(&table, render_options(shared, RenderFormat::Csv))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_output(shared.output.as_ref(), &text)?;
    Ok(EXIT_OK)
}

/// Parse a START:END:STEP grid specification into ascending lambda values.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, step] = parts.as_slice() else {
        return Err(CliError::Usage(format!("--grid expects START:END:STEP, got {spec:?}")));
    };
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse::<f64>()
            .map_err(|_| CliError::Usage(format!("--grid component {s:?} is not a number")))
    };
    let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start > end || step <= 0.0 {
        return Err(CliError::Usage(format!(
            "--grid needs 0 <= START <= END <= 1 and STEP > 0, got {spec:?}"
        )));
    }
    let mut points = Vec::new();
    let mut k = 0u32;
    loop {
        let value = start + f64::from(k) * step;
        if value > end + 1e-9 {
            break;
        }
        // Snap accumulated float drift so grid points print cleanly.
        points.push((value.min(end) * 1e9).round() / 1e9);
        k += 1;
    }
    Ok(points)
}

fn cmd_generate(
    spec: GenSpec,
    method: &str,
    model: &str,
    benchmark: &str,
    shared: &SharedOpts,
) -> Result<u8, CliError> {
    let mut run = generate_synthetic_run(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    run.method = method.to_string();
    run.model = model.to_string();
    run.benchmark = benchmark.to_string();
    write_output(shared.output.as_ref(), &serialize_run(&run))?;
    Ok(EXIT_OK)
}

fn cmd_compare(baseline: &Path, candidate: &Path, shared: &SharedOpts) -> Result<u8, CliError> {
    let config = analysis_config(shared);
    // The provider is needed only when a side is a trace file.
    let provider = if [baseline, candidate].iter().any(|p| !is_csv(p)) {
        Some(cli_provider(&config)?)
    } else {
        None
    };
    let baseline_columns = load_columns(baseline, &config, provider.as_deref())?;
    let candidate_columns = load_columns(candidate, &config, provider.as_deref())?;
    let report = compare_columns(&baseline_columns, &candidate_columns);
    let text = render_delta(&report, render_options(shared, RenderFormat::Markdown))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_output(shared.output.as_ref(), &text)?;
    Ok(EXIT_OK)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv"))
}

/// Load one side of a comparison: a `.csv` file is read as a rendered metrics
/// report (one data row); anything else is parsed as a trace file and
/// analyzed.
fn load_columns(
    path: &Path,
    config: &AnalysisConfig,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<MetricColumns, CliError> {
    if is_csv(path) {
        return load_columns_csv(path);
    }
    let run = load_run(path)?;
    let provider = provider.expect("provider built for trace-file comparisons");
    let report = analyze_run_with_provider(&run, config, provider)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(MetricColumns::from(&report))
}

fn load_columns_csv(path: &Path) -> Result<MetricColumns, CliError> {
    let bytes = read_file(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if records.len() != 1 {
        return Err(CliError::Data(format!(
            "{}: expected exactly one metrics row, found {}",
            path.display(),
            records.len()
        )));
    }
    let record = &records[0];
    let required = |name: &str| -> Result<f64, CliError> {
        let index = column(name).ok_or_else(|| {
            CliError::Data(format!("{}: missing column {name:?}", path.display()))
        })?;
        record[index]
            .trim()
            .parse()
            .map_err(|_| CliError::Data(format!("{}: bad value in column {name:?}", path.display())))
    };
    let optional = |name: &str| -> Result<Option<f64>, CliError> {
        match column(name) {
            None => Ok(None),
            Some(index) => {
                let raw = record[index].trim();
                if raw.is_empty() {
                    Ok(None)
                } else {
                    raw.parse().map(Some).map_err(|_| {
                        CliError::Data(format!("{}: bad value in column {name:?}", path.display()))
                    })
                }
            }
        }
    };
    Ok(MetricColumns {
        accuracy: required("accuracy")?,
        ptok: required("ptok")?,
        ctok: required("ctok")?,
        ids: optional("ids")?,
        upr: optional("upr")?,
    })
}
