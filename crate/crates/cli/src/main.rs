use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lch_core::harness::{
    emit_report, read_csv, report_from_records, run_to_dir, ContextSize, OfflineModel, RunConfig,
};
use lch_core::world::{derive_seed, generate_sample, write_samples, DistractorSource, GenSpec};
use lch_core::{Method, PromptOrder, TaskId};

#[derive(Parser)]
#[command(name = "lch", version, about = "Long-context QA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate needle-in-haystack samples as JSONL.
    Generate(GenerateArgs),
    /// Run the evaluation matrix.
    Run(Box<RunArgs>),
    /// Rebuild tables and heatmaps from a records.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    task: TaskId,
    /// Token target, e.g. 16k or 2000.
    #[arg(long)]
    tokens: ContextSize,
    #[arg(long, default_value_t = 25)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "builtin" or a plain-text corpus path.
    #[arg(long, default_value = "builtin")]
    distractors: DistractorSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    task: Vec<TaskId>,
    #[arg(long, value_delimiter = ',')]
    tokens: Vec<ContextSize>,
    #[arg(long, value_delimiter = ',')]
    order: Vec<PromptOrder>,
    /// Model name sent to the endpoint.
    #[arg(long)]
    model: Option<String>,
    /// "oracle" or "replay:<transcripts.log>".
    #[arg(long)]
    offline: Option<OfflineModel>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    no_system_message: bool,
    #[arg(long)]
    no_example_tags: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn generate(args: GenerateArgs) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let samples = (0..args.n)
        .map(|i| {
            let mut spec = GenSpec::new(args.task, args.tokens.0, derive_seed(args.seed, i as u64));
            spec.distractors = args.distractors.clone();
            generate_sample(&spec).with_context(|| format!("sample {i}"))
        })
        .collect::<Result<Vec<_>>>()?;
    write_samples(&args.out, &samples).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} {} samples to {}", samples.len(), args.task, args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if !args.method.is_empty() {
        config.methods = args.method;
    }
    if !args.task.is_empty() {
        config.tasks = args.task;
    }
    if !args.tokens.is_empty() {
        config.context_sizes = args.tokens;
    }
    if !args.order.is_empty() {
        config.orders = args.order;
    }
    if let Some(m) = args.model {
        config.endpoint.model = m;
    }
    if args.offline.is_some() {
        config.offline = args.offline;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.out {
        config.out = v;
    }
    if let Some(v) = args.top_k {
        config.top_k = v;
    }
    if let Some(v) = args.samples {
        config.samples_per_cell = v;
    }
    if let Some(v) = args.concurrency {
        config.concurrency = v;
    }
    if args.templates.is_some() {
        config.templates = args.templates;
    }
    if args.data_dir.is_some() {
        config.data_dir = args.data_dir;
    }
    if args.no_system_message {
        config.system_message = false;
    }
    if args.no_example_tags {
        config.include_example_tags = false;
    }
    let outcome = run_to_dir(&config)?;
    let flagged = outcome.records.iter().filter(|r| r.flagged).count();
    print!(
        "{}",
        std::fs::read_to_string(config.out.join("tables_by_task.txt")).unwrap_or_default()
    );
    eprintln!(
        "{} records ({} flagged) written to {}",
        outcome.records.len(),
        flagged,
        config.out.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let rows = read_csv(&args.records).with_context(|| format!("reading {}", args.records.display()))?;
    let report = report_from_records(&rows);
    emit_report(&report, &args.out)?;
    print!(
        "{}",
        std::fs::read_to_string(args.out.join("tables_by_task.txt")).unwrap_or_default()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(*a),
        Command::Report(a) => report(a),
    }
}
