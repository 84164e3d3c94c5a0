use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use oda_core::bench::{self, corpus, stats, CorpusReport};
use oda_core::config::AppConfig;
use oda_core::datalake::registry::{self, RegistryError, SubsetStatus};
use oda_core::datalake::synth::{generate_synthetic, Manifest, MetricSpec, SynthError, SynthSpec};
use oda_core::datalake::{DatalakeConfig, JobSelector, TimeWindow};
use oda_core::orchestrator::http::{self, ErrorBody};
use oda_core::orchestrator::{Backend, ChatError, ChatOptions, ChatRequest, ChatResponse, PREVIEW_THRESHOLD};
use oda_core::sparql::llm::GenerationMode;

#[derive(Parser)]
#[command(name = "oda", version, about = "Ask questions about HPC operational data")]
struct Cli {
    /// TOML config file; falls back to $ODA_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Subset id under the data root, or a path to a subset directory.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Directory holding the subsets.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP backend.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// List, download or verify subsets from the registry.
    Setup {
        #[arg(long)]
        registry: Option<String>,
        #[command(subcommand)]
        action: SetupAction,
    },
    /// Answer one question.
    Ask(AskArgs),
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Run a benchmark.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
}

#[derive(Subcommand)]
enum SetupAction {
    List,
    Download {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Check presence and size of the given subsets (all when none given).
    Verify { ids: Vec<String> },
}

#[derive(Args)]
struct AskArgs {
    question: String,
    /// Write the full result to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    /// Send the question to a running backend instead.
    #[arg(long)]
    remote: Option<String>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<GenerationMode>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Clone)]
struct SpecArgs {
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    racks: usize,
    #[arg(long, default_value_t = 50)]
    jobs: usize,
    /// Seconds between readings.
    #[arg(long, default_value_t = 20)]
    cadence: u32,
    #[arg(long, default_value = "2022-02")]
    month: String,
    /// `plugin/metric:unit`, repeatable.
    #[arg(long = "metric", value_parser = parse_metric)]
    metrics: Vec<MetricSpec>,
}

impl SpecArgs {
    fn spec(&self) -> SynthSpec {
        let mut spec = SynthSpec {
            nodes: self.nodes,
            racks: self.racks,
            jobs: self.jobs,
            cadence_secs: self.cadence,
            month: self.month.clone(),
            ..Default::default()
        };
        if !self.metrics.is_empty() {
            spec.metrics = self.metrics.clone();
        }
        spec
    }
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Time and size of each RDF serialization format.
    Serialization {
        #[arg(long, default_value_t = 100_000)]
        triples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Per-question VKG statistics over a generated question corpus.
    Corpus {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run the questions concurrently.
        #[arg(long)]
        parallel: bool,
        /// Write the summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// In-memory triple buffer high-water mark while adding triples.
    Memory {
        #[arg(long, default_value_t = 1_000_000)]
        max: usize,
        #[arg(long, default_value_t = 100_000)]
        step: usize,
        /// Also profile chunked emission with this batch size.
        #[arg(long)]
        chunk: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn parse_mode(s: &str) -> Result<GenerationMode, String> {
    match s {
        "template" => Ok(GenerationMode::Template),
        "llm" => Ok(GenerationMode::Llm),
        _ => Err("expected template or llm".into()),
    }
}

fn parse_metric(s: &str) -> Result<MetricSpec, String> {
    let (path, unit) = s.split_once(':').unwrap_or((s, ""));
    let (plugin, metric) = path.split_once('/').ok_or("expected plugin/metric[:unit]")?;
    Ok(MetricSpec { plugin: plugin.into(), metric: metric.into(), unit: unit.into() })
}

/// An error that maps to a specific exit status.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

const USAGE: u8 = 2;
const UNREACHABLE: u8 = 3;
const REJECTED: u8 = 4;

fn exit(code: u8, message: impl Into<String>) -> anyhow::Error {
    Exit { code, message: message.into() }.into()
}

fn chat_exit(e: ChatError) -> anyhow::Error {
    let code = match &e {
        ChatError::NoDatasetSelected | ChatError::InvalidRequest(_) => USAGE,
        e if e.is_rejection() => REJECTED,
        ChatError::DatalakeUnavailable(_) | ChatError::Store(_) | ChatError::Generation(_) => UNREACHABLE,
        _ => 1,
    };
    exit(code, e.to_string())
}

fn registry_exit(e: RegistryError) -> anyhow::Error {
    match e {
        RegistryError::Unreachable(_) => exit(UNREACHABLE, e.to_string()),
        e => e.into(),
    }
}

struct Ctx {
    config: AppConfig,
    dataset: Option<DatalakeConfig>,
    json: bool,
}

impl Ctx {
    fn data_root(&self) -> PathBuf {
        self.config.data_root.clone().unwrap_or_else(|| PathBuf::from("data"))
    }
}

fn resolve_dataset(arg: Option<&str>, root: &Path) -> Option<DatalakeConfig> {
    let arg = arg?;
    let p = Path::new(arg);
    if p.is_dir() && (p.join("jobs.parquet").is_file() || p.join("manifest.json").is_file()) {
        let dir = std::fs::canonicalize(p).unwrap_or_else(|_| p.to_owned());
        let parent = dir.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Some(DatalakeConfig::columnar(parent, name));
    }
    Some(DatalakeConfig::columnar(root, arg))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

async fn run(cli: Cli) -> Result<()> {
    let mut config = AppConfig::load(cli.config.as_deref()).map_err(|e| exit(USAGE, e.to_string()))?;
    if let Some(root) = cli.data_root {
        config.data_root = Some(root);
    }
    let root = config.data_root.clone().unwrap_or_else(|| PathBuf::from("data"));
    let dataset = resolve_dataset(cli.dataset.as_deref(), &root).or_else(|| config.datalake.clone());
    let ctx = Ctx { config, dataset, json: cli.json };
    match cli.command {
        Command::Serve { bind } => serve(ctx, bind).await,
        Command::Setup { registry, action } => setup(ctx, registry, action).await,
        Command::Ask(args) => ask(ctx, args).await,
        Command::Synth { seed, out, spec } => synth(ctx, seed, out, &spec),
        Command::Bench { which } => bench_cmd(ctx, which).await,
    }
}

async fn backend(ctx: &Ctx) -> Result<Backend> {
    let backend = Backend::new(ctx.config.clone()).map_err(chat_exit)?;
    if let Some(ds) = &ctx.dataset {
        backend.select_dataset(ds.clone()).await.map_err(chat_exit)?;
    }
    Ok(backend)
}

async fn serve(ctx: Ctx, bind: Option<String>) -> Result<()> {
    let bind = bind.unwrap_or_else(|| ctx.config.server.bind.clone());
    let backend = Arc::new(backend(&ctx).await?);
    http::serve(backend, &bind).await.with_context(|| format!("serving on {bind}"))
}

async fn setup(ctx: Ctx, registry_arg: Option<String>, action: SetupAction) -> Result<()> {
    let url = registry_arg
        .or_else(|| ctx.config.registry_url.clone())
        .ok_or_else(|| exit(USAGE, "no registry configured (--registry or registry_url)"))?;
    let client = reqwest::Client::new();
    let list = registry::list_subsets(&client, &url).await.map_err(registry_exit)?;
    let dest = ctx.data_root();
    let pick = |ids: &[String]| -> Result<Vec<registry::SubsetDescriptor>> {
        if ids.is_empty() {
            return Ok(list.clone());
        }
        ids.iter()
            .map(|id| {
                list.iter().find(|d| &d.subset_id == id).cloned().ok_or_else(|| exit(USAGE, format!("unknown subset {id}")))
            })
            .collect()
    };
    match action {
        SetupAction::List => {
            if ctx.json {
                println!("{}", serde_json::to_string_pretty(&list)?);
            } else {
                for d in &list {
                    println!("{}\t{}\t{}", d.subset_id, d.label, d.byte_size);
                }
            }
        }
        SetupAction::Download { ids } => {
            for d in pick(&ids)? {
                let n = registry::download_subset(&client, &d, &dest).await.map_err(registry_exit)?;
                println!("{}\t{}\t{}", d.subset_id, n, dest.join(d.file_name()).display());
            }
        }
        SetupAction::Verify { ids } => {
            let report: Vec<(String, SubsetStatus)> =
                pick(&ids)?.iter().map(|d| (d.subset_id.clone(), registry::verify_subset(d, &dest))).collect();
            if ctx.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                for (id, status) in &report {
                    let s = match status {
                        SubsetStatus::Present => "present".to_owned(),
                        SubsetStatus::Missing => "missing".to_owned(),
                        SubsetStatus::SizeMismatch { expected, actual } => format!("size mismatch ({actual} of {expected} bytes)"),
                    };
                    println!("{id}\t{s}");
                }
            }
        }
    }
    Ok(())
}

async fn ask(ctx: Ctx, args: AskArgs) -> Result<()> {
    let req = ChatRequest { question: args.question.clone(), options: ChatOptions { mode: args.mode, limit: args.limit } };
    let resp = match &args.remote {
        Some(url) => ask_remote(url, ctx.dataset.as_ref(), &req).await?,
        None => {
            if ctx.dataset.is_none() {
                return Err(exit(USAGE, "no dataset selected (--dataset or datalake in config)"));
            }
            backend(&ctx).await?.chat(req).await.map_err(chat_exit)?
        }
    };
    if let Some(path) = &args.csv {
        std::fs::write(path, oda_core::orchestrator::to_csv(&resp.columns, &resp.rows))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if ctx.json {
        println!("{}", serde_json::to_string_pretty(&resp)?);
        return Ok(());
    }
    print!("{}", format_table(&resp.columns, &resp.preview));
    if resp.total_rows > PREVIEW_THRESHOLD {
        println!("({} of {} rows shown; use --csv for the full result)", resp.preview.len(), resp.total_rows);
    } else {
        println!("({} rows)", resp.total_rows);
    }
    if args.timings {
        for (name, secs) in resp.timings.vkg_rows() {
            println!("{name}: {secs:.6} s");
        }
    }
    Ok(())
}

async fn ask_remote(url: &str, dataset: Option<&DatalakeConfig>, req: &ChatRequest) -> Result<ChatResponse> {
    let base = url.trim_end_matches('/');
    let client = reqwest::Client::new();
    async fn call<T: serde::de::DeserializeOwned>(rb: reqwest::RequestBuilder) -> Result<T> {
        let resp = rb.send().await.map_err(|e| exit(UNREACHABLE, format!("backend unreachable: {e}")))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| exit(UNREACHABLE, e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text).context("malformed backend response");
        }
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.message).unwrap_or(text);
        let code = match status.as_u16() {
            400 | 409 => USAGE,
            422 => REJECTED,
            502..=504 => UNREACHABLE,
            _ => 1,
        };
        Err(exit(code, message))
    }
    if let Some(ds) = dataset {
        call::<serde_json::Value>(client.post(format!("{base}/api/dataset")).json(ds)).await?;
    }
    call(client.post(format!("{base}/api/chat")).json(req)).await
}

fn format_table(columns: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = columns.iter().map(|c| c.chars().count()).collect();
    for r in rows {
        for (w, v) in widths.iter_mut().zip(r) {
            *w = (*w).max(v.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = line(columns);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn synth(ctx: Ctx, seed: u64, out: Option<PathBuf>, spec: &SpecArgs) -> Result<()> {
    let root = out.unwrap_or_else(|| ctx.data_root());
    let ds = generate_synthetic(&root, seed, &spec.spec()).map_err(|e| match e {
        SynthError::InvalidSpec(_) => exit(USAGE, e.to_string()),
        e => e.into(),
    })?;
    let json = ds.manifest.to_json();
    println!("{json}");
    eprintln!("dataset {} written to {}", ds.subset, ds.root.join(&ds.subset).display());
    eprintln!("manifest sha256 {}", hex::encode(Sha256::digest(json.as_bytes())));
    Ok(())
}

async fn bench_cmd(ctx: Ctx, which: BenchCommand) -> Result<()> {
    match which {
        BenchCommand::Serialization { triples, seed } => {
            let rows = bench::bench_serialization(triples, seed).map_err(|e| exit(USAGE, e.to_string()))?;
            if ctx.json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("{:<12}{:>12}{:>14}", "format", "time (s)", "size (MiB)");
                for r in &rows {
                    println!("{:<12}{:>12.4}{:>14.3}", r.format, r.seconds, r.bytes as f64 / (1024.0 * 1024.0));
                }
            }
        }
        BenchCommand::Memory { max, step, chunk, seed } => {
            let plain = bench::memory_profile(max, step, None, seed).map_err(|e| exit(USAGE, e.to_string()))?;
            let chunked = match chunk {
                Some(0) => return Err(exit(USAGE, "chunk size must be at least 1")),
                Some(b) => Some(bench::memory_profile(max, step, Some(b), seed)?),
                None => None,
            };
            if ctx.json {
                println!("{}", serde_json::json!({ "unchunked": plain, "chunked": chunked }));
            } else {
                print!("{:>14}{:>16}{:>16}", "triples", "peak (MiB)", "peak triples");
                if chunked.is_some() {
                    print!("{:>20}{:>22}", "chunked peak (MiB)", "chunked peak triples");
                }
                println!();
                for (i, p) in plain.iter().enumerate() {
                    print!("{:>14}{:>16.3}{:>16}", p.triples_added, p.peak_bytes as f64 / (1024.0 * 1024.0), p.peak_triples);
                    if let Some(c) = chunked.as_ref().and_then(|c| c.get(i)) {
                        print!("{:>20.3}{:>22}", c.peak_bytes as f64 / (1024.0 * 1024.0), c.peak_triples);
                    }
                    println!();
                }
            }
        }
        BenchCommand::Corpus { count, seed, parallel, csv, spec } => {
            let report = corpus_bench(&ctx, count, seed, parallel, &spec).await?;
            if let Some(path) = &csv {
                std::fs::write(path, stats::summary_csv(&report.summary)).with_context(|| format!("writing {}", path.display()))?;
            }
            if ctx.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", stats::render_table(&report.summary, &bench::REFERENCE_MEANS));
                println!("{} questions, {} failed, {:.2} s", report.records.len(), report.failures(), report.wall_seconds);
            }
        }
    }
    Ok(())
}

async fn corpus_bench(ctx: &Ctx, count: usize, seed: u64, parallel: bool, spec: &SpecArgs) -> Result<CorpusReport> {
    let _tmp;
    let (ds, manifest) = match &ctx.dataset {
        Some(ds) => {
            let root = ds.root.clone().ok_or_else(|| exit(USAGE, "corpus bench needs a local dataset"))?;
            let path = root.join(&ds.subset).join("manifest.json");
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let manifest: Manifest = serde_json::from_str(&text)?;
            (ds.clone(), manifest)
        }
        None => {
            let dir = tempfile::tempdir()?;
            let synth = generate_synthetic(dir.path(), seed, &spec.spec()).map_err(|e| exit(USAGE, e.to_string()))?;
            _tmp = dir;
            (DatalakeConfig::columnar(&synth.root, &synth.subset), synth.manifest)
        }
    };
    let lake = ds.open().map_err(|e| exit(UNREACHABLE, e.to_string()))?;
    let month = TimeWindow::new(manifest.month_start, manifest.month_end)?;
    let jobs = lake.fetch_jobs(&JobSelector::window(month)).await.map_err(|e| exit(UNREACHABLE, e.to_string()))?;
    let questions = corpus::generate_corpus(&manifest, &jobs, count, seed);
    let mut config = ctx.config.clone();
    config.datalake = None;
    let backend = Backend::new(config).map_err(chat_exit)?;
    backend.select_dataset(ds).await.map_err(chat_exit)?;
    Ok(if parallel {
        bench::run_corpus_parallel(&backend, &questions).await
    } else {
        bench::run_corpus(&backend, &questions).await
    })
}
