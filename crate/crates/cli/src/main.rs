use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use idvid::bench::{self, ExitCode, ProviderMode, ReportFormat, RunConfig};
use idvid::model::{Manifest, MetricName};
use idvid::providers::{run_conformance, Capability, ConformanceExpectations};
use idvid::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "idvid", version, about = "Curate object-centric video corpora and score identity preservation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "manifest.jsonl")]
    manifest: PathBuf,
    /// Parallel clip tasks (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// mock or live.
    #[arg(long, global = true)]
    providers: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Object Similarity miss penalty.
    #[arg(long, global = true)]
    penalty: Option<f64>,
    /// Comma-separated metric keys to compute, or `all`.
    #[arg(long, global = true)]
    metrics: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the curation pipeline over a corpus directory.
    Curate {
        /// Omit to resume the manifest without ingesting.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Two-stage captions and object tags for kept clips.
    Caption,
    /// Score generated videos against their references.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Merge scores into the manifest for pairs that name a clip.
        #[arg(long)]
        with_manifest: bool,
    },
    /// Leaderboard from eval output.
    Report {
        /// summary.json, a pair report, or a reports directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        second_best: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Provider diagnostics.
    Providers {
        #[command(subcommand)]
        action: ProvidersAction,
    },
    /// Write the built-in synthetic corpus and evaluation set.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ProvidersAction {
    /// Health plus the contract checks.
    Check {
        /// Capabilities that must be present.
        #[arg(long, value_delimiter = ',')]
        require: Vec<String>,
    },
}

fn parse_metrics(list: &str) -> Result<Vec<MetricName>> {
    if list.trim() == "all" {
        return Ok(MetricName::ALL.to_vec());
    }
    list.split(',').map(|s| s.trim().parse()).collect()
}

fn config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &g.providers {
        cfg.providers.mode = p.parse::<ProviderMode>()?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = g.penalty {
        cfg.metrics.object_similarity.penalty = p;
    }
    if let Some(m) = &g.metrics {
        cfg.metrics.enabled = parse_metrics(m)?.into_iter().collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(g: &Global) -> Result<usize> {
    match g.workers {
        Some(0) => Err(Error::Config("--workers must be >= 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn status(degraded: bool) -> ExitCode {
    if degraded {
        ExitCode::Degraded
    } else {
        ExitCode::Success
    }
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Curate { corpus } => {
            let cfg = config(g)?;
            let workers = workers(g)?;
            if let Some(c) = &corpus {
                if !c.is_dir() {
                    return Err(Error::Config(format!("corpus {} is not a directory", c.display())));
                }
            }
            let manifest = Manifest::open(&g.manifest)?;
            let provider = cfg.build_provider(None)?;
            let decoder = cfg.build_decoder();
            let summary = bench::run_curate(&cfg, &manifest, corpus.as_deref(), decoder.as_ref(), provider.as_ref(), workers)?;
            print_json(&summary)?;
            Ok(status(summary.is_degraded()))
        }
        Command::Caption => {
            let cfg = config(g)?;
            let workers = workers(g)?;
            if !g.manifest.exists() {
                return Err(Error::Config(format!("manifest {} does not exist", g.manifest.display())));
            }
            let manifest = Manifest::open(&g.manifest)?;
            let provider = cfg.build_provider(None)?;
            let decoder = cfg.build_decoder();
            let summary = bench::run_caption(&cfg, &manifest, decoder.as_ref(), provider.as_ref(), workers)?;
            print_json(&summary)?;
            Ok(status(summary.is_degraded()))
        }
        Command::Eval { pairs, out, with_manifest } => {
            let cfg = config(g)?;
            let workers = workers(g)?;
            let spec = bench::load_pairs(&pairs)?;
            let provider = cfg.build_provider(spec.scenes.as_deref())?;
            let decoder = cfg.build_decoder();
            let manifest = if with_manifest { Some(Manifest::open(&g.manifest)?) } else { None };
            let outcome = bench::run_eval(&cfg, &spec, &out, decoder.as_ref(), provider.as_ref(), manifest.as_ref(), workers)?;
            print_json(&outcome.systems)?;
            Ok(status(outcome.is_degraded()))
        }
        Command::Report { input, format, second_best, out } => {
            let format: ReportFormat = format.parse()?;
            let second_best = second_best || g.config.is_some() && config(g)?.metrics.second_best;
            let rows = bench::load_rows(&input)?;
            let text = bench::emit_report(&rows, format, second_best)?;
            write_or_print(&text, out.as_deref())?;
            Ok(ExitCode::Success)
        }
        Command::Providers { action: ProvidersAction::Check { require } } => {
            let cfg = config(g)?;
            let required = require
                .iter()
                .map(|r| serde_json::from_value::<Capability>(serde_json::Value::String(r.trim().into())))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("--require: {e}")))?;
            let provider = cfg.build_provider(None)?;
            let health = provider.health();
            let checks = run_conformance(provider.as_ref(), &ConformanceExpectations { dims: cfg.providers.dims, required });
            let passed = checks.iter().all(|c| c.passed);
            print_json(&serde_json::json!({
                "endpoint": match cfg.providers.mode { ProviderMode::Mock => "mock".to_string(), ProviderMode::Live => cfg.providers.endpoint.clone() },
                "health": health.as_ref().ok(),
                "checks": checks,
                "passed": passed,
            }))?;
            Ok(match health {
                Err(e) => ExitCode::for_error(&e),
                Ok(_) if passed => ExitCode::Success,
                Ok(_) => ExitCode::Internal,
            })
        }
        Command::SynthCorpus { out } => {
            let cfg = config(g)?;
            let layout = bench::synth::synth_corpus(&out, cfg.seed)?;
            print_json(&layout)?;
            Ok(ExitCode::Success)
        }
    }
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::for_error(&e)
        }
    };
    process::exit(code as i32);
}
