use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use negcomp_annotate::ServiceConfig;
use negcomp_core::experiment::{
    export_report, parse_arms, reassess, resume_run, run_experiment, LabelSource, Report, RunManifest, RunSummary,
};
use negcomp_core::llm_gateway::{BackendKind, BackendSpec};
use negcomp_core::triple_store::{load_triples, write_rejects, TripleFormat};
use negcomp_core::{sample_triples, Gateway, Relation, RunConfig, SampleSpec, TemplateRegistry};

#[derive(Parser)]
#[command(name = "negcomp", version, about = "Negated complementary commonsense question experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a triple file and write the accepted triples as JSON lines.
    Ingest {
        /// Input triples, TSV (head, relation, tail) or JSON lines.
        input: PathBuf,
        /// Output store (JSON lines). Rejected rows go to <out>.rejects.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Question template file; defaults to the bundled templates.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Draw a fixed number of triples per relation.
    Sample {
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_relation: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated relation names; all relations by default.
        #[arg(long)]
        relations: Option<String>,
    },
    /// Start a new run.
    Run(RunArgs),
    /// Finish the incomplete work items of a run.
    Resume {
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the self-assessment filter over a finished run.
    Assess {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score a run against closed-world answer sets.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        /// JSON lines of {"question_id","U","V","A"}, keyed by triple id.
        #[arg(long)]
        worlds: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Human annotation service.
    Annotate {
        #[command(subcommand)]
        command: AnnotateCommand,
    },
    /// Print accuracy tables for a run.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Judge with closed-world answer sets instead of human labels.
        #[arg(long, conflicts_with = "labels")]
        oracle: Option<PathBuf>,
        /// Label file; defaults to labels.jsonl in the run directory.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnnotateCommand {
    /// Serve labeling tasks for a run over HTTP.
    Serve {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 9)]
        required_annotators: usize,
        /// Shared token required in the x-annotation-token header.
        #[arg(long, env = "NEGCOMP_ANNOTATION_TOKEN")]
        token: Option<String>,
        /// Built annotation UI to serve at /.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Shuffle seed used when the batch is first built.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Triple store; overrides the config.
    #[arg(long)]
    triples: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated arms: ours, ours-wo-pp, ours-wo-nl-pp, few-shot.
    #[arg(long)]
    arms: Option<String>,
    /// Run directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_relation: Option<usize>,
    #[arg(long)]
    responses: Option<u32>,
}

#[derive(Args)]
struct BackendArgs {
    /// `mock:<script.jsonl>` or an http(s) completion endpoint URL.
    #[arg(long)]
    backend: Option<String>,
    /// Model name for an http backend.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key for an http backend.
    #[arg(long)]
    api_key_env: Option<String>,
}

impl BackendArgs {
    fn spec(&self, base: Option<&BackendSpec>) -> Result<Option<BackendSpec>> {
        let Some(raw) = &self.backend else {
            if self.model.is_some() || self.api_key_env.is_some() {
                bail!("--model and --api-key-env need --backend");
            }
            return Ok(None);
        };
        let kind = if let Some(script) = raw.strip_prefix("mock:") {
            BackendKind::ScriptedMock { script: script.into() }
        } else if raw.starts_with("http://") || raw.starts_with("https://") {
            BackendKind::RemoteHttp {
                endpoint: raw.clone(),
                model: self.model.clone().context("--model is required for an http backend")?,
                api_key_env: self.api_key_env.clone(),
                timeout_secs: 60,
            }
        } else {
            bail!("--backend must be mock:<script> or an http(s) URL, got {raw:?}");
        };
        let mut spec = base.cloned().unwrap_or_else(|| BackendSpec::scripted(""));
        spec.kind = kind;
        Ok(Some(spec))
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Ingest { input, out, templates } => ingest(&input, &out, templates.as_deref()),
        Command::Sample {
            store,
            out,
            per_relation,
            seed,
            relations,
        } => sample(&store, &out, per_relation, seed, relations.as_deref()),
        Command::Run(args) => run(args),
        Command::Resume { out } => {
            let summary = resume_run(&out)?;
            print_summary(&summary)
        }
        Command::Assess { out, backend } => {
            let manifest = RunManifest::load(&out)?;
            let spec = backend.spec(Some(&manifest.config.backend))?.unwrap_or(manifest.config.backend);
            let outcome = reassess(&out, Arc::new(Gateway::from_spec(&spec)?))?;
            println!("assessed {} answers, kept {}", outcome.assessed, outcome.kept);
            Ok(())
        }
        Command::Evaluate { out, worlds, json } => report(&out, LabelSource::Oracle(worlds), json.as_deref()),
        Command::Report {
            out,
            oracle,
            labels,
            json,
        } => {
            let source = match oracle {
                Some(worlds) => LabelSource::Oracle(worlds),
                None => LabelSource::Annotations(labels),
            };
            report(&out, source, json.as_deref())
        }
        Command::Annotate {
            command:
                AnnotateCommand::Serve {
                    out,
                    addr,
                    required_annotators,
                    token,
                    ui,
                    seed,
                },
        } => {
            let mut config = ServiceConfig::new(out);
            config.required_annotators = required_annotators;
            config.token = token;
            config.ui_dir = ui;
            config.seed = seed;
            serve(addr, config)
        }
    }
}

fn ingest(input: &Path, out: &Path, templates: Option<&Path>) -> Result<()> {
    let registry = match templates {
        Some(p) => TemplateRegistry::load(p)?,
        None => TemplateRegistry::default_templates(),
    };
    let outcome = load_triples(input, TripleFormat::from_path(input), &registry)?;
    negcomp_core::jsonl::write_all(out, &outcome.triples)?;
    let rejects = out.with_extension("rejects.jsonl");
    write_rejects(&rejects, &outcome.rejects)?;
    println!(
        "accepted {} triples into {}, rejected {} (see {})",
        outcome.triples.len(),
        out.display(),
        outcome.rejects.len(),
        rejects.display()
    );
    Ok(())
}

fn sample(store: &Path, out: &Path, per_relation: usize, seed: u64, relations: Option<&str>) -> Result<()> {
    let outcome = load_triples(store, TripleFormat::from_path(store), &TemplateRegistry::default_templates())?;
    let spec = SampleSpec {
        per_relation_count: per_relation,
        seed,
        relations: relations.map(|list| {
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Relation>().unwrap_or_else(|never| match never {}))
                .collect()
        }),
    };
    let sampled = sample_triples(&outcome.triples, &spec)?;
    negcomp_core::jsonl::write_all(out, &sampled)?;
    println!("sampled {} triples into {}", sampled.len(), out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let triples = args.triples.clone().context("--triples is required without --config")?;
            let backend = args
                .backend
                .spec(None)?
                .context("--backend is required without --config")?;
            RunConfig::new(triples, PathBuf::new(), backend)
        }
    };
    if let Some(spec) = args.backend.spec(Some(&config.backend))? {
        config.backend = spec;
    }
    if let Some(t) = args.triples {
        config.triples = t;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    if let Some(seed) = args.seed {
        config.sample.seed = seed;
    }
    if let Some(arms) = args.arms {
        config.arms = parse_arms(&arms)?;
    }
    if let Some(n) = args.per_relation {
        config.sample.per_relation_count = n;
    }
    if let Some(n) = args.responses {
        config.responses_per_question = n;
    }
    if config.out_dir.as_os_str().is_empty() {
        bail!("set --out or out_dir in the config");
    }
    let summary = run_experiment(&config)?;
    print_summary(&summary)
}

fn print_summary(summary: &RunSummary) -> Result<()> {
    let manifest = RunManifest::load(&summary.dir)?;
    println!("run {} in {}", summary.run_id, summary.dir.display());
    println!(
        "executed {} work items, {} failed; run {}",
        summary.executed_items,
        summary.failed_items,
        if summary.complete { "complete" } else { "INCOMPLETE (use `negcomp resume`)" }
    );
    for c in &manifest.counts {
        if let (Some(arm), Some(form)) = (c.arm, c.form) {
            println!(
                "  {:<14} {:<22} answers {:>4}/{:<4} retained {:>4} dropped {:>4} no-answer {:>3} retries {:>3} salvaged {:>3}",
                arm.display_name(),
                form.slug(),
                c.answers,
                c.expected,
                c.retained,
                c.dropped,
                c.no_answer,
                c.temperature_retries,
                c.salvaged
            );
        }
    }
    Ok(())
}

fn report(dir: &Path, source: LabelSource, json: Option<&Path>) -> Result<()> {
    let report: Report = export_report(dir, &source)?;
    print!("{}", report.render_text());
    if let Some(path) = json {
        let body = serde_json::to_string_pretty(&report)?;
        std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("annotation service listening on http://{}", listener.local_addr()?);
        negcomp_annotate::serve(listener, config, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
