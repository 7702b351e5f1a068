use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use privrewrite::embedding::UnitVector;
use privrewrite::pipeline::{
    export_preferences, ingest, join_for_eval, read_rewrites, run_files, Engine, PipelineConfig, RunPaths,
};
use privrewrite::policy::{BackendKind, RemoteChatConfig};
use privrewrite::style_pool::load_state;

#[derive(Parser, Debug)]
#[command(name = "privrewrite", version, about = "Privacy-preserving text rewriting")]
struct Cli {
    /// TOML config file; unspecified keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Style pool snapshot.
    #[arg(long, global = true, default_value = "pool.snap")]
    pool: PathBuf,
    /// Generation backend: `mock-paraphraser` or `remote-chat`.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Endpoint for the remote-chat backend.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Extra gazetteer file (TSV: CATEGORY<TAB>surface); repeatable.
    #[arg(long = "gazetteer", global = true)]
    gazetteers: Vec<PathBuf>,
    /// More log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a corpus file and print an ingestion summary.
    Ingest { input: PathBuf },
    /// Rewrite a corpus, updating the pool snapshot.
    Rewrite {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to `<output>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write preference pairs here.
        #[arg(long)]
        prefs: Option<PathBuf>,
        /// Pre-insert these originals into the pool before rewriting.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Evaluate rewrites against their originals.
    Eval {
        /// Original corpus.
        #[arg(long)]
        input: PathBuf,
        /// Rewrite output file.
        #[arg(long)]
        rewrites: PathBuf,
        /// Line-delimited report output.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Comma-separated metric subset.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Dump id, labels and rewrite style vectors as TSV.
        #[arg(long)]
        export_embeddings: Option<PathBuf>,
    },
    /// Run the rewrite loop without persisting the pool and write preference pairs.
    ExportPrefs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Style pool utilities.
    Pool {
        #[command(subcommand)]
        command: PoolCommand,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        command: ConfigCommand,
    },
}

#[derive(Subcommand, Debug)]
enum PoolCommand {
    /// Print a summary of the pool snapshot.
    Inspect,
    /// Dump node vectors as TSV.
    ExportEmbeddings {
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum ConfigCommand {
    /// Print the full default configuration.
    PrintDefaults,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.eval.seed = s;
    }
    cfg.gazetteers.extend(cli.gazetteers.iter().cloned());
    match cli.backend.as_deref() {
        None => {}
        Some("mock" | "mock-paraphraser") => cfg.generation.backend = BackendKind::MockParaphraser,
        Some("remote-chat") => {
            let endpoint = match (&cli.endpoint, &cfg.generation.backend) {
                (Some(e), _) => e.clone(),
                (None, BackendKind::RemoteChat(c)) => c.endpoint.clone(),
                _ => bail!("--backend remote-chat needs --endpoint or a configured endpoint"),
            };
            cfg.generation.backend = BackendKind::RemoteChat(RemoteChatConfig {
                endpoint,
                api_key_env: "GEN_API_KEY".into(),
                timeout_ms: 60_000,
                max_in_flight: 4,
            });
        }
        Some(other) => bail!("unknown backend `{other}`"),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn vector_cell(v: &UnitVector) -> String {
    v.as_slice().iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// Returns `true` when some records failed.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Config {
            command: ConfigCommand::PrintDefaults,
        } => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(false)
        }
        Command::Ingest { input } => {
            let cfg = load_config(cli)?;
            let s = ingest(input, cfg.max_tokens).with_context(|| format!("ingesting {}", input.display()))?;
            println!(
                "{}",
                serde_json::json!({
                    "records": s.records.len(),
                    "dropped_too_long": s.dropped_too_long,
                    "malformed": s.malformed,
                })
            );
            Ok(!s.malformed.is_empty())
        }
        Command::Rewrite {
            input,
            output,
            manifest,
            prefs,
            warm_start,
        } => {
            let engine = Engine::new(load_config(cli)?)?;
            let paths = RunPaths {
                input: input.clone(),
                output: output.clone(),
                pool: cli.pool.clone(),
                manifest: manifest.clone().unwrap_or_else(|| RunPaths::default_manifest(output)),
                preferences: prefs.clone(),
                warm_start: warm_start.clone(),
            };
            let (res, _) = run_files(&engine, &paths)?;
            eprintln!(
                "rewrote {} record(s), {} failed, {} preference pair(s)",
                res.outputs.len(),
                res.failures.len(),
                res.pairs.len()
            );
            Ok(!res.failures.is_empty())
        }
        Command::Eval {
            input,
            rewrites,
            report,
            metrics,
            export_embeddings,
        } => {
            let mut cfg = load_config(cli)?;
            if !metrics.is_empty() {
                cfg.eval.metrics = metrics.clone();
            }
            let engine = Engine::new(cfg)?;
            let originals = ingest(input, engine.config().max_tokens)?;
            let pairs = join_for_eval(&originals.records, &read_rewrites(rewrites)?);
            if pairs.is_empty() {
                bail!("no rewrite matches an original id");
            }
            let rep = engine.evaluate(&pairs)?;
            print!("{}", rep.render_table());
            if let Some(p) = report {
                std::fs::write(p, rep.to_jsonl())?;
            }
            if let Some(p) = export_embeddings {
                export_eval_embeddings(&engine, &pairs, p)?;
            }
            Ok(rep.metrics.iter().any(|m| m.error.is_some()))
        }
        Command::ExportPrefs { input, output } => {
            let engine = Engine::new(load_config(cli)?)?;
            let recs = ingest(input, engine.config().max_tokens)?;
            let res = export_preferences(&engine, &recs.records, Some(&cli.pool), output)?;
            eprintln!(
                "wrote {} preference pair(s); {} record(s) without a pair, {} failed",
                res.pairs.len(),
                res.no_pair.len(),
                res.failures.len()
            );
            Ok(!res.failures.is_empty())
        }
        Command::Pool { command } => {
            let pool = load_state(&cli.pool).with_context(|| format!("loading {}", cli.pool.display()))?;
            match command {
                PoolCommand::Inspect => {
                    let st = pool.stats();
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&serde_json::json!({
                            "dim": pool.dim(),
                            "nodes": pool.len(),
                            "total_weight": pool.total_weight(),
                            "mean_edge_length": pool.mean_edge_length().ok(),
                            "stats": st,
                            "ring": pool.ring().len(),
                            "pending_refresh": pool.pending_refresh(),
                            "params": pool.params(),
                        }))?
                    );
                }
                PoolCommand::ExportEmbeddings { output } => {
                    let mut s = String::from("id\tweight\tparent\tsentence\tvector\n");
                    for n in pool.nodes() {
                        let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
                        let _ = writeln!(
                            s,
                            "{}\t{}\t{}\t{}\t{}",
                            n.id,
                            n.weight,
                            parent,
                            serde_json::to_string(&n.sentence)?,
                            vector_cell(&n.emb)
                        );
                    }
                    std::fs::write(output, s)?;
                }
            }
            Ok(false)
        }
    }
}

fn export_eval_embeddings(engine: &Engine, pairs: &[privrewrite::metrics::EvalPair], path: &Path) -> anyhow::Result<()> {
    let mut s = String::from("id\tauthor\tlabels\tvector\n");
    for p in pairs {
        let v = match engine.embedder().embed_style(&p.rewrite) {
            Ok(v) => vector_cell(&v),
            Err(_) => String::new(),
        };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            p.id,
            p.author.as_deref().unwrap_or(""),
            serde_json::to_string(&p.labels)?,
            v
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
