use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dbforge::config::RunConfig;
use dbforge::par;
use dbforge::pipeline::{self, SynthKind};
use dbforge::pref::Strategy;

const DEFAULT_CONFIG: &str = "dbforge.toml";

/// Turns a molecular property database into training corpora, preference
/// pairs and a multiple-choice benchmark.
#[derive(Parser)]
#[command(name = "dbforge", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to ./dbforge.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Ignored without the parallel feature.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Emit progress as JSON lines on stderr.
    #[arg(long, global = true)]
    progress_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and enrich the database, write the record cache.
    Ingest {
        /// Database file (.csv or .jsonl); overrides paths.database.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Filter, embed and split the template set.
    Templates {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
    },
    /// Write a CPT (types 1-5) or SFT (types 1-3) corpus.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long = "type")]
        type_tag: u8,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write preference pairs: rldbf, alt1..alt6 or ladder.
    Pref {
        #[arg(long, default_value = "rldbf")]
        strategy: Strategy,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the benchmark suite and its answer key.
    Bench {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        reps: Option<u8>,
    },
    /// Score model replies against an answer key.
    Score {
        /// JSONL of {question_id, reply_text}.
        #[arg(long)]
        answers: PathBuf,
        /// Defaults to the bench stage's answer_key.jsonl.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Every generation stage in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None if Path::new(DEFAULT_CONFIG).exists() => RunConfig::load(Path::new(DEFAULT_CONFIG))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    par::configure_workers(cli.workers);
    pipeline::set_progress_json(cli.progress_json);
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { input } => {
            if let Some(p) = input {
                cfg.paths.database = p;
            }
            let s = pipeline::run_ingest(&cfg)?;
            println!(
                "ingested {} records ({} rejected, {} values computed); train {}, out-domain {}",
                s.records,
                s.report.rejected.len(),
                s.enrich.values_computed,
                s.train,
                s.out_domain
            );
        }
        Command::Templates { eps, min_pts } => {
            if let Some(e) = eps {
                cfg.dbscan.eps = e;
            }
            if let Some(m) = min_pts {
                cfg.dbscan.min_pts = m;
            }
            let s = pipeline::run_templates(&cfg)?;
            println!(
                "{} templates loaded; removed {} duplicates, {} yes/no, {} blocked; {} train / {} test",
                s.loaded,
                s.filter.duplicates.len(),
                s.filter.yes_no.len(),
                s.filter.blocked.len(),
                s.split.train.len(),
                s.split.test.len()
            );
        }
        Command::Synth { kind, type_tag, out } => {
            let path = pipeline::run_synth(&cfg, kind, type_tag, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Pref { strategy, k, out } => {
            let r = pipeline::run_pref(&cfg, strategy, k, out.as_deref())?;
            println!(
                "{strategy}: {} pairs emitted, {} skipped, {} shortfall over {} groups",
                r.emitted, r.skipped, r.shortfall, r.groups
            );
        }
        Command::Bench { count, reps } => {
            if let Some(c) = count {
                cfg.bench.count = c;
            }
            if let Some(r) = reps {
                cfg.bench.reps = r;
            }
            let s = pipeline::run_bench(&cfg)?;
            println!("wrote {} questions in {} groups", s.questions, s.groups.len());
        }
        Command::Score { answers, key } => {
            let report = pipeline::run_score(&cfg, &answers, key.as_deref())
                .with_context(|| format!("scoring {}", answers.display()))?;
            print!("{}", dbforge::score::render_table(&report));
        }
        Command::Run => {
            let manifests = pipeline::run_all(&cfg)?;
            for (name, m) in manifests {
                println!("{name}: {} artifacts", m.artifacts.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
