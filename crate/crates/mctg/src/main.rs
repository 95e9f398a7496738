use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mctg::config::LoadedConfig;
use mctg::run::{Run, RunOptions};
use mctg::services::Mode;
use mctg::stages;
use mctg::Error;

#[derive(Parser)]
#[command(name = "mctg", version, about = "Build augmented multi-aspect instruction-tuning data and evaluate controllable generation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "mctg.toml")]
    config: PathBuf,
    /// Service mode; defaults to the config's `mode`, else live.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Cassette file; defaults to `<run dir>/cassette.jsonl`.
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    /// Worker threads; defaults to `services.max_in_flight`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Overrides the config's run label.
    #[arg(long, global = true)]
    label: Option<String>,
    /// Allow a stage to overwrite its previous outputs.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load the source datasets.
    Ingest,
    /// Run an augmentation pipeline.
    Augment {
        #[command(subcommand)]
        kind: AugmentKind,
    },
    /// Score and filter rewrite pairs.
    Filter,
    /// Build instruction-tuning pools.
    BuildIt,
    /// Assemble the configured training mixtures.
    Mix,
    /// Generate, classify and report.
    Eval {
        #[command(subcommand)]
        step: EvalStep,
    },
    /// Check the configuration and print the run directory it maps to.
    ValidateConfig,
}

#[derive(Subcommand)]
enum AugmentKind {
    Cross,
    Grained,
    Rewrite,
}

#[derive(Subcommand)]
enum EvalStep {
    Generate,
    Classify,
    Report {
        /// Extra baseline column: NAME=PATH to another run's eval/report.json.
        #[arg(long = "baseline", value_parser = parse_baseline)]
        baselines: Vec<(String, PathBuf)>,
    },
}

fn parse_baseline(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected NAME=PATH".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn execute(cli: Cli) -> Result<(), Error> {
    let g = cli.global;
    if let Command::ValidateConfig = cli.command {
        let mut cfg = LoadedConfig::load(&g.config)?;
        if let Some(seed) = g.seed {
            cfg.config.seed = seed;
        }
        if let Some(label) = g.label {
            cfg.config.run_label = label;
        }
        cfg.validate()?;
        println!("{}", g.out.join(mctg::run::run_dir_name(&cfg)?).display());
        return Ok(());
    }
    let run = Run::open(
        &g.config,
        RunOptions {
            mode: g.mode,
            cassette: g.cassette,
            workers: g.workers,
            seed: g.seed,
            out: Some(g.out),
            label: g.label,
            resume: g.resume,
        },
    )?;
    let result = match cli.command {
        Command::Ingest => stages::ingest::run(&run),
        Command::Augment { kind: AugmentKind::Cross } => stages::augment::cross(&run).map(drop),
        Command::Augment { kind: AugmentKind::Grained } => stages::augment::grained(&run).map(drop),
        Command::Augment { kind: AugmentKind::Rewrite } => stages::augment::rewrite(&run).map(drop),
        Command::Filter => stages::filter::run(&run).map(drop),
        Command::BuildIt => stages::build_it::run(&run).map(drop),
        Command::Mix => stages::mix::run(&run).map(drop),
        Command::Eval { step: EvalStep::Generate } => stages::eval::generate(&run).map(drop),
        Command::Eval { step: EvalStep::Classify } => stages::eval::classify(&run).map(drop),
        Command::Eval { step: EvalStep::Report { baselines } } => stages::eval::report(&run, &baselines).map(drop),
        Command::ValidateConfig => unreachable!(),
    };
    // keep whatever was recorded, even when the stage failed part-way
    let saved = run.finish();
    result.and(saved)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut error = serde_json::json!({"kind": e.kind(), "message": e.to_string()});
            if let Some(fp) = e.fingerprint() {
                error["fingerprint"] = fp.into();
            }
            eprintln!("{}", serde_json::json!({ "error": error }));
            ExitCode::FAILURE
        }
    }
}
