use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kfchain::pipeline::{cmd_eval, cmd_gen, cmd_train, EvalMode, PipelineError, RunConfig, Stage};

/// Keyframe memory pipeline: generate demonstrations, train the detector,
/// evaluate detection and policies.
#[derive(Debug, Parser)]
#[command(name = "kfchain", version)]
struct Cli {
    /// Key-value config file; unset keys keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory. `KC_OUT` takes precedence when set.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; `0` uses every core. Never changes outputs.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// First rollout seed.
    #[arg(long, global = true, value_name = "K")]
    seed_offset: Option<u64>,
    /// Detector confidence threshold.
    #[arg(long, global = true, value_name = "F")]
    tau: Option<f64>,
    /// Frames below threshold before a provisional keyframe is committed.
    #[arg(long, global = true, value_name = "W")]
    window: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate expert demonstrations and the split manifest.
    Gen,
    /// Train stage 1 (encoder) or stage 2 (query network).
    Train {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
    },
    /// Evaluate detection or policies and write reports.
    Eval {
        #[arg(value_enum)]
        mode: Mode,
    },
    /// Run gen, both training stages and every evaluation.
    Run,
    /// Print the resolved configuration and its hash.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Detection,
    Ablation,
    Rollout,
    Sweep,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Detection => EvalMode::Detection,
            Mode::Ablation => EvalMode::Ablation,
            Mode::Rollout => EvalMode::Rollout,
            Mode::Sweep => EvalMode::Sweep,
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env_out = std::env::var_os("KC_OUT").filter(|v| !v.is_empty());
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(out) = env_out.map(PathBuf::from).or_else(|| cli.out.clone()) {
        overrides.push(("out", out.display().to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(("workers", w.to_string()));
    }
    if let Some(k) = cli.seed_offset {
        overrides.push(("rollout.seed_offset", k.to_string()));
    }
    if let Some(t) = cli.tau {
        overrides.push(("detector.tau", t.to_string()));
    }
    if let Some(w) = cli.window {
        overrides.push(("detector.window", w.to_string()));
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.trim(), v.trim().to_string()));
    }
    for (k, v) in overrides {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_eval(cfg: &RunConfig, mode: EvalMode) -> Result<(), PipelineError> {
    let out = cmd_eval(cfg, mode)?;
    println!("{}", mode.name());
    print!("{}", out.to_table());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = resolve(cli)?;
    log::info!("config {} -> {}", cfg.config_hash(), cfg.out.display());
    match &cli.command {
        Command::Gen => {
            let summary = cmd_gen(&cfg)?;
            for (task, n) in &summary.counts {
                println!("{task}: {n}");
            }
            println!("manifest: {}", summary.manifest.display());
        }
        Command::Train { stage } => {
            let stage = if *stage == 1 { Stage::One } else { Stage::Two };
            let summary = cmd_train(&cfg, stage)?;
            if let Some(last) = summary.log.epochs.last() {
                println!("final epoch {} loss {:.6}", last.epoch, last.mean_loss);
            }
            println!("checkpoint: {}", summary.checkpoint.display());
        }
        Command::Eval { mode } => print_eval(&cfg, (*mode).into())?,
        Command::Run => {
            cmd_gen(&cfg)?;
            cmd_train(&cfg, Stage::One)?;
            cmd_train(&cfg, Stage::Two)?;
            for mode in [EvalMode::Detection, EvalMode::Ablation, EvalMode::Rollout, EvalMode::Sweep] {
                print_eval(&cfg, mode)?;
            }
        }
        Command::Config => {
            print!("{}", cfg.to_kv());
            println!("# config_hash = {}", cfg.config_hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            eprintln!("{}", e.render());
            eprintln!("error: usage: {msg}");
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
