use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deconav_core::correction::Collector;
use deconav_core::eval::{table_markdown, MetricsReport};
use deconav_core::pipeline::{
    mean_shortest_length, ExperimentConfig, Pipeline, PolicyKind, Split, SweepAxis,
};
use deconav_core::{Error, MemoryMode};

/// Memory-refined navigation experiments on synthetic grid worlds.
///
/// Settings come from the config file, then DECONAV_SEED, then flags.
#[derive(Debug, Parser)]
#[command(name = "deconav", version)]
struct Cli {
    /// TOML experiment config; missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite artifacts whose fingerprint does not match the config.
    #[arg(long, global = true)]
    force: bool,
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// First seed (also settable through DECONAV_SEED).
    #[arg(long, global = true)]
    base_seed: Option<u64>,
    #[arg(long, global = true)]
    seed_count: Option<u64>,
    #[arg(long, global = true)]
    train_episodes: Option<usize>,
    #[arg(long, global = true)]
    val_episodes: Option<usize>,
    #[arg(long, global = true)]
    long_episodes: Option<usize>,
    /// Memory bank size K.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    lambda_r: Option<f64>,
    /// Visual weight; the temporal weight becomes 1 - w_v.
    #[arg(long, global = true)]
    w_v: Option<f64>,
    /// Trust-region radius in meters.
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    t_max: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one world per seed.
    GenWorld,
    /// Sample the train and val splits.
    GenEpisodes,
    /// Build the long-horizon split from stitched val episodes.
    StitchLong,
    /// Train a policy (and anything it depends on).
    Train {
        #[arg(long, default_value = "sft")]
        policy: PolicyKind,
        #[arg(long)]
        memory_mode: Option<MemoryMode>,
    },
    /// Evaluate a policy on a split.
    Eval {
        #[arg(long, default_value = "sft")]
        policy: PolicyKind,
        #[arg(long)]
        memory_mode: Option<MemoryMode>,
        #[arg(long, default_value = "val")]
        split: Split,
        /// Also write per-step traces.
        #[arg(long)]
        trace: bool,
    },
    /// Collect trust-region corrections or matched DAgger labels.
    Collect {
        #[arg(long, default_value = "trust-region", value_parser = parse_collector)]
        collector: Collector,
    },
    /// Re-run the study for every value on one axis.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
    },
    /// Run the full pipeline and write all reports.
    Report,
}

fn parse_collector(s: &str) -> Result<Collector, String> {
    match s {
        "trust-region" => Ok(Collector::TrustRegion),
        "dagger" => Ok(Collector::Dagger),
        _ => Err(format!(
            "unknown collector `{s}` (expected trust-region or dagger)"
        )),
    }
}

fn load_config(cli: &Cli) -> deconav_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    let o = &cli.overrides;
    if let Some(v) = o.base_seed {
        cfg.base_seed = v;
    }
    if let Some(v) = o.seed_count {
        cfg.seed_count = v;
    }
    if let Some(v) = o.train_episodes {
        cfg.counts.train = v;
    }
    if let Some(v) = o.val_episodes {
        cfg.counts.val = v;
    }
    if let Some(v) = o.long_episodes {
        cfg.counts.long_horizon = v;
    }
    if let Some(v) = o.k {
        cfg.refine.k = v;
    }
    if let Some(v) = o.lambda_r {
        cfg.refine.lambda_r = v;
    }
    if let Some(v) = o.w_v {
        cfg.refine.w_v = v;
        cfg.refine.w_t = 1.0 - v;
    }
    if let Some(v) = o.tau {
        cfg.collection.tau = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = o.t_max {
        cfg.t_max = v;
        cfg.collection.t_max = v;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    match &cli.command {
        Command::Train {
            memory_mode: Some(m),
            ..
        }
        | Command::Eval {
            memory_mode: Some(m),
            ..
        } => {
            cfg.memory_mode = *m;
        }
        _ => {}
    }
    Ok(cfg)
}

fn metrics_line(m: &MetricsReport) -> String {
    format!(
        "n={} SR={:.3} SPL={:.3} NE={:.2} OS={:.3} nDTW={:.3} fingerprint={}",
        m.n_episodes, m.sr, m.spl, m.ne, m.os, m.ndtw, m.fingerprint
    )
}

fn run(cli: &Cli, p: &Pipeline) -> deconav_core::Result<()> {
    let cfg = p.config();
    let mode = cfg.memory_mode;
    for seed in cfg.seeds() {
        match &cli.command {
            Command::GenWorld => {
                let (w, fp) = p.world(seed)?;
                println!(
                    "seed {seed}: world {}x{} with {} landmarks ({fp})",
                    w.width,
                    w.height,
                    w.landmarks.len()
                );
            }
            Command::GenEpisodes => {
                let d = p.episodes(seed)?;
                println!(
                    "seed {seed}: {} train, {} val episodes ({})",
                    d.train.len(),
                    d.val.len(),
                    d.episodes_fp
                );
            }
            Command::StitchLong => {
                let d = p.episodes(seed)?;
                let (long, fp) = p.long_split(&d)?;
                println!(
                    "seed {seed}: {} long-horizon episodes, mean shortest length {:.2} m ({fp})",
                    long.len(),
                    mean_shortest_length(&long)
                );
            }
            Command::Train { policy, .. } => {
                let d = p.episodes(seed)?;
                let t = p.policy(&d, *policy, mode)?;
                println!("seed {seed}: {} ({})", t.name, t.fingerprint);
            }
            Command::Eval {
                policy,
                split,
                trace,
                ..
            } => {
                let d = p.episodes(seed)?;
                let t = p.policy(&d, *policy, mode)?;
                if *trace {
                    let (m, path) = p.evaluate_traced(&d, &t, *split, mode)?;
                    println!(
                        "seed {seed}: {}@{mode} on {}: {}",
                        t.name,
                        split.name(),
                        metrics_line(&m)
                    );
                    println!("seed {seed}: trace written to {}", path.display());
                } else {
                    let m = p.evaluate(&d, &t, *split, mode)?;
                    println!(
                        "seed {seed}: {}@{mode} on {}: {}",
                        t.name,
                        split.name(),
                        metrics_line(&m)
                    );
                }
            }
            Command::Collect { collector } => {
                let d = p.episodes(seed)?;
                let c = p.corrections(&d, *collector)?;
                println!(
                    "seed {seed}: {} pairs in {} ({})",
                    c.data.len(),
                    c.name,
                    c.fingerprint
                );
            }
            Command::Sweep { .. } | Command::Report => break,
        }
    }
    match &cli.command {
        Command::Sweep { axis } => {
            let rows = p.sweep(*axis)?;
            print!(
                "{}",
                table_markdown(&format!("Sweep over {}", axis.name()), &rows)
            );
            println!("reports written to {}", p.root().join("reports").display());
        }
        Command::Report => {
            let r = p.run()?;
            for (title, rows) in [
                ("Modules", &r.modules),
                ("Memory mode", &r.memory),
                ("Trust region vs DAgger at matched pairs", &r.dagger),
                ("Long-horizon split", &r.long_horizon),
            ] {
                println!("{}", table_markdown(title, rows));
            }
            println!("reports written to {}", p.root().join("reports").display());
        }
        _ => {}
    }
    Ok(())
}

fn fail(stage: &str, err: &Error) -> ExitCode {
    eprintln!("deconav: {stage} failed: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pipeline = load_config(&cli).and_then(|cfg| Pipeline::open(cfg, cli.force));
    let pipeline = match pipeline {
        Ok(p) => p.verbose(!cli.quiet),
        Err(e) => return fail("config", &e),
    };
    match run(&cli, &pipeline) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.stage().unwrap_or("pipeline");
            match e {
                Error::Stage { source, .. } => fail(stage, &source),
                e => fail(stage, &e),
            }
        }
    }
}
