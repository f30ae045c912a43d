use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use microgrid_harness::artifacts::save_json;
use microgrid_harness::experiment::format_table;
use microgrid_harness::qtable_io::load_qtable;
use microgrid_harness::synth::{default_start, synth_trace, DiurnalProfile};
use microgrid_harness::trace::save_trace;
use microgrid_harness::{
    run_compare, run_dp, run_eval, run_train, CompareOptions, Prepared, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "microgrid",
    version,
    about = "Microgrid energy management with delayed Q-update"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic hourly trace as CSV.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 720)]
        hours: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one Q-learning policy.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the delayed update.
        #[arg(long)]
        vanilla: bool,
    },
    /// Solve the validation window exactly.
    Dp {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored Q-table on the validation window.
    Eval {
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare delayed-update, plain Q-learning and the optimum over several seeds.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use seeds 0..N instead of the configured list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Defaults to the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        save_qtables: bool,
    },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { seed, hours, out } => {
            let trace = synth_trace(seed, hours, default_start(), &DiurnalProfile::reference());
            save_trace(&out, &trace).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} records to {}", trace.len(), out.display());
        }
        Command::Train {
            config,
            out,
            seed,
            vanilla,
        } => {
            let cfg = load_config(config.as_ref())?;
            let prep = Prepared::new(&cfg)?;
            let mut hp = cfg.hyperparams;
            if let Some(s) = seed {
                hp.seed = s;
            }
            if vanilla {
                hp = hp.vanilla();
            }
            let summary = run_train(&prep, &hp, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary.result)?);
        }
        Command::Dp { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let summary = run_dp(&Prepared::new(&cfg)?, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary.result)?);
        }
        Command::Eval {
            qtable,
            config,
            out,
        } => {
            let cfg = load_config(config.as_ref())?;
            let prep = Prepared::new(&cfg)?;
            let (q, header) = load_qtable(&qtable)?;
            let summary = run_eval(&prep, &q, &header, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary.result)?);
        }
        Command::Compare {
            config,
            seeds,
            out,
            save_qtables,
        } => {
            let cfg = load_config(config.as_ref())?;
            let seeds: Vec<u64> = match seeds {
                Some(n) => (0..n).collect(),
                None => cfg.seeds.clone(),
            };
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let prep = Prepared::new(&cfg)?;
            let summary = run_compare(&prep, &seeds, &out, CompareOptions { save_qtables })?;
            save_json(&out.join("config.json"), &cfg)?;
            print!("{}", format_table(&summary));
        }
    }
    Ok(())
}
