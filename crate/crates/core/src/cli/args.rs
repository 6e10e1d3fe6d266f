use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::{cmd_eval, cmd_export, cmd_generate, cmd_train, cmd_transient, EvalOutcome, Run, RunConfig};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// Load voltage from (gate current, bias current, state).
    Iv,
    /// Critical and retrapping currents from (bias current, state).
    Switching,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Iv => "iv",
            Variant::Switching => "switching",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stochastic-mdn", version, about = "Mixture density network compact models for stochastic devices")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory of run directories (default: config out_dir, else ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate I-V and switching datasets from the ground-truth device.
    Generate,
    /// Train one model variant.
    Train {
        #[arg(long, value_enum, default_value = "iv")]
        variant: Variant,
        /// Dataset CSV (default: the run's generated dataset).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a trained model.
    Eval {
        #[arg(long, value_enum, default_value = "iv")]
        variant: Variant,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replay a drive waveform through the I-V model.
    Transient {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Waveform CSV (t_s,i_g_uA,i_b_uA); default: the configured triangular drive.
        #[arg(long)]
        waveform: Option<PathBuf>,
    },
    /// Emit the I-V model as Verilog-A.
    Export {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

/// Executes a parsed command line, reporting progress on stdout.
pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            return Err(crate::Error::validation("--config <path> is required"));
        }
    };
    let run = Run::open(config, cli.seed, cli.out.as_deref())?;
    println!("run directory {}", run.dir.display());
    match cli.command {
        Command::Generate => {
            let m = cmd_generate(&run)?;
            for f in &m.files {
                println!("{}: {} rows", f.path, f.rows.unwrap_or(0));
            }
        }
        Command::Train { variant, data } => {
            let out = cmd_train(&run, variant, data.as_deref())?;
            let first = out.loss_history.first().copied().unwrap_or(f64::NAN);
            let last = out.loss_history.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} model: {} epochs, loss {first:.6} -> {last:.6}",
                variant.name(),
                out.loss_history.len()
            );
            println!("final loss {last}");
        }
        Command::Eval {
            variant,
            weights,
            data,
        } => match cmd_eval(&run, variant, weights.as_deref(), data.as_deref())? {
            EvalOutcome::Iv {
                vs_empirical,
                vs_truth,
                ..
            } => {
                for (label, s) in [("empirical", &vs_empirical), ("ground truth", &vs_truth)] {
                    println!("vs {label}: mean MAE {:.3}%  mean R2 {:.4}", s.mean_mae_pct, s.mean_r2);
                    for (b, sc) in &s.per_bias {
                        println!("  i_b {b:>6} uA  MAE {:.3}%  R2 {:.4}", sc.mae_pct, sc.r2);
                    }
                }
            }
            EvalOutcome::Switching { coverage, .. } => {
                for r in &coverage {
                    println!(
                        "i_b {:>6} uA {:?}: mean {:.4} sd {:.4} coverage {:.3} (n={})",
                        r.i_b, r.state, r.mean, r.sd, r.coverage, r.n
                    );
                }
            }
        },
        Command::Transient { weights, waveform } => {
            let out = cmd_transient(&run, weights.as_deref(), waveform.as_deref())?;
            for (name, t) in &out.traces {
                println!(
                    "{name}: {} steps, {} q events, {} transitions",
                    t.len(),
                    t.q_events.len(),
                    t.transitions().len()
                );
                for (k, w) in &t.warnings {
                    println!("  warning at step {k}: {w}");
                }
            }
        }
        Command::Export { weights } => {
            let out = cmd_export(&run, weights.as_deref())?;
            println!(
                "wrote {} (max deviation {:e} V)",
                out.path.display(),
                out.max_deviation
            );
        }
    }
    Ok(())
}
