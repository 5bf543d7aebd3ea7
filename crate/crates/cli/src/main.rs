use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trajforge_cli::commands::{self, TrainMode};
use trajforge_cli::config::{load_config, partition_overrides, Override};
use trajforge_cli::experiment;

/// Synthetic-perception pipeline for pre-training trajectory forecasters
/// on pseudo-labeled tracks.
///
/// Any flag of the form `--<section>.<key> <value>` overrides the matching
/// config entry, e.g. `--tracker.max-age 3`. The TRAJFORGE_SEED environment
/// variable overrides the scene and training seeds.
#[derive(Parser)]
#[command(name = "trajforge", version, max_term_width = 100)]
struct Cli {
    /// Config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth scenes into a trajectory file.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes (default: scene.count from the config).
        #[arg(long)]
        count: Option<usize>,
        /// First scene index; offsets both ids and per-scene seeds.
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Simulate a detector profile over ground-truth trajectories.
    Detect {
        #[arg(long)]
        gt: PathBuf,
        /// Detector profile id from the config.
        #[arg(long)]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Associate detections into pseudo-labeled trajectories.
    Track {
        #[arg(long)]
        detections: PathBuf,
        /// Profile id recorded as the provenance of output tracks.
        #[arg(long, default_value = "unknown")]
        profile_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window trajectories into forecast samples.
    BuildDataset {
        /// Trajectory file(s); repeat to merge sources.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Keep only this per-trajectory fraction.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        fraction_seed: Option<u64>,
    },
    /// Train a forecaster on a sample file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// scratch, pretrain or finetune.
        #[arg(long, default_value = "scratch")]
        mode: String,
        /// Checkpoint to fine-tune from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a sample file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Score pseudo-labeled trajectories against ground truth.
    AssessQuality {
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecasting AP from tracked pasts against ground-truth futures.
    EvalE2e {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tracked: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a multi-seed experiment and write CSV/SVG reports.
    Experiment {
        /// ppt, quantity, diversity or generalization.
        mode: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    // config, input-file and argument problems are usage errors (exit 2);
    // anything else is a runtime failure (exit 1)
    let text = format!("{err:#}");
    text.contains("invalid config")
        || text.contains("config")
        || text.contains("No such file")
        || text.contains("not found")
        || text.contains("parsing")
        || text.contains("not a checkpoint")
        || text.contains("unknown")
}

fn run(cli: Cli, overrides: &[Override]) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let cfg = load_config(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Simulate { out, count, offset } => commands::cmd_simulate(&cfg, &out, count, offset),
        Command::Detect { gt, profile, out } => commands::cmd_detect(&cfg, &gt, &profile, &out),
        Command::Track {
            detections,
            profile_id,
            out,
        } => commands::cmd_track(&cfg, &detections, &profile_id, &out),
        Command::BuildDataset {
            input,
            out,
            fraction,
            fraction_seed,
        } => commands::cmd_build_dataset(&cfg, &input, &out, fraction, fraction_seed),
        Command::Train {
            data,
            val,
            mode,
            init,
            out,
            history,
        } => {
            let mode = match mode.as_str() {
                "scratch" => TrainMode::Scratch,
                "pretrain" => TrainMode::Pretrain,
                "finetune" => {
                    let init = init.ok_or_else(|| {
                        anyhow::anyhow!("finetune mode needs --init <checkpoint>")
                    })?;
                    if !init.exists() {
                        return Err(anyhow::anyhow!(
                            "checkpoint not found: {}",
                            init.display()
                        ));
                    }
                    TrainMode::Finetune { init }
                }
                other => return Err(anyhow::anyhow!("unknown train mode `{other}`")),
            };
            commands::cmd_train(&cfg, &data, val.as_deref(), mode, &out, history.as_deref())
        }
        Command::Eval {
            checkpoint,
            samples,
            out,
            out_csv,
        } => commands::cmd_eval(&cfg, &checkpoint, &samples, &out, out_csv.as_deref()),
        Command::AssessQuality { pseudo, gt, out } => {
            commands::cmd_assess_quality(&cfg, &pseudo, &gt, &out)
        }
        Command::EvalE2e {
            checkpoint,
            tracked,
            gt,
            out,
        } => commands::cmd_eval_e2e(&cfg, &checkpoint, &tracked, &gt, &out),
        Command::Experiment { mode, out_dir } => match mode.as_str() {
            "ppt" => experiment::run_ppt(&cfg, &out_dir),
            "quantity" => experiment::run_quantity(&cfg, &out_dir),
            "diversity" => experiment::run_diversity(&cfg, &out_dir),
            "generalization" => experiment::run_generalization(&cfg, &out_dir),
            other => Err(anyhow::anyhow!("unknown experiment mode `{other}`")),
        },
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match partition_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
