use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bihdtrans::harness::{self, DistortionMode, SWEEP_HEADER};
use bihdtrans::{Error, Model, Result};

#[derive(Parser)]
#[command(name = "bihdtrans", version, about = "Binary hyperdimensional transformer for time-series classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one split, evaluate on another, save the model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train_set: PathBuf,
        #[arg(long)]
        eval_set: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the training log, metrics, confusion matrix and predictions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        eval_set: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate at several dimensions.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train_set: PathBuf,
        #[arg(long)]
        eval_set: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized binarization-distortion trials.
    Distortion {
        #[arg(value_enum)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for summary.tsv, trials.tsv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a model's header.
    Info {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theorem1,
    Theorem2,
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            train_set,
            eval_set,
            model,
            seed,
            out,
        } => {
            let outcome = harness::run_train(&train_set, &eval_set, config.as_deref(), seed, Some(&model), |row| {
                log::info!(
                    "epoch {} loss {:.4} train accuracy {:.4} ({:.1}s)",
                    row.epoch,
                    row.mean_loss,
                    row.train_accuracy,
                    row.wall_seconds
                )
            })?;
            if let Some(dir) = out {
                harness::write_metrics(&outcome.eval, &dir)?;
                write(&dir.join("train_log.tsv"), &harness::training_log_tsv(&outcome.log))?;
            }
            print!("{}", outcome.eval.summary_tsv());
        }
        Command::Eval { model, eval_set, out } => {
            let report = harness::run_eval(&model, &eval_set)?;
            if let Some(dir) = out {
                harness::write_metrics(&report, &dir)?;
            }
            print!("{}", report.summary_tsv());
        }
        Command::Sweep {
            config,
            train_set,
            eval_set,
            dims,
            seed,
            out,
        } => {
            let rows = harness::run_sweep(&train_set, &eval_set, config.as_deref(), seed, &dims)?;
            let mut table = format!("{SWEEP_HEADER}\n");
            for r in &rows {
                table.push_str(&r.to_line());
                table.push('\n');
            }
            match out {
                Some(path) => write(&path, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Distortion {
            mode,
            config,
            seed,
            trials,
            out,
        } => {
            let mode = match mode {
                Mode::Theorem1 => DistortionMode::Theorem1,
                Mode::Theorem2 => DistortionMode::Theorem2,
            };
            let report = harness::run_distortion(mode, config.as_deref(), seed, trials)?;
            if let Some(dir) = out {
                harness::write_distortion_report(&report, &dir)?;
            }
            print!("{}", report.summary_tsv());
        }
        Command::Info { model } => {
            let m = Model::load(&model)?;
            let h = m.header();
            println!("field\tvalue");
            println!("dim\t{}", h.dim);
            println!("heads\t{}", h.heads);
            println!("length\t{}", h.length);
            println!("features\t{}", h.features);
            println!("levels\t{}", h.levels);
            println!("classes\t{}", h.classes);
            println!("seed\t{}", h.seed);
            println!("size_kb\t{}", m.size_kb());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
