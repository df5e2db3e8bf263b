use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lowrank_shield::{Error, Result};
use lowrank_shield_cli::commands::{
    cmd_attack, cmd_bench, cmd_defend, cmd_gen, cmd_sweep, cmd_train, AttackArgs, BenchArgs,
    DefendArgs, GenArgs, SweepArgs, TrainArgs,
};
use lowrank_shield_cli::exit_code;

#[derive(Parser)]
#[command(
    name = "lowrank-shield",
    version,
    about = "Defend image classifiers against adversarial perturbations via low-rank tensor reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic low-rank labeled image dataset
    Gen {
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Number of classes
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Images per class
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        /// Image width in pixels
        #[arg(long, default_value_t = 32)]
        width: usize,
        /// Image height in pixels
        #[arg(long, default_value_t = 32)]
        height: usize,
        /// Spatial multilinear ranks of the class templates, as "k1,k2"
        #[arg(long, default_value = "4,4")]
        ranks: String,
        /// Per-pixel Gaussian noise level
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        /// Fraction of each class held out as the test split
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// RNG seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train a surrogate classifier (linear-softmax, or a one-hidden-layer
    /// network with --hidden) on the train split
    Train {
        /// Dataset directory (must contain manifest.tsv)
        #[arg(long)]
        data: PathBuf,
        /// Output model file (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Hidden-layer width (0 = linear-softmax surrogate). The default
        /// learning rate suits the linear model; the hidden-layer model
        /// typically needs a much smaller one (around 0.01 at 32x32x3)
        #[arg(long, default_value_t = 0)]
        hidden: usize,
        /// Training epochs
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        /// Learning rate
        #[arg(long, default_value_t = 1.0)]
        lr: f64,
        /// Shuffling seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write adversarially perturbed copies of a dataset split
    Attack {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// Output dataset directory of attacked images
        #[arg(long)]
        out: PathBuf,
        /// Attack name: fgsm, ifgsm, or pgd
        #[arg(long)]
        attack: String,
        /// Perturbation budget in [0,1] pixel units
        #[arg(long, default_value_t = 4.0 / 255.0)]
        eps: f64,
        /// Iterated-FGSM step size
        #[arg(long, default_value_t = 1.0 / 255.0)]
        alpha: f64,
        /// PGD step size
        #[arg(long, default_value_t = 1.0 / 255.0)]
        tau: f64,
        /// Iteration count for ifgsm/pgd
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Seed for randomized starts
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which split to attack: train, test, or all
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sanitize a dataset with a defense configuration
    Defend {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Output dataset directory of defended images
        #[arg(long)]
        out: PathBuf,
        /// Defense configuration string, e.g.
        /// "decomposition=tensor-train representation=4-mode batch=5 ranks=5,12,3 seed=0"
        #[arg(long)]
        config: String,
        /// Which split to defend: train, test, or all
        #[arg(long, default_value = "all")]
        split: String,
        /// Per-tensor report CSV path (default: <out>/defense_report.csv)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run attacks x defense configs and write an accuracy/runtime CSV
    Bench {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Defense configuration string (repeatable)
        #[arg(long = "config", required = true)]
        configs: Vec<String>,
        /// Comma-separated attack names
        #[arg(long, value_delimiter = ',', default_value = "fgsm,ifgsm,pgd")]
        attacks: Vec<String>,
        /// Perturbation budget in [0,1] pixel units
        #[arg(long, default_value_t = 8.0 / 255.0)]
        eps: f64,
        /// Iterated-FGSM step size
        #[arg(long, default_value_t = 2.0 / 255.0)]
        alpha: f64,
        /// PGD step size
        #[arg(long, default_value_t = 2.0 / 255.0)]
        tau: f64,
        /// Iteration count for ifgsm/pgd
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Seed for attacks and defenses
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which split to evaluate: train, test, or all
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sweep the middle tensor-train rank across batch sizes
    Sweep {
        /// Dataset directory
        #[arg(long)]
        data: PathBuf,
        /// Trained model file
        #[arg(long)]
        model: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Attack to defend against
        #[arg(long, default_value = "pgd")]
        attack: String,
        /// Perturbation budget in [0,1] pixel units
        #[arg(long, default_value_t = 8.0 / 255.0)]
        eps: f64,
        /// Iterated-FGSM step size
        #[arg(long, default_value_t = 2.0 / 255.0)]
        alpha: f64,
        /// PGD step size
        #[arg(long, default_value_t = 2.0 / 255.0)]
        tau: f64,
        /// Iteration count for ifgsm/pgd
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Seed for attacks and defenses
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated batch sizes
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
        batches: Vec<usize>,
        /// Smallest middle rank (inclusive)
        #[arg(long, default_value_t = 50)]
        rank_min: usize,
        /// Largest middle rank (inclusive)
        #[arg(long, default_value_t = 120)]
        rank_max: usize,
        /// Rank increment
        #[arg(long, default_value_t = 5)]
        rank_step: usize,
        /// Which split to evaluate: train, test, or all
        #[arg(long, default_value = "test")]
        split: String,
    },
}

/// Caps the global rayon pool from LOWRANK_SHIELD_THREADS (0 or unset = auto).
fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("LOWRANK_SHIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Error::config(format!(
            "LOWRANK_SHIELD_THREADS must be a non-negative integer, got `{raw}`"
        ))
    })?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config(format!("failed to configure thread pool: {e}")))
}

fn parse_rank_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::config(format!("--ranks expects \"k1,k2\", got `{s}`")));
    }
    let k1 = parts[0]
        .parse()
        .map_err(|_| Error::config(format!("invalid rank `{}`", parts[0])))?;
    let k2 = parts[1]
        .parse()
        .map_err(|_| Error::config(format!("invalid rank `{}`", parts[1])))?;
    Ok((k1, k2))
}

fn run() -> Result<()> {
    init_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Cmd::Gen {
            out,
            classes,
            per_class,
            width,
            height,
            ranks,
            sigma,
            test_fraction,
            seed,
        } => cmd_gen(&GenArgs {
            out,
            classes,
            per_class,
            width,
            height,
            ranks: parse_rank_pair(&ranks)?,
            sigma,
            test_fraction,
            seed,
        }),
        Cmd::Train {
            data,
            out,
            hidden,
            epochs,
            lr,
            seed,
        } => cmd_train(&TrainArgs {
            data,
            out,
            hidden,
            epochs,
            lr,
            seed,
        }),
        Cmd::Attack {
            data,
            model,
            out,
            attack,
            eps,
            alpha,
            tau,
            iters,
            seed,
            split,
        } => cmd_attack(&AttackArgs {
            data,
            model,
            out,
            attack,
            eps,
            alpha,
            tau,
            iters,
            seed,
            split,
        }),
        Cmd::Defend {
            data,
            out,
            config,
            split,
            report,
        } => cmd_defend(&DefendArgs {
            data,
            out,
            config,
            split,
            report,
        }),
        Cmd::Bench {
            data,
            model,
            out,
            configs,
            attacks,
            eps,
            alpha,
            tau,
            iters,
            seed,
            split,
        } => cmd_bench(&BenchArgs {
            data,
            model,
            out,
            configs,
            attacks,
            eps,
            alpha,
            tau,
            iters,
            seed,
            split,
        })
        .map(|_| ()),
        Cmd::Sweep {
            data,
            model,
            out,
            attack,
            eps,
            alpha,
            tau,
            iters,
            seed,
            batches,
            rank_min,
            rank_max,
            rank_step,
            split,
        } => cmd_sweep(&SweepArgs {
            data,
            model,
            out,
            attack,
            eps,
            alpha,
            tau,
            iters,
            seed,
            batches,
            rank_min,
            rank_max,
            rank_step,
            split,
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
