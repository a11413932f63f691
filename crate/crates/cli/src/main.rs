//! `hmx`: desk-scale experiments for hierarchical-matrix compression of
//! matrices and network weights. Every command writes CSV files under `--out`.

mod commands;
mod output;
mod textio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmx_core::generate::MatrixKind;

#[derive(Parser, Debug)]
#[command(name = "hmx", version, about = "Adaptive error-bounded H-matrix experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every generator and initializer.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum KindArg {
    KernelBand,
    GeometricSpectrum,
    RankK,
    RandomDense,
}

#[derive(Args, Debug, Clone)]
pub struct MatrixArgs {
    #[arg(long, value_enum, default_value = "kernel-band")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Condition number for `geometric-spectrum`.
    #[arg(long, default_value_t = 1e6)]
    pub kappa: f64,
    /// Rank for `rank-k`.
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    /// Read the matrix from a text file instead of generating it.
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
}

impl MatrixArgs {
    pub fn kind(&self) -> MatrixKind {
        match self.kind {
            KindArg::KernelBand => MatrixKind::KernelBand,
            KindArg::GeometricSpectrum => MatrixKind::GeometricSpectrum { kappa: self.kappa },
            KindArg::RankK => MatrixKind::RankK { rank: self.rank },
            KindArg::RandomDense => MatrixKind::RandomDense,
        }
    }
}

/// Source of the trained network for `propagate` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct NetworkArgs {
    /// HMXN file written by `pinn`; trains the Poisson fixture when absent.
    #[arg(long)]
    pub network_file: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build one H-matrix and report storage, error and the per-level profile.
    Compress {
        #[command(flatten)]
        matrix: MatrixArgs,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Leaf-size floor; the library default when absent.
        #[arg(long)]
        min_block: Option<usize>,
        /// Also write the H-matrix as an HMX1 file.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Also write the source matrix as a text file readable by `--matrix-file`.
        #[arg(long)]
        save_matrix: Option<PathBuf>,
    },
    /// Median wall time of hierarchical and dense products on the kernel family.
    BenchMatvec {
        /// Sizes to time; repeat the flag for several.
        #[arg(long = "n", default_values_t = [512usize, 1024, 2048, 4096])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 21)]
        reps: usize,
    },
    /// Train the Poisson network and tabulate compression against accuracy.
    Pinn {
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.5, 0.3, 1e-1, 1e-2, 1e-3])]
        eps_ladder: Vec<f64>,
    },
    /// Check the error, perturbation and condition-number bounds; exits 1 on failure.
    Bounds {
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Seeds per family, counted from `--seed`.
        #[arg(long, default_value_t = 3)]
        count: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-4, 1e-6])]
        eps_ladder: Vec<f64>,
    },
    /// Tangent-kernel deviation against tolerance.
    Ntk {
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])]
        eps_ladder: Vec<f64>,
    },
    /// Output error as layers are compressed one after another.
    Propagate {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
        eps_ladder: Vec<f64>,
    },
    /// Compression ratio and task error for every compressor.
    Sweep {
        #[command(flatten)]
        network: NetworkArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.5, 0.3, 1e-1, 1e-2, 1e-3])]
        eps_ladder: Vec<f64>,
    },
}

/// Sorts descending and drops duplicates.
fn ladder(mut v: Vec<f64>) -> anyhow::Result<Vec<f64>> {
    if let Some(bad) = v.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        anyhow::bail!("tolerances must be positive and finite, got {bad}");
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    Ok(v)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let c = &cli.common;
    match cli.command {
        Command::Compress {
            matrix,
            eps,
            min_block,
            save,
            save_matrix,
        } => commands::compress(c, &matrix, eps, min_block, save.as_deref(), save_matrix.as_deref()).map(|_| true),
        Command::BenchMatvec { sizes, eps, reps } => commands::bench_matvec(c, &sizes, eps, reps).map(|_| true),
        Command::Pinn { steps, lr, eps_ladder } => commands::pinn(c, steps, lr, &ladder(eps_ladder)?).map(|_| true),
        Command::Bounds { n, count, eps_ladder } => commands::bounds(c, n, count, &ladder(eps_ladder)?),
        Command::Ntk { eps_ladder } => commands::ntk(c, &ladder(eps_ladder)?).map(|_| true),
        Command::Propagate { network, eps_ladder } => commands::propagate(c, &network, &ladder(eps_ladder)?).map(|_| true),
        Command::Sweep { network, eps_ladder } => commands::sweep(c, &network, &ladder(eps_ladder)?).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
