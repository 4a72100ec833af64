use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stokes_lod::config::{parse_order, Overrides};
use stokes_lod::experiments::{run_experiment, SolveOptions};
use stokes_lod::parallel::THREADS_ENV;
use stokes_lod::{Experiment, ExperimentConfig};

/// Multiscale solver for heterogeneous Stokes flow on the unit square.
#[derive(Parser, Debug)]
#[command(name = "stokes-lod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decay of whole-domain basis functions away from the central face.
    Decay(Common),
    /// Error of patch-localized basis functions against whole-domain ones.
    Localization(Common),
    /// Errors against the fine reference over a grid of coarse levels and patch orders.
    Convergence(Common),
    /// One solve with exported solution vectors.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Load the basis from a directory written by `--export-basis`.
        #[arg(long, value_name = "DIR")]
        basis: Option<PathBuf>,
        /// Write the basis to `<out>/basis`.
        #[arg(long)]
        export_basis: bool,
        /// Write the fine operators as Matrix Market files.
        #[arg(long)]
        export_matrices: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` file; flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Coarse levels, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    coarse: Option<Vec<u32>>,
    #[arg(long)]
    fine: Option<u32>,
    /// Level of the coefficient carrier mesh.
    #[arg(long)]
    eps: Option<u32>,
    /// Patch orders, e.g. `1,2,global`.
    #[arg(long, value_delimiter = ',', value_parser = parse_order)]
    ell: Option<Vec<usize>>,
    /// Write wall times instead of `nan`.
    #[arg(long)]
    timings: bool,
}

impl Common {
    fn overrides(self) -> Overrides {
        Overrides {
            coarse: self.coarse,
            fine: self.fine,
            eps: self.eps,
            ell: self.ell,
            seed: self.seed,
            out: self.out,
            threads: self.threads,
            timings: self.timings.then_some(true),
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> stokes_lod::Result<Vec<PathBuf>> {
    let (experiment, common, options) = match cli.command {
        Command::Decay(c) => (Experiment::Decay, c, SolveOptions::default()),
        Command::Localization(c) => (Experiment::Localization, c, SolveOptions::default()),
        Command::Convergence(c) => (Experiment::Convergence, c, SolveOptions::default()),
        Command::Solve {
            common,
            basis,
            export_basis,
            export_matrices,
        } => (
            Experiment::Solve,
            common,
            SolveOptions {
                basis_dir: basis,
                export_basis,
                export_matrices,
            },
        ),
    };
    let file = match &common.config {
        Some(path) => Overrides::from_file(path)?,
        None => Overrides::default(),
    };
    let config = ExperimentConfig::resolve(experiment, file.merge(common.overrides()))?;
    run_experiment(&config, &options)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
