use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mc_mimo::derivcheck::check_derivatives;
use mc_mimo::experiment::{summarize, write_outputs};
use mc_mimo::{run_experiment, ExperimentSpec, Scheme, SweepAxis, SystemConfig};

#[derive(Parser)]
#[command(name = "mc-mimo", about = "Movable-antenna MIMO capacity under mutual coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Antennas,
    Snr,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of schemes.
    Run {
        /// key = value scenario file; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        realizations: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "c-ma,nc-ma,ula,cla")]
        schemes: Vec<Scheme>,
        #[arg(long, value_enum)]
        sweep: Option<Sweep>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Write per-run convergence traces.
        #[arg(long)]
        trace: bool,
        /// Also report NC-MA layouts evaluated with coupling.
        #[arg(long)]
        audit: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare analytic derivatives against finite differences.
    CheckDerivatives {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    Version,
}

fn run(cli: Cli) -> mc_mimo::Result<()> {
    match cli.command {
        Command::Version => println!("mc-mimo {}", env!("CARGO_PKG_VERSION")),
        Command::CheckDerivatives { trials, seed } => {
            println!("{}", check_derivatives(trials, seed)?);
        }
        Command::Run {
            config,
            seed,
            realizations,
            out,
            schemes,
            sweep,
            values,
            trace,
            audit,
            threads,
        } => {
            let base = match config {
                Some(path) => SystemConfig::load(&path)?,
                None => SystemConfig::default(),
            };
            let mut spec = ExperimentSpec::new(base);
            if let Some(s) = seed {
                spec.seed = s;
            }
            spec.num_realizations = realizations;
            spec.schemes = schemes;
            spec.sweep = match sweep {
                None => SweepAxis::None,
                Some(Sweep::Antennas) => SweepAxis::Antennas,
                Some(Sweep::Snr) => SweepAxis::Snr,
            };
            spec.values = values;
            spec.audit = audit;
            spec.threads = threads;
            let output = run_experiment(&spec)?;
            for path in write_outputs(&out, &output, trace)? {
                eprintln!("wrote {}", path.display());
            }
            for (scheme, by_value) in summarize(&output.rows) {
                for (value, s) in by_value {
                    println!(
                        "{scheme:<12} {value:>6}  {:.4} +/- {:.4} bits/s/Hz  (n={}, errors={})",
                        s.mean_capacity_bits, s.ci95_capacity_bits, s.count, s.errors
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
