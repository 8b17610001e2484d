use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedsim_core::baseline::{effective_coefficients, solve_betas};
use fedsim_core::config::{parse_config, ExperimentConfig};
use fedsim_core::experiment::{run_experiment, sweep_gamma};
use fedsim_core::report::compare_runs;
use fedsim_core::timing::{afl_trunk_time_bounds, sfl_round_time};
use fedsim_core::Error;

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Discrete-event simulator for synchronous and asynchronous federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides FEDSIM_SEED and the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
        /// Write the event trace (time, kind, client per line).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the resolved configuration, defaults included, and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Compare metrics CSVs on the relative time axis.
    Compare {
        #[arg(required = true, num_args = 1..)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write gnuplot data blocks next to the report (`.dat`).
        #[arg(long)]
        plot_data: bool,
        /// Accuracy for time-to-target; defaults to the lowest final accuracy.
        #[arg(long)]
        target: Option<f64>,
        /// Slack allowed when deciding that one run has caught up with another.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Solve the baseline aggregation weights for an upload order.
    SolveBetas {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        /// Client ids in upload order (0-based).
        #[arg(long, value_delimiter = ',', required = true)]
        schedule: Vec<usize>,
    },
    /// Closed-form round or trunk duration.
    Timing {
        #[arg(long, value_enum)]
        mode: TimingMode,
        #[arg(long)]
        clients: usize,
        /// Compute time of the fastest client, in ticks.
        #[arg(long)]
        compute: u64,
        /// Slowdown of the slowest client relative to the fastest.
        #[arg(long, default_value_t = 1)]
        slowdown: u64,
        #[arg(long)]
        upload: u64,
        #[arg(long)]
        download: u64,
    },
    /// Run one configuration for several gamma values in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingMode {
    Sfl,
    Afl,
}

enum Failure {
    /// Bad configuration or arguments: exit status 1.
    Input(String),
    /// Failure while running: exit status 2.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut config = parse_config(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    } else if let Ok(raw) = std::env::var("FEDSIM_SEED") {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("FEDSIM_SEED must be a nonnegative integer, got `{raw}`")))?;
    }
    Ok(config)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, seed, out, trace, print_config } => {
            let config = load_config(&config, seed)?;
            if print_config {
                println!("{:#}", config.to_json());
                return Ok(());
            }
            let summary = run_experiment(&config, &out, trace.as_deref())?;
            println!("{summary}");
        }
        Command::Compare { csv, out, plot_data, target, tolerance } => {
            if csv.len() < 2 {
                return Err(Failure::Input(format!("compare needs at least two CSV files, got {}", csv.len())));
            }
            let comparison = compare_runs(&csv, target, tolerance)?;
            std::fs::write(&out, comparison.render()).map_err(|e| Failure::Runtime(Error::io(&out, e).to_string()))?;
            if plot_data {
                let path = out.with_extension("dat");
                std::fs::write(&path, comparison.plot_data())
                    .map_err(|e| Failure::Runtime(Error::io(&path, e).to_string()))?;
            }
        }
        Command::SolveBetas { alphas, schedule } => {
            let solved = solve_betas(&alphas, &schedule).map_err(|e| Failure::Input(e.to_string()))?;
            let naive = effective_coefficients(&alphas, &schedule).map_err(|e| Failure::Input(e.to_string()))?;
            println!("position\tclient\tbeta\tnaive_effective_weight");
            for (k, (&c, b)) in solved.schedule.iter().zip(&solved.betas).enumerate() {
                println!("{}\t{c}\t{b}\t{}", k + 1, naive.per_client[c]);
            }
            println!("naive weight left on the starting model: {}", naive.residual);
        }
        Command::Timing { mode, clients, compute, slowdown, upload, download } => {
            if clients == 0 || compute == 0 || slowdown == 0 {
                return Err(Failure::Input("clients, compute and slowdown must be positive".into()));
            }
            match mode {
                TimingMode::Sfl => println!("{}", sfl_round_time(clients, slowdown * compute, upload, download)),
                TimingMode::Afl => {
                    let (lo, hi) = afl_trunk_time_bounds(clients, compute, slowdown, upload, download)?;
                    println!("{lo}\t{hi}");
                }
            }
        }
        Command::Sweep { config, gammas, out_dir, seed } => {
            let config = load_config(&config, seed)?;
            for (gamma, summary) in sweep_gamma(&config, &gammas, &out_dir)? {
                println!("gamma {gamma}: {summary}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
