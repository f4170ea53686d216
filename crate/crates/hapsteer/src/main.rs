use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hapsteer::commands::{self, MetricsArgs};
use hapsteer::CliResult;

#[derive(Parser)]
#[command(name = "hapsteer", version, about = "Haptic shared steering simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every vision mode × guidance level combination.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        vision: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        guidance: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute lane-keeping, steering, gaze and eyelid metrics of a log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long = "lane-width")]
        lane_width: f64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        gaze: Option<PathBuf>,
        #[arg(long)]
        eyelid: Option<PathBuf>,
        /// Scenario config providing the course (default: curve negotiation).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as a one-row CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Time splitting baseline and comparison parts for the SDLP change.
        #[arg(long = "split-time")]
        split_time: Option<f64>,
    },
    /// Identify driver-model parameters from a log.
    Identify {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        init: PathBuf,
        /// `t,phi_target` file giving the driver's target steering angle.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export aligned signals from several runs as one wide CSV.
    Plotdata {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        signals: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let id = commands::simulate_cmd(&config, &out)?;
            println!("run {id} written to {}", out.display());
        }
        Command::Matrix { config, vision, guidance, out } => {
            let rows = commands::matrix_cmd(&config, &vision, &guidance, &out)?;
            for r in rows {
                if r.status == "ok" {
                    println!("{}: ok ({})", r.label, r.run_id);
                } else {
                    eprintln!("{}: {} ({})", r.label, r.status, r.message);
                }
            }
        }
        Command::Metrics { log, lane_width, report, gaze, eyelid, config, csv, split_time } => {
            let fields = commands::metrics_cmd(&MetricsArgs { log, lane_width, report, gaze, eyelid, config, csv, split_time })?;
            print!("{}", hapsteer::report::to_text(&fields));
        }
        Command::Identify { log, init, target, out } => {
            let res = commands::identify_cmd(&log, &init, target.as_deref(), &out)?;
            println!("fit T_d {:.2}%, phi {:.2}% after {} iterations", res.fit_td, res.fit_phi, res.iterations);
        }
        Command::Plotdata { runs, signals, out } => {
            let n = commands::plotdata_cmd(&runs, &signals, &out)?;
            println!("{n} columns written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
