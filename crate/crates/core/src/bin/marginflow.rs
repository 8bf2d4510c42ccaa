use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use marginflow::harness::{self, ExperimentConfig, Fault, RunOptions};
use marginflow::kkt::svm_oracle;
use marginflow::Error;

#[derive(Parser)]
#[command(name = "marginflow", version, about = "Implicit-bias simulator and KKT certifier for adaptive optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trajectory.csv, summary.json, state.json.
    Run(RunArgs),
    /// Solve the max-margin problem of a linear config exactly.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Per-coordinate weights `s` of the objective `1/2 ||s * w||^2`.
        #[arg(long, value_delimiter = ',')]
        scaling: Option<Vec<f64>>,
    },
    /// Compare the final directions and margins of two runs.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Run the invariant suite on the bundled fixtures.
    Selfcheck {
        /// Deliberately break one component to confirm the suite notices.
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Print the version.
    Version,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "flow_time")]
    max_steps: Option<u64>,
    #[arg(long)]
    flow_time: Option<f64>,
    /// Continue from the state.json in this run directory.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn configure_threads() {
    if let Some(n) = std::env::var("MARGINFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run(a) => {
            let cfg = ExperimentConfig::from_path(&a.config)?;
            let opts = RunOptions {
                out_dir: a.out,
                seed: a.seed,
                max_steps: a.max_steps,
                flow_time: a.flow_time,
                resume: a.resume,
            };
            let out = harness::run_experiment(&cfg, &opts)?;
            let s = &out.summary;
            println!("wrote {}", out.out_dir.display());
            println!(
                "method {} steps {} clock {} loss {:e} gamma {} t1 {:?}",
                s.method, s.steps, s.clock, s.final_frame.loss, s.normalized_margin, s.t1
            );
            if let Some(o) = &s.oracle {
                println!("oracle angle {:.4} deg", o.angle_deg);
                if let Some(w) = o.weighted_angle_deg {
                    println!("weighted oracle angle {w:.4} deg");
                }
            }
            let failed = s.failed_invariants();
            if failed.is_empty() {
                println!("invariants: all applicable checks pass");
            } else {
                println!("invariants failed: {}", failed.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config, scaling } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let data = cfg.load_dataset()?;
            let s = scaling.unwrap_or_else(|| vec![1.0; data.dim()]);
            print_json(&svm_oracle(&data, &s)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { dir_a, dir_b } => {
            print_json(&harness::compare_runs(&dir_a, &dir_b)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selfcheck { inject_fault } => {
            let report = harness::selfcheck(inject_fault);
            for line in report.lines() {
                println!("{line}");
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Version => {
            println!("marginflow {}", marginflow::VERSION);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
