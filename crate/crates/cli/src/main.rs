use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedsim_cli::{cmd_compare, cmd_partition_report, cmd_run, RunOptions, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "fedsim", version, about = "Deterministic federated averaging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write history.csv, report.json and config.resolved.json
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Train sampled clients on N worker threads (0 = one per core)
        #[arg(long, value_name = "N")]
        parallel: Option<usize>,
    },
    /// Compare the accuracy of two report.json files
    Compare {
        federated: PathBuf,
        centralized: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
    /// Print per-client class histograms for a config's partition
    PartitionReport { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            parallel,
        } => cmd_run(&config, &RunOptions { output, parallel }).map(|outcome| {
            let r = &outcome.report;
            println!("wrote {}", outcome.output_dir.display());
            println!("federated accuracy {}", r.federated.accuracy);
            if let Some(gap) = &r.epsilon_gap {
                println!(
                    "centralized accuracy {}\ngap {} (epsilon {}): {}",
                    gap.v_sum,
                    gap.gap,
                    gap.epsilon,
                    if gap.pass { "PASS" } else { "FAIL" }
                );
            }
            outcome.exit_code
        }),
        Command::Compare {
            federated,
            centralized,
            epsilon,
        } => cmd_compare(&federated, &centralized, epsilon).map(|outcome| {
            print!("{}", outcome.text);
            outcome.exit_code
        }),
        Command::PartitionReport { config } => cmd_partition_report(&config).map(|text| {
            print!("{text}");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
