use clap::{Parser, Subcommand};
use relbody_cli::{
    check_scenario_file, exit_code_for, parse_formulation, run_scenario_file, sweep, CliError,
    RunFlags, EXIT_INPUT_ERROR,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "relbody",
    version,
    about = "N-body runs in origin-independent relative coordinates",
    long_about = "Integrates gravitational N-body scenarios in absolute coordinates or in \
                  difference coordinates that never reference an origin, writes CSV trajectory \
                  tables and TOML run summaries, and checks the consistency of pinning a body \
                  at the origin. Scenario arguments are file paths or bundled names: \
                  two_body_kepler, bcos3_antipodal, bcos3_unequal_masses, rs2_random_n5, \
                  body_frame_identity."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; write <name>.csv and <name>.summary.toml
    Run {
        /// Scenario file path or bundled scenario name
        scenario: String,
        /// Directory for the trajectory table and summary
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the formulation named in the scenario (NCME, RS1, RS2, BCOS_REDUCED)
        #[arg(long)]
        formulation: Option<String>,
        /// Add per-sample invariant columns to the trajectory table
        #[arg(long)]
        report_invariants: bool,
        /// Skip per-sample invariant reports (summary covers only the final sample)
        #[arg(long, conflicts_with = "report_invariants")]
        no_reports: bool,
    },
    /// Validate a scenario and print consistency diagnostics, no integration
    Check {
        /// Scenario file path or bundled scenario name
        scenario: String,
    },
    /// Run several scenarios concurrently
    Sweep {
        /// Scenario file paths or bundled names
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Directory for all trajectory tables and summaries
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Worker threads; defaults to one per scenario
        #[arg(long)]
        jobs: Option<usize>,
        /// Add per-sample invariant columns to every trajectory table
        #[arg(long)]
        report_invariants: bool,
    },
}

fn input_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INPUT_ERROR)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out_dir, formulation, report_invariants, no_reports } => {
            let formulation = match formulation.as_deref().map(parse_formulation).transpose() {
                Ok(f) => f,
                Err(e) => return input_error(&e),
            };
            let flags =
                RunFlags { formulation, csv_invariants: report_invariants, skip_reports: no_reports };
            match run_scenario_file(&scenario, &out_dir, &flags) {
                Ok(run) => {
                    println!(
                        "{}: {} after {} samples; wrote {} and {}",
                        run.name,
                        run.termination,
                        run.samples,
                        run.csv_path.display(),
                        run.summary_path.display()
                    );
                    ExitCode::from(exit_code_for(run.termination))
                }
                Err(e) => input_error(&e),
            }
        }
        Command::Check { scenario } => match check_scenario_file(&scenario) {
            Ok(report) => {
                print!("{report}");
                ExitCode::SUCCESS
            }
            Err(CliError::InvalidInitialConditions(report)) => {
                print!("{report}");
                eprintln!("error: initial conditions invalid");
                ExitCode::from(EXIT_INPUT_ERROR)
            }
            Err(e) => input_error(&e),
        },
        Command::Sweep { scenarios, out_dir, jobs, report_invariants } => {
            let flags = RunFlags {
                formulation: None,
                csv_invariants: report_invariants,
                skip_reports: false,
            };
            let results = sweep(&scenarios, &out_dir, jobs, &flags);
            let mut worst = 0u8;
            let mut saw_input_error = false;
            for (arg, result) in &results {
                match result {
                    Ok(run) => {
                        println!(
                            "{}: {} after {} samples; wrote {} and {}",
                            run.name,
                            run.termination,
                            run.samples,
                            run.csv_path.display(),
                            run.summary_path.display()
                        );
                        worst = worst.max(exit_code_for(run.termination));
                    }
                    Err(e) => {
                        eprintln!("{arg}: error: {e}");
                        saw_input_error = true;
                    }
                }
            }
            if saw_input_error {
                ExitCode::from(EXIT_INPUT_ERROR)
            } else {
                ExitCode::from(worst)
            }
        }
    }
}
