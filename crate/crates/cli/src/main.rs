use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use vklbm_cli::config::{load_config, ExperimentConfig, ProblemKind};
use vklbm_cli::csvio::fmt_f64;
use vklbm_cli::run::{compare_expected, parse_expected, run_experiment, run_table, RunArtifacts};

#[derive(Parser)]
#[command(name = "vklbm", version, about = "Kinetic benchmark driver for scalar conservation laws")]
struct Cli {
    /// Worker threads for the solver (1 runs fully sequentially).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; write field and diagnostics CSVs.
    Run { config: PathBuf },
    /// Run an experiment and compare its summary against expected values.
    Check { config: PathBuf },
    /// Run the sinusoidal Burgers convergence study; write the table CSV.
    Table { config: PathBuf },
}

// Exit codes: 0 success, 1 configuration/usage error, 2 solver failure,
// 3 expected-value check failure.
fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout and are successes; everything
            // else is a usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads == 0 {
        eprintln!("--threads must be at least 1");
        return 1;
    }
    match cli.command {
        Command::Run { config } => run_cmd(&config, cli.threads),
        Command::Check { config } => check_cmd(&config, cli.threads),
        Command::Table { config } => table_cmd(&config, cli.threads),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, i32> {
    load_config(path).map_err(|e| {
        eprint!("{e}");
        1
    })
}

fn print_artifacts(artifacts: &RunArtifacts) {
    for (name, value) in &artifacts.summary {
        println!("{name} = {}", fmt_f64(*value));
    }
    println!("fields: {}", artifacts.fields_path.display());
    println!("diagnostics: {}", artifacts.diagnostics_path.display());
    for note in &artifacts.notes {
        println!("note: {note}");
    }
}

fn run_cmd(path: &Path, threads: usize) -> i32 {
    let config = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run_experiment(&config, threads) {
        Ok(artifacts) => {
            print_artifacts(&artifacts);
            0
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            2
        }
    }
}

fn check_cmd(path: &Path, threads: usize) -> i32 {
    let config = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(check_file) = config.check_file.clone() else {
        eprintln!("check needs a [check] section naming the expected-values file");
        return 1;
    };
    let text = match std::fs::read_to_string(&check_file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", check_file.display());
            return 1;
        }
    };
    let expected = match parse_expected(&text) {
        Ok(x) => x,
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    let artifacts = match run_experiment(&config, threads) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("run failed: {e}");
            return 2;
        }
    };
    print_artifacts(&artifacts);
    let mut all_pass = true;
    for line in compare_expected(&artifacts.summary, &expected) {
        let verdict = if line.pass { "pass" } else { "FAIL" };
        match line.got {
            Some(got) => println!(
                "{verdict}: {} = {} (expected {} within {})",
                line.metric,
                fmt_f64(got),
                fmt_f64(line.expected),
                fmt_f64(line.tolerance)
            ),
            None => println!(
                "{verdict}: {} missing from the run summary (expected {} within {})",
                line.metric,
                fmt_f64(line.expected),
                fmt_f64(line.tolerance)
            ),
        }
        all_pass &= line.pass;
    }
    if all_pass {
        0
    } else {
        3
    }
}

fn table_cmd(path: &Path, threads: usize) -> i32 {
    let config = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if config.problem != ProblemKind::BurgersSine {
        eprintln!("the table subcommand runs the sinusoidal Burgers study; set `problem = burgers-sine`");
        return 1;
    }
    match run_table(&config, threads) {
        Ok((csv_path, study)) => {
            for (column, &omega) in study.points.iter().zip(&study.omegas) {
                for point in column {
                    match point.order {
                        Some(order) => println!(
                            "omega={} N={} l2={} order={}",
                            fmt_f64(omega),
                            point.n,
                            fmt_f64(point.l2),
                            fmt_f64(order)
                        ),
                        None => println!(
                            "omega={} N={} l2={}",
                            fmt_f64(omega),
                            point.n,
                            fmt_f64(point.l2)
                        ),
                    }
                }
            }
            println!("table: {}", csv_path.display());
            0
        }
        Err(e) => {
            eprintln!("table failed: {e}");
            2
        }
    }
}
