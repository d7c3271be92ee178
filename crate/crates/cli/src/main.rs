use std::path::PathBuf;
use std::process::ExitCode;

use circlelab::scenario::{list_examples, load_scenario, run_scenario, selftest_all, Status};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lab", version, about = "Experiments on groups of circle diffeomorphisms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file, or a shipped scenario by name.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config field, e.g. `--set orbit.radius=4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run every pipeline on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// List the shipped scenarios.
    Examples,
    /// Check jets and cocycles on every shipped generator set.
    Selftest,
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Inconclusive => "inconclusive",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Examples => {
            for (name, desc) in list_examples() {
                println!("{name:<22}{desc}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Selftest => match selftest_all() {
            Ok(rows) => {
                let mut ok = true;
                for (name, verdicts) in rows {
                    for v in verdicts {
                        ok &= v.status != Status::Fail;
                        println!("{name:<22}{:<14}{} ({:e})", status_str(v.status), v.claim, v.value.unwrap_or(f64::NAN));
                    }
                }
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Cmd::Run { config, out, set, sequential } => {
            circlelab::par::set_sequential(sequential);
            let scn = match load_scenario(&config, &set) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let report = match run_scenario(&scn, &out) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            for p in &report.pipelines {
                match &p.error {
                    Some(e) => println!("[{}] error: {e}", p.name),
                    None => println!("[{}] ok", p.name),
                }
                for v in &p.verdicts {
                    println!("    {:<14}{}", status_str(v.status), v.claim);
                }
                for w in &p.warnings {
                    println!("    warning: {w}");
                }
            }
            println!("report written to {}", out.join("report.json").display());
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
