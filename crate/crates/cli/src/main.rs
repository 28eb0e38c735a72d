use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcsim::pipeline::{output_root, run_file};
use hcsim::suites::{run_criterion, suite_criteria, Lab};

#[derive(Parser)]
#[command(
    name = "hcsim",
    version,
    about = "Wave field plus guided-configuration simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config.
    Run {
        config: PathBuf,
        /// Output root; overrides HCSIM_OUTPUT_ROOT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite (`acceptance` runs all criteria).
    Verify { suite: String },
    /// Print the config JSON schema.
    DumpSchema,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run { config, out } => {
            let root = out.unwrap_or_else(output_root);
            match run_file(&config, &root) {
                Ok(outcome) => {
                    println!("wrote {}", outcome.dir.display());
                    if outcome.checks_pass {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("run finished but its checks failed; see report files");
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Verify { suite } => {
            let ids = match suite_criteria(&suite) {
                Ok(ids) => ids,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let lab = Lab::new();
            let mut ok = true;
            for id in ids {
                match run_criterion(&lab, id) {
                    Ok(c) => {
                        print!("{c}");
                        ok &= c.pass();
                    }
                    Err(e) => {
                        println!("[FAIL] criterion {id}: error: {e:#}");
                        ok = false;
                    }
                }
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::DumpSchema => match serde_json::to_string_pretty(&hcsim::config::schema()) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
