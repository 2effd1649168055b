use std::process::ExitCode;

use clap::Parser;
use cmgd_cli::{execute, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match execute(&args) {
            Ok(report) => {
                let s = &report.summary;
                println!(
                    "{} runs in {:.2}s: {:?}; front of {} entries written to {}",
                    s.starts,
                    s.wall_clock_seconds,
                    s.terminations,
                    s.front_size,
                    args.out.display()
                );
                for w in &s.dataset_warnings {
                    eprintln!("warning: {w}");
                }
                if s.stalled > 0 {
                    eprintln!(
                        "note: {} of {} runs stalled before a stationarity certificate",
                        s.stalled, s.starts
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
