//! `randadj` command-line front end.

mod args;
mod commands;
mod table;

use std::io::{self, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use randadj::{Error, Result};

use args::{Cli, Command};

/// Caps the worker pool at `RANDADJ_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("RANDADJ_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("RANDADJ_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Analyze(a) => commands::analyze(a, &mut out)?,
        Command::Compare(a) => commands::compare(a, &mut out)?,
        Command::Simulate(a) => commands::simulate(a, &mut out)?,
        Command::Frt(a) => commands::frt(a, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // Help and version requests.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", one_line(&first));
            return ExitCode::from(1);
        }
    };
    std::panic::set_hook(Box::new(|_| {}));
    match catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        // The reader went away (for example `| head`); nothing left to report.
        Ok(Err(Error::Io(e))) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            eprintln!("error: internal error: {}", one_line(&msg));
            ExitCode::from(3)
        }
    }
}
