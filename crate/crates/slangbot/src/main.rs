use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use slangbot::cli::{run, Cli};
use slangbot::Error;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let stdin = io::stdin();
    let stdout = io::stdout();
    let result = run(&cli, &mut stdin.lock(), &mut stdout.lock());
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn report(err: &Error) {
    eprintln!("error: {err}");
    if let Error::Corpus { errors, .. } = err {
        for e in errors {
            eprintln!("  {e}");
        }
    }
}
