use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use neumann::cli::{self, Cli};

fn main() -> ExitCode {
    let parsed = Cli::parse();
    let out = cli::run(&parsed);
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(out.stdout.as_bytes());
    let _ = stdout.flush();
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code)
}
