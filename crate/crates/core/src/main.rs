use std::process::ExitCode;

use semiselftest::cli::{self, ArgsError, RunConfig};

fn main() -> ExitCode {
    let env_tol = std::env::var(cli::TOL_ENV).ok();
    let config = match RunConfig::from_args(std::env::args_os(), env_tol.as_deref()) {
        Ok(c) => c,
        Err(ArgsError::Usage(e)) if !e.use_stderr() => e.exit(),
        Err(ArgsError::Usage(e)) => {
            let _ = e.print();
            return ExitCode::from(cli::EXIT_ERROR as u8);
        }
        Err(ArgsError::Invalid(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(cli::EXIT_ERROR as u8);
        }
    };
    ExitCode::from(cli::run(&config) as u8)
}
