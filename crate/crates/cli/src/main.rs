use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use trapeval_cli::{run, threads_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|n| {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        let stdout = io::stdout();
        let mut out = stdout.lock();
        run(cli, &mut out)?;
        out.flush()?;
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
