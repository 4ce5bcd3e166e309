use std::process::ExitCode;

use clap::Parser;
use eoslab::cli::{run, Cli};

fn main() -> ExitCode {
    // cap the rayon pool before any parallel work happens
    if let Ok(threads) = std::env::var("EOSLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse(); // usage errors exit with code 2
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
