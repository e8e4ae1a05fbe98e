use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Parser;
use glass::cli::{dispatch, init_logging, Cli};

fn main() {
    let cli = Cli::parse();
    init_logging();
    let abort = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&abort);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        eprintln!("glass: cannot install signal handler: {e}");
    }
    std::process::exit(dispatch(cli, abort));
}
