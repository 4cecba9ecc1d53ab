use clap::Parser;

use petreq_cli::commands::{dispatch, Cli};
use petreq_cli::exit_code;

fn main() {
    let cli = Cli::parse();
    if let Err(error) = dispatch(&cli) {
        eprintln!("error: {error}");
        std::process::exit(exit_code(&error));
    }
}
