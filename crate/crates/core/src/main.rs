use clap::Parser;

use dgsolve::cli_io::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("dgsolve: {e}");
        std::process::exit(e.exit_code());
    }
}
