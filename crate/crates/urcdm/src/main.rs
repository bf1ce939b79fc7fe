use clap::Parser;
use urcdm::cli::{init_logging, run, Cli};

fn main() {
    let cli = Cli::parse();
    init_logging();
    if let Err(e) = run(cli) {
        log::error!("{e}");
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
