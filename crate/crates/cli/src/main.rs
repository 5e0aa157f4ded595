use aquagreen_cli::{emit, execute, init_logging, Cli};
use clap::Parser;

fn main() {
    init_logging();
    let cli = Cli::parse();
    std::process::exit(emit(execute(&cli), cli.json));
}
