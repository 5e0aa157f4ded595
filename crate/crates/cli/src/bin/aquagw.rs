use aquagreen_cli::{emit, gateway, init_logging, GatewayArgs};
use clap::Parser;

/// Gateway relay: UDP radio frames in, telemetry records out.
#[derive(Debug, Parser)]
#[command(name = "aquagw", version)]
struct Cli {
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    args: GatewayArgs,
}

fn main() {
    init_logging();
    let cli = Cli::parse();
    std::process::exit(emit(gateway(&cli.args), cli.json));
}
