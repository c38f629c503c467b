use clap::Parser;
use svexp_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&cli).code());
}
