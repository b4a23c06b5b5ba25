use clap::Parser;
use ordinal_depth_cli::cli::Cli;
use ordinal_depth_cli::commands;

fn main() {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = commands::run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
