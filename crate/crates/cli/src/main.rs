use clap::Parser;
use drcascade_cli::args::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    drcascade_cli::init_threads();
    std::process::exit(run(Cli::parse()));
}
