use clap::Parser;
use corenet::cli::Cli;

fn main() {
    let cli = Cli::parse();
    let result = corenet::init_threads().and_then(|_| corenet::commands::run(cli));
    if let Err(e) = result {
        eprintln!("corenet: {e}");
        std::process::exit(e.exit_code());
    }
}
