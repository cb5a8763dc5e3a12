use clap::Parser;

fn main() {
    let cli = entprune::cli::Cli::parse();
    if let Err(e) = entprune::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
