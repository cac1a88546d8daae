use clap::Parser;

fn main() {
    let cli = qdid::cli::Cli::parse();
    std::process::exit(qdid::cli::run(&cli));
}
