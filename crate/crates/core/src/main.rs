use clap::Parser;

fn main() {
    std::process::exit(qstoch::cli::main_with(qstoch::cli::Cli::parse()));
}
