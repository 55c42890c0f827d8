use clap::Parser;

fn main() {
    let cli = cauchy_lab::cli::Cli::parse();
    std::process::exit(cauchy_lab::cli::main_with(cli));
}
