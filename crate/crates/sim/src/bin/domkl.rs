use clap::Parser;

fn main() {
    let cli = domkl_sim::cli::Cli::parse();
    std::process::exit(domkl_sim::cli::execute(cli));
}
