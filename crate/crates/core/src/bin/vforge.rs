use clap::Parser;

fn main() {
    let cli = vforge::cli::Cli::parse();
    std::process::exit(vforge::cli::main_with(cli));
}
