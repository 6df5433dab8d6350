use clap::Parser;

fn main() {
    let cli = prpm_cli::Cli::parse();
    if let Err(e) = prpm_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
