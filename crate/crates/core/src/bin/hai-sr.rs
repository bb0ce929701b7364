use clap::Parser;

fn main() {
    let cli = hai_sr::cli::Cli::parse();
    if let Err(e) = hai_sr::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(hai_sr::cli::exit_code(&e));
    }
}
