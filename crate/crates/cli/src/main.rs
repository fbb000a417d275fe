use clap::Parser;

fn main() {
    let cli = uqmol_cli::Cli::parse();
    if let Err(err) = uqmol_cli::run(cli) {
        eprintln!("error: {}", uqmol_cli::describe(&err));
        std::process::exit(uqmol_cli::exit_code(&err));
    }
}
