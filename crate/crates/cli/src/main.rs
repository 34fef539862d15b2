use clap::Parser;

fn main() {
    let cli = amcsim_cli::Cli::parse();
    let code = match amcsim_cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            amcsim_cli::EXIT_ERROR
        }
    };
    std::process::exit(code);
}
