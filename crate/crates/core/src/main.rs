use mimetic_darcy::cli;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match cli::parse_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    if let Err(e) = cli::run(&cfg) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
