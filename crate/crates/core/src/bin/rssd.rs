use clap::Parser;
use rssd::cli::{run, Cli};

fn main() {
    if let Ok(n) = std::env::var("RSSD_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("global pool is built once");
            }
            _ => {
                eprintln!("usage error: RSSD_THREADS must be a positive integer, got '{n}'");
                std::process::exit(2);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
