use bloch_ere::cli::{execute, Cli};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(outputs) => {
            for file in &outputs.files {
                println!("wrote {}", file.display());
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            std::process::exit(1);
        }
    }
}
