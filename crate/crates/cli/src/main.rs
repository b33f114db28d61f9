use clap::Parser;

use parastab_cli::{execute, Args, EXIT_OK};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(report) => {
            for (k, v) in &report.summary {
                println!("{k} = {v}");
            }
            println!("outputs written to {}", args.out.display());
            std::process::exit(EXIT_OK);
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
