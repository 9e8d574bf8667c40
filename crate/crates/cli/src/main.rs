use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = oe_lab_cli::Cli::parse();
    match oe_lab_cli::run(&cli) {
        Ok(out) => {
            println!("{}", out.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
