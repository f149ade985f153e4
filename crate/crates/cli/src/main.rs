use std::process::ExitCode;

use clap::Parser;
use slb_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", serde_json::json!({"error": chain.join(": ")}));
            ExitCode::FAILURE
        }
    }
}
