use clap::Parser;

use flattenquant::cli::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
        eprintln!("{msg}");
        std::process::exit(e.exit_code());
    }
}
