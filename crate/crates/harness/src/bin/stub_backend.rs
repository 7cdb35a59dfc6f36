//! Protocol backend serving replay files, with optional injected faults.
//!
//! `odd-stub-backend --detections dump.json [--scores scores.json] [--global-pool] [--fault <mode>]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use odd_harness::formats::{read_dump, read_scores};
use odd_harness::stub::{serve, Fault, StubConfig};

#[derive(Parser)]
#[command(name = "odd-stub-backend", about = "Replay backend speaking the odd line protocol")]
struct Args {
    #[arg(long, default_value = "odd-stub")]
    name: String,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Accept reference pool announcements.
    #[arg(long)]
    global_pool: bool,
    #[arg(long, default_value = "none", value_parser = parse_fault)]
    fault: Fault,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    Fault::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Fault::ALL.iter().map(|(n, _)| *n).collect();
        format!("unknown fault {s:?}, expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let load = || -> odd_harness::Result<StubConfig> {
        Ok(StubConfig {
            name: args.name.clone(),
            detections: args.detections.as_deref().map(read_dump).transpose()?,
            scores: args.scores.as_deref().map(read_scores).transpose()?,
            global_pool: args.global_pool,
            fault: args.fault,
        })
    };
    let cfg = match load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("odd-stub-backend: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match serve(&cfg, std::io::stdin(), std::io::stdout().lock()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("odd-stub-backend: {e}");
            ExitCode::from(3)
        }
    }
}
