#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use didsens::Error;
use serde_json::json;
use sha2::{Digest, Sha256};

use args::{Cli, Command};
use commands::Outcome;

/// Exit status when `verify` ran but some scenario missed its verdict.
const VERIFY_FAILED: u8 = 5;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Catalog(_) | Error::Config(_) => 1,
        Error::Schema(_)
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::Spec(_)
        | Error::Io(_) => 2,
        Error::Estimation(_) | Error::DegenerateVariance(_) | Error::Degeneracy { .. } => 3,
        Error::Singular { .. } => 4,
    }
}

fn digest(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_outputs(cli: &Cli, dir: &Path, outcome: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let pretty =
        |v: &serde_json::Value| serde_json::to_vec_pretty(v).expect("JSON values serialize");
    if !outcome.json.is_null() {
        std::fs::write(dir.join("result.json"), pretty(&outcome.json))?;
    }
    for (name, bytes) in &outcome.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let input_digest = match &outcome.input {
        Some(p) => Some(digest(p)?),
        None => None,
    };
    let mut files: Vec<&str> = outcome.files.iter().map(|(n, _)| n.as_str()).collect();
    if !outcome.json.is_null() {
        files.insert(0, "result.json");
    }
    let manifest = json!({
        "command": cli.command,
        "options": { "seed": cli.seed, "threads": cli.threads, "output": cli.output },
        "input_digest": input_digest.map(|d| format!("sha256:{d}")),
        "seeds": [cli.seed],
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "files": files,
    });
    std::fs::write(dir.join("manifest.json"), pretty(&manifest))
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Argument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Rho(a) => commands::rho(a),
        Command::Attgt(a) => commands::attgt(a),
        Command::Simulate(a) => commands::simulate(a, cli.seed),
        Command::Verify(a) => commands::verify(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    // A closed stdout (e.g. piped into `head`) is not an error.
    let mut out = std::io::stdout().lock();
    let _ = match &outcome.text {
        Some(t) => write!(out, "{t}"),
        None => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&outcome.json).expect("JSON values serialize")
        ),
    };
    drop(out);
    if let Some(dir) = &cli.output {
        if let Err(e) = write_outputs(&cli, dir, &outcome) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if outcome.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(VERIFY_FAILED)
    }
}
