use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lggp::cli::{parse_pairs, run, RunConfig, RunMode};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Simulate,
    FitHmc,
    FitHmcShort,
    FitPl,
    FitPlTempered,
    Predict,
}

impl From<Mode> for RunMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Simulate => RunMode::Simulate,
            Mode::FitHmc => RunMode::FitHmc,
            Mode::FitHmcShort => RunMode::FitHmcShort,
            Mode::FitPl => RunMode::FitPl,
            Mode::FitPlTempered => RunMode::FitPlTempered,
            Mode::Predict => RunMode::Predict,
        }
    }
}

/// Log-Gaussian gamma process regression.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    mode: Mode,

    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Extra `key=value` settings applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mode = RunMode::from(args.mode);
    let mut text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    // Overrides replace keys from the file.
    let overrides = match parse_pairs(&args.set.join("\n")) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if !overrides.is_empty() {
        let keep: Vec<&str> = text
            .lines()
            .filter(|l| {
                let k = l.split_once('=').map(|(k, _)| k.trim());
                !overrides.iter().any(|(o, _)| Some(o.as_str()) == k)
            })
            .collect();
        text = keep.join("\n");
        for (k, v) in &overrides {
            text.push_str(&format!("\n{k} = {v}"));
        }
    }
    let cfg = match RunConfig::parse(mode, &text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    ExitCode::from(run(&cfg) as u8)
}
