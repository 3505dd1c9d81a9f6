use std::path::PathBuf;
use std::process::ExitCode;

use cawe::config::PipelineConfig;

const USAGE: &str = "usage: cawe <ingest|train|embed|eval|project|inspect> --config PATH \
                     [--seed N] [--quiet]";

struct Args {
    command: String,
    config: PathBuf,
    seed: Option<u64>,
    quiet: bool,
}

fn parse_args() -> Result<Args, String> {
    let mut args = std::env::args().skip(1);
    let command = args.next().ok_or(USAGE.to_string())?;
    let mut config = None;
    let mut seed = None;
    let mut quiet = false;
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--config" => {
                config = Some(PathBuf::from(
                    args.next().ok_or("--config requires a path".to_string())?,
                ));
            }
            "--seed" => {
                let raw = args.next().ok_or("--seed requires a value".to_string())?;
                seed = Some(raw.parse().map_err(|_| format!("bad seed {raw:?}"))?);
            }
            "--quiet" => quiet = true,
            other => return Err(format!("unknown flag {other:?}\n{USAGE}")),
        }
    }
    let config = config.ok_or(format!("--config is required\n{USAGE}"))?;
    Ok(Args { command, config, seed, quiet })
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(args) => args,
        Err(message) => {
            eprintln!("{message}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match PipelineConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    match cawe::cli::run(&args.command, &cfg, args.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
