//! Experiment harness: `ksctl <command> --config <path> [--key=value ...]`.

pub mod commands;
pub mod config;
pub mod output;

use clap::Parser;
use commands::{exit, COMMANDS};
use config::{parse_config, ConfigError};
use std::ffi::OsString;
use std::path::PathBuf;

pub const USAGE: &str = "ksctl <command> --config <path> [--key=value ...]";

#[derive(Debug, Parser)]
#[command(name = "ksctl", override_usage = USAGE, disable_version_flag = true)]
#[command(after_help = "Commands: simulate, carleman, control-linear, control-nonlinear, eps-sweep\n\
Overrides take `section.key=value` or a key that is unique across sections, e.g. --grid.n=24 --tau=1e-6.\n\
KSCTL_THREADS caps the number of worker threads.")]
struct Cli {
    /// One of simulate, carleman, control-linear, control-nonlinear, eps-sweep.
    command: String,
    /// TOML configuration; missing keys take their documented defaults.
    #[arg(long)]
    config: PathBuf,
    /// `--key=value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--key=value")]
    overrides: Vec<String>,
}

fn diag(level: &str, command: &str, code: i32, msg: &str) {
    let msg = msg.replace('"', "'");
    eprintln!("ksctl: level={level} command={command} code={code} msg=\"{msg}\"");
}

fn usage() {
    eprintln!("usage: {USAGE}");
    eprintln!("commands: {}", COMMANDS.join(", "));
}

fn split_override(raw: &str) -> Option<(String, String)> {
    let body = raw.strip_prefix("--")?;
    let (k, v) = body.split_once('=')?;
    (!k.is_empty()).then(|| (k.to_string(), v.to_string()))
}

/// Configure the global worker pool from `KSCTL_THREADS`.
fn init_threads(value: Option<String>) -> Result<(), String> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("KSCTL_THREADS must be a positive integer, got '{v}'"))?;
    // A pool that is already installed (repeated calls in one process) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Run the CLI on `args` (including the program name) and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp) {
                print!("{e}");
                return exit::OK;
            }
            eprint!("{e}");
            usage();
            return exit::CONFIG;
        }
    };
    let command = cli.command.as_str();
    if !COMMANDS.contains(&command) {
        diag("error", command, exit::CONFIG, &format!("unknown command '{command}'"));
        usage();
        return exit::CONFIG;
    }
    let mut overrides = Vec::new();
    for raw in &cli.overrides {
        match split_override(raw) {
            Some(kv) => overrides.push(kv),
            None => {
                diag("error", command, exit::CONFIG, &format!("expected --key=value, got '{raw}'"));
                usage();
                return exit::CONFIG;
            }
        }
    }
    if let Err(msg) = init_threads(std::env::var("KSCTL_THREADS").ok()) {
        diag("error", command, exit::CONFIG, &msg);
        return exit::CONFIG;
    }
    let cfg = match parse_config(&cli.config, &overrides) {
        Ok(c) => c,
        Err(ConfigError::Invalid(v)) => {
            for m in &v {
                diag("error", command, exit::CONFIG, m);
            }
            return exit::CONFIG;
        }
        Err(e) => {
            diag("error", command, exit::CONFIG, &e.to_string());
            return exit::CONFIG;
        }
    };
    match commands::run(command, &cfg) {
        Ok(out) => {
            for w in &out.warnings {
                diag("warn", command, out.code, w);
            }
            for p in &out.outputs {
                println!("{}", p.display());
            }
            out.code
        }
        Err(e) => {
            diag("error", command, e.code, &e.message);
            e.code
        }
    }
}
