//! Command-line front end: `synth → craft → cov → threshold → filter → train
//! → eval`, plus `lemma1` and `verify`.
//!
//! Every subcommand prints one JSON summary line on stdout. Exit status is 0
//! on success, 1 when a check fails or a file cannot be read or parsed, and 2
//! for bad arguments. `PCST_THREADS` sets the worker count for the whole run.

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use serde_json::Value;

mod args;
mod files;
mod model;
mod pipeline;
mod verify;

pub use args::{Cli, Command};

/// Why a command stopped early.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or values; exit 2.
    Usage(String),
    /// I/O, format or invariant failure; exit 1.
    Runtime(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<pcst::Error> for Failure {
    fn from(e: pcst::Error) -> Self {
        match e {
            pcst::Error::Argument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("I/O error: {e}"))
    }
}

pub type CmdResult<T> = Result<T, Failure>;

/// A finished command: its summary and whether its checks held.
pub struct Outcome {
    pub summary: Value,
    pub passed: bool,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome {
            summary,
            passed: true,
        }
    }
}

pub const THREADS_VAR: &str = "PCST_THREADS";

fn thread_count() -> CmdResult<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(0),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Usage(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(out) => {
            println!("{}", out.summary);
            if out.passed {
                0
            } else {
                1
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

/// Runs a parsed command inside a pool sized by `PCST_THREADS`.
pub fn execute(cli: Cli) -> CmdResult<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(cmd: Command) -> CmdResult<Outcome> {
    match cmd {
        Command::Synth(a) => pipeline::synth(&a),
        Command::Craft(a) => pipeline::craft(&a),
        Command::Cov(a) => pipeline::cov(&a),
        Command::Threshold(a) => pipeline::threshold(&a),
        Command::Filter(a) => pipeline::filter(&a),
        Command::Train(a) => model::train(&a),
        Command::Eval(a) => model::eval(&a),
        Command::Lemma1(a) => model::lemma1(&a),
        Command::Verify(a) => verify::verify(&a),
    }
}
