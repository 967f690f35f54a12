//! The `obbfuse` command line.
//!
//! Subcommands: `fuse`, `eval`, `edges`, `render`, `stats`. Per-image work
//! runs on a rayon pool sized by `OBBFUSE_THREADS` (default: all cores);
//! output files and reports are written in image-id order, so results do not
//! depend on the thread count.
//!
//! Exit codes: 0 success, 1 usage or fatal error, 2 partial failure.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub mod commands;

/// Version of every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "OBBFUSE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    PartialFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => EXIT_OK,
            Status::PartialFailure => EXIT_PARTIAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "obbfuse", version, about = "Oriented-box label fusion and evaluation for visible/infrared imagery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse visible and infrared label trees image by image.
    Fuse(commands::fuse::FuseArgs),
    /// Score detections against ground truth (AP50 per category and mAP).
    Eval(commands::eval::EvalArgs),
    /// Write the gradient-magnitude edge map of an image.
    Edges(commands::edges::EdgesArgs),
    /// Draw labels over an image as SVG.
    Render(commands::render::RenderArgs),
    /// Category counts, box-size quantiles and angle histogram of a label tree.
    Stats(commands::stats::StatsArgs),
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
        builder = builder.num_threads(n);
    }
    builder.build().context("cannot start worker pool")
}

pub fn execute(cli: &Cli) -> Result<Status> {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Fuse(a) => commands::fuse::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Edges(a) => commands::edges::run(a),
        Command::Render(a) => commands::render::run(a),
        Command::Stats(a) => commands::stats::run(a),
    })
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub(crate) fn require_dir(path: &Path) -> Result<()> {
    anyhow::ensure!(path.is_dir(), "{} is not a directory", path.display());
    Ok(())
}
