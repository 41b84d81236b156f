//! Command-line front end: `convert`, `select`, `extract`, `classify` and
//! `phantom`. Each command is also callable as a library function.

use std::path::Path;

use anyhow::Context;
use clap::{Parser, Subcommand};
use thiserror::Error;
use voxbench::evaluation::EvalError;
use voxbench::fsio::{write_new, WriteError};
use voxbench::svm::SvmError;

pub mod classify;
pub mod config;
pub mod convert;
pub mod extract;
pub mod phantom;
pub mod provenance;
pub mod select;
pub mod store;

pub use classify::{cmd_classify, ClassifyArgs};
pub use convert::{cmd_convert, ConvertArgs};
pub use extract::{cmd_extract, ExtractArgs};
pub use phantom::{cmd_phantom, PhantomArgs};
pub use select::{cmd_select, SelectArgs};

#[derive(Debug, Parser)]
#[command(name = "voxbench", version, about = "Voxel-based classification benchmarks for neuroimaging cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curate raw scans and clinical tables into a BIDS tree.
    Convert(ConvertArgs),
    /// List the participants of a classification task.
    Select(SelectArgs),
    /// Build a feature store for one modality.
    Extract(ExtractArgs),
    /// Run nested cross-validation and write reports.
    Classify(ClassifyArgs),
    /// Generate a synthetic cohort with a known effect region.
    Phantom(PhantomArgs),
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Select(a) => cmd_select(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Classify(a) => {
            let out = cmd_classify(a)?;
            println!("{}", out.dir.join("summary.tsv").display());
            Ok(())
        }
        Command::Phantom(a) => cmd_phantom(a),
    }
}

/// Invalid configuration or arguments (exit code 2).
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(SvmError::NotConverged(_)) = cause.downcast_ref::<SvmError>() {
            return EXIT_CONVERGENCE;
        }
        if let Some(EvalError::Svm(SvmError::NotConverged(_))) = cause.downcast_ref::<EvalError>() {
            return EXIT_CONVERGENCE;
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}

/// Writes through [`write_new`]: identical existing content is left alone,
/// different content is refused.
pub(crate) fn put(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    match write_new(path, bytes) {
        Ok(_) => Ok(()),
        Err(WriteError::Exists) => Err(anyhow::anyhow!(
            "refusing to overwrite {} with different content",
            path.display()
        )),
        Err(WriteError::Io(e)) => Err(e).with_context(|| format!("writing {}", path.display())),
    }
}

pub(crate) fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub(crate) fn parse_modality(s: &str) -> anyhow::Result<voxbench::curation::Modality> {
    s.parse()
        .map_err(|_| usage(format!("unknown modality {s:?} (expected T1, FDG or AV45)")))
}
