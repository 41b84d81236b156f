use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use voxbench::curation::{read_bids, select_subjects};

use crate::config::{parse_task, task_slug};
use crate::{parse_modality, put};

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    /// BIDS root written by `convert`.
    #[arg(long)]
    pub bids: PathBuf,
    /// Task such as "AD vs CN" or "MCIc-Aβ+ vs CN-Aβ−".
    #[arg(long)]
    pub task: String,
    /// Required modalities, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "FDG")]
    pub modalities: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Writes `<task>_<label>.txt` for both labels and `<task>_summary.tsv`.
pub fn cmd_select(args: &SelectArgs) -> anyhow::Result<()> {
    let task = parse_task(&args.task)?;
    let required = args
        .modalities
        .iter()
        .map(|m| parse_modality(m))
        .collect::<anyhow::Result<BTreeSet<_>>>()?;
    let manifest = read_bids(&args.bids)?;
    let (a, b) = select_subjects(&manifest, (&task.0.to_string(), &task.1.to_string()), &required)?;
    let slug = task_slug(task);
    let mut summary = String::from("group\tcount\n");
    for (label, ids) in [(task.0, &a), (task.1, &b)] {
        let mut text = String::new();
        for id in ids {
            writeln!(text, "{id}")?;
        }
        put(&args.out.join(format!("{slug}_{}.txt", label.ascii())), text.as_bytes())?;
        writeln!(summary, "{label}\t{}", ids.len())?;
        println!("{label}: {} participants", ids.len());
    }
    put(&args.out.join(format!("{slug}_summary.tsv")), summary.as_bytes())?;
    Ok(())
}
