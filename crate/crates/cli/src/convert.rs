use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde_json::json;
use voxbench::curation::{build_bids, build_manifest, parse_clinical, parse_scans};

use crate::provenance::Provenance;
use crate::{put, read_text};

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// Root that scan source paths are relative to.
    #[arg(long)]
    pub raw: PathBuf,
    /// Clinical table (CSV).
    #[arg(long)]
    pub clinical: PathBuf,
    /// Scan table (CSV).
    #[arg(long)]
    pub scans: PathBuf,
    /// Follow-up horizon in months.
    #[arg(long, default_value_t = 36)]
    pub horizon: u32,
    /// Destination BIDS root.
    #[arg(long)]
    pub out: PathBuf,
}

pub const LOG_HEADER: &str = "subject_id\tmodality\tmonths_from_baseline\tscan_uid\tcandidates\trule";

pub fn cmd_convert(args: &ConvertArgs) -> anyhow::Result<()> {
    let clinical = parse_clinical(&read_text(&args.clinical)?)
        .with_context(|| format!("clinical table {}", args.clinical.display()))?;
    let scans = parse_scans(&read_text(&args.scans)?)
        .with_context(|| format!("scan table {}", args.scans.display()))?;
    let build = build_manifest(&clinical, &scans, args.horizon)?;
    build_bids(&build.manifest, &args.raw, &args.out)?;

    let mut log = format!("{LOG_HEADER}\n");
    for d in &build.decisions {
        writeln!(
            log,
            "{}\t{}\t{}\t{}\t{}\t{}",
            d.subject_id,
            d.modality,
            d.selection.scan.months_from_baseline,
            d.selection.scan.scan_uid,
            d.selection.candidates,
            d.selection.rule
        )?;
    }
    let code = args.out.join("code");
    put(&code.join("conversion_log.tsv"), log.as_bytes())?;
    let mut skipped = String::new();
    for s in &build.skipped {
        writeln!(skipped, "{s}")?;
    }
    put(&code.join("skipped.txt"), skipped.as_bytes())?;

    let mut prov = Provenance::new(
        "convert",
        json!({
            "raw": args.raw.display().to_string(),
            "clinical": args.clinical.display().to_string(),
            "scans": args.scans.display().to_string(),
            "horizon_months": args.horizon,
        }),
    );
    prov.input("clinical", &args.clinical)?;
    prov.input("scans", &args.scans)?;
    for entry in &build.manifest.entries {
        for scan in entry.scans.values() {
            prov.input(scan.source_path.clone(), &args.raw.join(&scan.source_path))?;
        }
    }
    prov.write(&code)?;
    Ok(())
}
