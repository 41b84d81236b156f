use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde_json::json;
use voxbench::curation::{bids_relative_path, read_bids};
use voxbench::features::extract_features;
use voxbench::volume::{read_volume_file, Mask};

use crate::provenance::Provenance;
use crate::store::{features_dir, write_store};
use crate::{parse_modality, usage};

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// BIDS root written by `convert`.
    #[arg(long)]
    pub bids: PathBuf,
    #[arg(long)]
    pub modality: String,
    /// Nonzero voxels are brain.
    #[arg(long)]
    pub brain_mask: PathBuf,
    /// Reference region for PET intensity normalization.
    #[arg(long)]
    pub reference_mask: Option<PathBuf>,
    /// Derivatives root; defaults to `<bids>/derivatives`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_extract(args: &ExtractArgs) -> anyhow::Result<()> {
    let modality = parse_modality(&args.modality)?;
    if modality.is_pet() && args.reference_mask.is_none() {
        return Err(usage(format!("{modality} needs --reference-mask")));
    }
    let manifest = read_bids(&args.bids)?;
    let load_mask = |p: &PathBuf| -> anyhow::Result<Mask> {
        let v = read_volume_file(p).with_context(|| format!("mask {}", p.display()))?;
        Ok(Mask::from_volume(&v))
    };
    let brain = load_mask(&args.brain_mask)?;
    let reference = match (&args.reference_mask, modality.is_pet()) {
        (Some(p), true) => Some(load_mask(p)?),
        _ => None,
    };

    let mut prov = Provenance::new(
        "extract",
        json!({
            "bids": args.bids.display().to_string(),
            "modality": modality.as_str(),
            "brain_mask": args.brain_mask.display().to_string(),
            "reference_mask": reference.as_ref().and(args.reference_mask.as_ref()).map(|p| p.display().to_string()),
        }),
    );
    prov.input("brain_mask", &args.brain_mask)?;
    if let (Some(p), Some(_)) = (&args.reference_mask, &reference) {
        prov.input("reference_mask", p)?;
    }

    let mut ids = Vec::new();
    let mut volumes = Vec::new();
    for entry in &manifest.entries {
        let Some(scan) = entry.scans.get(&modality) else {
            continue;
        };
        let rel = bids_relative_path(&entry.subject_id, scan.months_from_baseline, modality);
        let path = args.bids.join(&rel);
        volumes.push(read_volume_file(&path).with_context(|| format!("subject {}", entry.subject_id))?);
        prov.input(rel.display().to_string(), &path)?;
        ids.push(entry.subject_id.clone());
    }
    if ids.is_empty() {
        anyhow::bail!("no subject in {} has a {modality} image", args.bids.display());
    }
    let refs: Vec<_> = volumes.iter().collect();
    let fm = extract_features(&refs, &ids, &brain, reference.as_ref())?;

    let derivatives = args.out.clone().unwrap_or_else(|| args.bids.join("derivatives"));
    let dir = features_dir(&derivatives, modality);
    write_store(&dir, &fm)?;
    prov.write(&dir)?;
    Ok(())
}
