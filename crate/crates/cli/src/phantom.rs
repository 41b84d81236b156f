use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Deserialize;
use serde_json::json;
use voxbench::curation::{build_bids, clinical_to_csv, scans_to_csv, Modality};
use voxbench::phantom::{generate_cohort, PhantomSpec, Region};
use voxbench::volume::write_volume;

use crate::config::{load_toml, Sourced};
use crate::provenance::Provenance;
use crate::{parse_modality, put, usage};

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    /// Phantom specification (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhantomFile {
    n_per_group: Option<usize>,
    dims: Option<[usize; 3]>,
    effect_corner: Option<[usize; 3]>,
    effect_size_voxels: Option<[usize; 3]>,
    effect_size: Option<f64>,
    noise_sd: Option<f64>,
    modalities: Option<Vec<String>>,
    informative: Option<Vec<String>>,
    reference_corner: Option<[usize; 3]>,
    reference_size_voxels: Option<[usize; 3]>,
    duplicate_t1: Option<bool>,
    seed: Option<u64>,
}

pub const MASK_DIR: &str = "masks";
pub const BRAIN_MASK: &str = "masks/brain_mask.nii";
pub const REFERENCE_MASK: &str = "masks/reference_mask.nii";
pub const TISSUE_MAPS: [&str; 3] = [
    "masks/tissue_gm.nii",
    "masks/tissue_wm.nii",
    "masks/tissue_csf.nii",
];
pub const TRUTH_FILE: &str = "phantom_truth.txt";
pub const BIDS_DIR: &str = "bids";

/// Resolves the phantom spec from defaults, the config file and flags.
pub fn resolve_spec(args: &PhantomArgs) -> anyhow::Result<(PhantomSpec, BTreeMap<String, String>)> {
    let file: PhantomFile = match &args.config {
        Some(p) => load_toml(p)?,
        None => PhantomFile::default(),
    };
    let d = PhantomSpec::default();
    let mut src = Sourced::default();
    let modality_names = src.pick("modalities", None, file.modalities, || {
        d.modalities.iter().map(|(m, _)| m.as_str().to_string()).collect()
    });
    let informative_names = src.pick("informative", None, file.informative, || modality_names.clone());
    let mut modalities = Vec::new();
    for name in &modality_names {
        let m = parse_modality(name)?;
        modalities.push((m, false));
    }
    for name in &informative_names {
        let m = parse_modality(name)?;
        let slot = modalities
            .iter_mut()
            .find(|(x, _)| *x == m)
            .ok_or_else(|| usage(format!("informative modality {m} is not generated")))?;
        slot.1 = true;
    }
    let spec = PhantomSpec {
        n_per_group: src.pick("n_per_group", None, file.n_per_group, || d.n_per_group),
        dims: src.pick("dims", None, file.dims, || d.dims),
        effect_region: Region {
            corner: src.pick("effect_corner", None, file.effect_corner, || d.effect_region.corner),
            size: src.pick("effect_size_voxels", None, file.effect_size_voxels, || d.effect_region.size),
        },
        effect_size: src.pick("effect_size", None, file.effect_size, || d.effect_size),
        noise_sd: src.pick("noise_sd", None, file.noise_sd, || d.noise_sd),
        modalities,
        reference_region: Region {
            corner: src.pick("reference_corner", None, file.reference_corner, || d.reference_region.corner),
            size: src.pick("reference_size_voxels", None, file.reference_size_voxels, || {
                d.reference_region.size
            }),
        },
        duplicate_t1: src.pick("duplicate_t1", None, file.duplicate_t1, || d.duplicate_t1),
        seed: src.pick("seed", args.seed, file.seed, || d.seed),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok((spec, src.into_map()))
}

fn spec_json(spec: &PhantomSpec) -> serde_json::Value {
    json!({
        "n_per_group": spec.n_per_group,
        "dims": spec.dims,
        "effect_corner": spec.effect_region.corner,
        "effect_size_voxels": spec.effect_region.size,
        "effect_size": spec.effect_size,
        "noise_sd": spec.noise_sd,
        "modalities": spec.modalities.iter().map(|(m, _)| m.as_str()).collect::<Vec<_>>(),
        "informative": spec.modalities.iter().filter(|(_, i)| *i).map(|(m, _)| m.as_str()).collect::<Vec<_>>(),
        "reference_corner": spec.reference_region.corner,
        "reference_size_voxels": spec.reference_region.size,
        "duplicate_t1": spec.duplicate_t1,
    })
}

/// Writes a raw source tree (`raw/`, `clinical.csv`, `scans.csv`), masks
/// and tissue maps (`masks/`), the curated BIDS tree (`bids/`), the truth
/// sidecar and provenance.
pub fn cmd_phantom(args: &PhantomArgs) -> anyhow::Result<()> {
    let (spec, sources) = resolve_spec(args)?;
    let cohort = generate_cohort(&spec)?;
    let out = &args.out;
    for (rel, vol) in &cohort.sources {
        put(&out.join(rel), &write_volume(vol)?)?;
    }
    put(&out.join("clinical.csv"), clinical_to_csv(&cohort.clinical).as_bytes())?;
    put(&out.join("scans.csv"), scans_to_csv(&cohort.scans).as_bytes())?;
    put(&out.join(BRAIN_MASK), &write_volume(&cohort.brain_mask.to_volume())?)?;
    if spec.modalities.iter().any(|(m, _)| m.is_pet()) {
        put(&out.join(REFERENCE_MASK), &write_volume(&cohort.reference_mask.to_volume())?)?;
    }
    for (rel, vol) in TISSUE_MAPS.iter().zip(&cohort.tissue_maps) {
        put(&out.join(rel), &write_volume(vol)?)?;
    }
    put(&out.join(TRUTH_FILE), cohort.truth.to_text().as_bytes())?;
    build_bids(&cohort.manifest, out, &out.join(BIDS_DIR)).context("building the BIDS tree")?;

    let mut prov = Provenance::new("phantom", spec_json(&spec));
    prov.config_sources = sources;
    prov.seeds = json!({ "phantom": spec.seed });
    prov.write(out)?;
    Ok(())
}

/// Paths of the masks written by [`cmd_phantom`] under `root`.
pub fn mask_paths(root: &Path) -> (PathBuf, PathBuf, Vec<PathBuf>) {
    (
        root.join(BRAIN_MASK),
        root.join(REFERENCE_MASK),
        TISSUE_MAPS.iter().map(|t| root.join(t)).collect(),
    )
}

/// Modalities listed in a phantom spec, in generation order.
pub fn spec_modalities(spec: &PhantomSpec) -> Vec<Modality> {
    spec.modalities.iter().map(|(m, _)| *m).collect()
}
