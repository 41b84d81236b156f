//! On-disk feature store: one float32 volume holding a subject per z slice.
//!
//! Slice `z` holds row `z` of the feature matrix laid out over an `nx x ny`
//! plane, `nx = ceil(sqrt(n_cols))`, zero-padded. `mask.nii` fixes the
//! voxel columns and `features.tsv` the subject order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use voxbench::curation::Modality;
use voxbench::features::FeatureMatrix;
use voxbench::volume::{read_volume_file, write_volume, Mask, Volume3D};

use crate::{put, read_text};

pub const FEATURES_FILE: &str = "features.nii";
pub const MASK_FILE: &str = "mask.nii";
pub const INDEX_FILE: &str = "features.tsv";

pub fn features_dir(derivatives: &Path, modality: Modality) -> PathBuf {
    derivatives.join("features").join(modality.as_str())
}

fn plane(n_cols: usize) -> (usize, usize) {
    let nx = (n_cols as f64).sqrt().ceil() as usize;
    let nx = nx.max(1);
    (nx, n_cols.div_ceil(nx).max(1))
}

/// Encoded store files: features volume, mask volume, subject index.
pub fn encode(fm: &FeatureMatrix) -> anyhow::Result<(Vec<u8>, Vec<u8>, String)> {
    let cols = fm.n_voxels();
    if cols == 0 || fm.n_subjects() == 0 {
        bail!("feature matrix is empty");
    }
    let (nx, ny) = plane(cols);
    let mut data = vec![0.0; nx * ny * fm.n_subjects()];
    for (z, row) in fm.rows().enumerate() {
        data[z * nx * ny..z * nx * ny + cols].copy_from_slice(row);
    }
    let vol = Volume3D::from_data([nx, ny, fm.n_subjects()], data)?;
    let mut index = String::from("row\tparticipant_id\n");
    for (i, id) in fm.subjects().iter().enumerate() {
        writeln!(index, "{i}\t{id}")?;
    }
    Ok((write_volume(&vol)?, write_volume(&fm.mask().to_volume())?, index))
}

pub fn write_store(dir: &Path, fm: &FeatureMatrix) -> anyhow::Result<()> {
    let (features, mask, index) = encode(fm)?;
    put(&dir.join(FEATURES_FILE), &features)?;
    put(&dir.join(MASK_FILE), &mask)?;
    put(&dir.join(INDEX_FILE), index.as_bytes())?;
    Ok(())
}

pub fn read_store(dir: &Path) -> anyhow::Result<FeatureMatrix> {
    let ctx = || format!("feature store {}", dir.display());
    let mask = Mask::from_volume(&read_volume_file(&dir.join(MASK_FILE)).with_context(ctx)?);
    let vol = read_volume_file(&dir.join(FEATURES_FILE)).with_context(ctx)?;
    let mut subjects = Vec::new();
    for (i, line) in read_text(&dir.join(INDEX_FILE))?.lines().skip(1).enumerate() {
        match line.split_once('\t') {
            Some((row, id)) if row == i.to_string() => subjects.push(id.to_string()),
            _ => bail!("{}: malformed index line {:?}", ctx(), line),
        }
    }
    let cols = mask.count();
    let (nx, ny) = plane(cols);
    if vol.dims() != [nx, ny, subjects.len()] {
        bail!(
            "{}: features volume dims {:?} do not fit {} subjects x {} voxels",
            ctx(),
            vol.dims(),
            subjects.len(),
            cols
        );
    }
    let mut values = Vec::with_capacity(cols * subjects.len());
    for z in 0..subjects.len() {
        values.extend_from_slice(&vol.data[z * nx * ny..z * nx * ny + cols]);
    }
    FeatureMatrix::new(subjects, mask, values).with_context(ctx)
}
