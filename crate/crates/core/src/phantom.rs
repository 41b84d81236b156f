//! Synthetic two-group cohorts with a known discriminative region.
//!
//! Group A is labelled CN and group B AD. Every brain voxel is a smooth
//! baseline plus independent Gaussian noise; in informative modalities group
//! B is shifted by `effect_size` inside the effect box. PET volumes carry a
//! random global scale per subject and a noise-free reference block, so
//! reference normalization removes the scale exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::curation::{
    build_manifest, AmyloidStatus, BaseGroup, ClinicalRecord, CohortManifest, CurationError,
    Diagnosis, Modality, ScanRecord, StudyPhase,
};
use crate::seeds::derive_seed;
use crate::volume::{Mask, Volume3D};

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Curation(#[from] CurationError),
}

pub type Result<T> = std::result::Result<T, PhantomError>;

/// Axis-aligned box of voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub corner: [usize; 3],
    pub size: [usize; 3],
}

impl Region {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let p = [x, y, z];
        (0..3).all(|a| p[a] >= self.corner[a] && p[a] < self.corner[a] + self.size[a])
    }

    fn fits(&self, dims: [usize; 3]) -> bool {
        (0..3).all(|a| self.size[a] > 0 && self.corner[a] + self.size[a] <= dims[a])
    }

    fn overlaps(&self, other: &Region) -> bool {
        (0..3).all(|a| {
            self.corner[a] < other.corner[a] + other.size[a]
                && other.corner[a] < self.corner[a] + self.size[a]
        })
    }

    pub fn to_mask(&self, dims: [usize; 3]) -> Mask {
        let mut inc = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    inc.push(self.contains(x, y, z));
                }
            }
        }
        Mask::new(dims, inc).expect("dims match")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub n_per_group: usize,
    pub dims: [usize; 3],
    pub effect_region: Region,
    pub effect_size: f64,
    pub noise_sd: f64,
    /// Modalities to generate, each flagged informative or pure noise.
    pub modalities: Vec<(Modality, bool)>,
    /// Noise-free block used for PET intensity normalization.
    pub reference_region: Region,
    /// Adds a second, uncorrected and corrupted T1 scan per subject that
    /// scan selection must reject.
    pub duplicate_t1: bool,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            n_per_group: 40,
            dims: [16, 16, 16],
            effect_region: Region {
                corner: [6, 6, 6],
                size: [4, 4, 4],
            },
            effect_size: 2.0,
            noise_sd: 1.0,
            modalities: vec![(Modality::T1, true), (Modality::FDG, true)],
            reference_region: Region {
                corner: [1, 1, 1],
                size: [2, 2, 2],
            },
            duplicate_t1: false,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PhantomError::InvalidSpec(m.to_string()));
        if self.n_per_group == 0 {
            return bad("n_per_group must be positive");
        }
        if self.dims.contains(&0) {
            return bad("dims must be positive");
        }
        if !self.effect_region.fits(self.dims) {
            return bad("effect region outside the grid");
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return bad("effect size must be nonnegative");
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise sd must be positive");
        }
        if self.modalities.is_empty() {
            return bad("no modalities");
        }
        let mut seen = Vec::new();
        for (m, _) in &self.modalities {
            if seen.contains(m) {
                return bad("duplicate modality");
            }
            seen.push(*m);
        }
        if self.modalities.iter().any(|(m, _)| m.is_pet()) {
            if !self.reference_region.fits(self.dims) {
                return bad("reference region outside the grid");
            }
            if self.reference_region.overlaps(&self.effect_region) {
                return bad("reference region overlaps the effect region");
            }
        }
        Ok(())
    }
}

/// Ground truth of a generated cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub spec: PhantomSpec,
    /// Subject id and group, in generation order.
    pub subjects: Vec<(String, BaseGroup)>,
}

impl PhantomTruth {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let triple = |v: [usize; 3]| format!("{},{},{}", v[0], v[1], v[2]);
        writeln!(out, "seed={}", s.seed).unwrap();
        writeln!(out, "n_per_group={}", s.n_per_group).unwrap();
        writeln!(out, "dims={}", triple(s.dims)).unwrap();
        writeln!(out, "effect_corner={}", triple(s.effect_region.corner)).unwrap();
        writeln!(out, "effect_size_voxels={}", triple(s.effect_region.size)).unwrap();
        writeln!(out, "effect_size={}", s.effect_size).unwrap();
        writeln!(out, "noise_sd={}", s.noise_sd).unwrap();
        writeln!(out, "reference_corner={}", triple(s.reference_region.corner)).unwrap();
        writeln!(out, "reference_size_voxels={}", triple(s.reference_region.size)).unwrap();
        for (m, informative) in &s.modalities {
            writeln!(out, "informative_{}={}", m, informative).unwrap();
        }
        writeln!(out, "group_A={}", BaseGroup::CN).unwrap();
        writeln!(out, "group_B={}", BaseGroup::AD).unwrap();
        out
    }
}

#[derive(Debug, Clone)]
pub struct PhantomCohort {
    pub manifest: CohortManifest,
    pub clinical: Vec<ClinicalRecord>,
    pub scans: Vec<ScanRecord>,
    /// Raw volumes keyed by scan source path.
    pub sources: BTreeMap<String, Volume3D>,
    pub brain_mask: Mask,
    pub reference_mask: Mask,
    /// Grey matter, white matter and CSF probability maps.
    pub tissue_maps: Vec<Volume3D>,
    pub truth: PhantomTruth,
}

impl PhantomCohort {
    /// Selected raw volumes of `modality`, in manifest order.
    pub fn volumes(&self, modality: Modality) -> Vec<&Volume3D> {
        self.manifest
            .entries
            .iter()
            .filter_map(|e| e.scans.get(&modality))
            .map(|s| &self.sources[&s.source_path])
            .collect()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.manifest.entries.iter().map(|e| e.subject_id.clone()).collect()
    }
}

/// Everything but a one-voxel border, or the whole grid when an axis is
/// shorter than three voxels.
fn brain_mask(dims: [usize; 3]) -> Mask {
    if dims.iter().any(|&d| d < 3) {
        return Mask::full(dims).expect("positive dims");
    }
    Region {
        corner: [1, 1, 1],
        size: [dims[0] - 2, dims[1] - 2, dims[2] - 2],
    }
    .to_mask(dims)
}

fn ramp(i: usize, n: usize) -> f64 {
    if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        0.5
    }
}

fn tissue_maps(dims: [usize; 3]) -> Vec<Volume3D> {
    let mut gm = Vec::new();
    let mut wm = Vec::new();
    let mut csf = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let g = 0.1 + 0.8 * 0.5 * (ramp(x, dims[0]) + ramp(y, dims[1]));
                gm.push(g);
                wm.push(1.0 - g);
                csf.push(0.3 * ramp(z, dims[2]));
            }
        }
    }
    [gm, wm, csf]
        .into_iter()
        .map(|d| Volume3D::from_data(dims, d).expect("dims match"))
        .collect()
}

pub const SUBJECT_SITE: &str = "941";
const HORIZON: u32 = 36;

fn subject_id(i: usize) -> String {
    format!("{SUBJECT_SITE}_S_{:04}", i + 1)
}

fn source_path(id: &str, modality: Modality, uid: &str) -> String {
    format!("raw/{id}/{}_{uid}.nii", modality.as_str().to_ascii_lowercase())
}

fn scan_record(id: &str, modality: Modality, uid: String, corrected: bool) -> ScanRecord {
    ScanRecord {
        subject_id: id.to_string(),
        months_from_baseline: 0,
        modality,
        gradwarp: corrected,
        b1_corrected: corrected,
        quality_rank: 1,
        field_strength_tesla: 1.5,
        study_phase: StudyPhase::Phase1,
        coregistered_averaged: modality.is_pet(),
        source_path: source_path(id, modality, &uid),
        scan_uid: uid,
    }
}

struct SubjectVolumes {
    scans: Vec<(ScanRecord, Volume3D)>,
}

fn subject_volumes(spec: &PhantomSpec, index: usize, group_b: bool, gm: &Volume3D, brain: &Mask) -> SubjectVolumes {
    let id = subject_id(index);
    let dims = spec.dims;
    let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
    let mut scans = Vec::new();
    for (mi, &(modality, informative)) in spec.modalities.iter().enumerate() {
        let stream = (index as u64) * 16 + mi as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, stream));
        let scale = if modality.is_pet() {
            rng.random_range(0.5..1.5)
        } else {
            1.0
        };
        let shift = if group_b && informative { spec.effect_size } else { 0.0 };
        let mut data = Vec::with_capacity(gm.data.len());
        let mut lin = 0;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let v = if modality.is_pet() && spec.reference_region.contains(x, y, z) {
                        scale
                    } else if brain.contains(lin) {
                        let base = if modality.is_pet() { 1.0 } else { gm.data[lin] };
                        let effect = if spec.effect_region.contains(x, y, z) { shift } else { 0.0 };
                        scale * (base + effect + noise.sample(&mut rng))
                    } else {
                        0.0
                    };
                    data.push(v);
                    lin += 1;
                }
            }
        }
        let uid = format!("I{}{:02}", index + 1, 2 * mi);
        scans.push((
            scan_record(&id, modality, uid, true),
            Volume3D::from_data(dims, data).expect("dims match"),
        ));
        if modality == Modality::T1 && spec.duplicate_t1 {
            // smaller uid, so only the correction flags can reject it
            let uid = format!("I{}{:02}", index + 1, 2 * mi + 1);
            let junk: Vec<f64> = (0..gm.data.len()).map(|_| 100.0 * rng.random::<f64>()).collect();
            scans.push((
                scan_record(&id, modality, format!("A{uid}"), false),
                Volume3D::from_data(dims, junk).expect("dims match"),
            ));
        }
    }
    SubjectVolumes { scans }
}

/// Generates the cohort described by `spec`. Identical specs give
/// bitwise-identical cohorts.
pub fn generate_cohort(spec: &PhantomSpec) -> Result<PhantomCohort> {
    spec.validate()?;
    let n = 2 * spec.n_per_group;
    let brain = brain_mask(spec.dims);
    let tissue = tissue_maps(spec.dims);
    let per_subject: Vec<SubjectVolumes> = (0..n)
        .into_par_iter()
        .map(|i| subject_volumes(spec, i, i >= spec.n_per_group, &tissue[0], &brain))
        .collect();

    let mut clinical = Vec::new();
    let mut scans = Vec::new();
    let mut sources = BTreeMap::new();
    let mut subjects = Vec::new();
    for (i, sv) in per_subject.into_iter().enumerate() {
        let id = subject_id(i);
        let group = if i >= spec.n_per_group { BaseGroup::AD } else { BaseGroup::CN };
        let visits: &[(u32, Diagnosis)] = match group {
            BaseGroup::AD => &[(0, Diagnosis::AD)],
            _ => &[(0, Diagnosis::CN), (12, Diagnosis::CN), (24, Diagnosis::CN), (36, Diagnosis::CN)],
        };
        for &(month, diagnosis) in visits {
            clinical.push(ClinicalRecord {
                subject_id: id.clone(),
                months_from_baseline: month,
                diagnosis,
                amyloid_status: AmyloidStatus::Unknown,
            });
        }
        for (rec, vol) in sv.scans {
            sources.insert(rec.source_path.clone(), vol);
            scans.push(rec);
        }
        subjects.push((id, group));
    }
    let manifest = build_manifest(&clinical, &scans, HORIZON)?.manifest;
    Ok(PhantomCohort {
        manifest,
        clinical,
        scans,
        sources,
        reference_mask: spec.reference_region.to_mask(spec.dims),
        brain_mask: brain,
        tissue_maps: tissue,
        truth: PhantomTruth {
            spec: spec.clone(),
            subjects,
        },
    })
}
