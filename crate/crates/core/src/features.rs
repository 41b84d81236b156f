//! Analysis-ready features from co-registered volumes.
//!
//! PET volumes are divided by their mean over a reference region, non-brain
//! voxels are zeroed, and each subject's masked voxels become one row of a
//! [`FeatureMatrix`]. Features stay unstandardized.
//!
//! Partial volume correction is not implemented; a corrected volume can be
//! passed in place of the raw one before [`normalize_reference`].

use thiserror::Error;

use crate::volume::{flatten, Mask, Volume3D, VolumeError};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("dims {found:?} do not match mask dims {expected:?}{}", subject.as_ref().map(|s| format!(" (subject {s})")).unwrap_or_default())]
    DimsMismatch {
        expected: [usize; 3],
        found: [usize; 3],
        subject: Option<String>,
    },
    #[error("reference mask selects no voxels")]
    EmptyReference,
    #[error("mean over the reference region is {0}, must be positive")]
    NonpositiveReferenceMean(f64),
    #[error("no volumes given")]
    EmptyCohort,
    #[error("{subjects} subject ids for {volumes} volumes")]
    SubjectCount { subjects: usize, volumes: usize },
    #[error("feature matrix shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

fn check_dims(v: &Volume3D, m: &Mask) -> Result<()> {
    if v.dims() != m.dims() {
        return Err(FeatureError::DimsMismatch {
            expected: m.dims(),
            found: v.dims(),
            subject: None,
        });
    }
    Ok(())
}

/// Subject x voxel matrix. Rows are contiguous in `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    subjects: Vec<String>,
    mask: Mask,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(subjects: Vec<String>, mask: Mask, values: Vec<f64>) -> Result<Self> {
        let cols = mask.count();
        if values.len() != subjects.len() * cols {
            return Err(FeatureError::Shape(format!(
                "{} values for {} subjects x {} voxels",
                values.len(),
                subjects.len(),
                cols
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Shape("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            subjects,
            mask,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.mask.count()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_voxels();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_voxels().max(1)).take(self.n_subjects())
    }

    /// Same subjects and mask, values replaced.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        FeatureMatrix::new(self.subjects.clone(), self.mask.clone(), values)
    }

    /// Rows for the given subject ids, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let mut values = Vec::with_capacity(ids.len() * self.n_voxels());
        for id in ids {
            let i = self
                .subjects
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| FeatureError::Shape(format!("subject {id} not in matrix")))?;
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(ids.to_vec(), self.mask.clone(), values)
    }
}

/// Divides every voxel by the mean intensity over `reference`.
pub fn normalize_reference(pet: &Volume3D, reference: &Mask) -> Result<Volume3D> {
    check_dims(pet, reference)?;
    if reference.count() == 0 {
        return Err(FeatureError::EmptyReference);
    }
    let sum: f64 = flatten(pet, reference)?.iter().sum();
    let mean = sum / reference.count() as f64;
    if !(mean > 0.0) {
        return Err(FeatureError::NonpositiveReferenceMean(mean));
    }
    Ok(pet.with_data(pet.data.iter().map(|v| v / mean).collect())?)
}

/// Zeroes voxels outside `brain`.
pub fn apply_brain_mask(v: &Volume3D, brain: &Mask) -> Result<Volume3D> {
    check_dims(v, brain)?;
    let data = v
        .data
        .iter()
        .zip(brain.included())
        .map(|(&x, &keep)| if keep { x } else { 0.0 })
        .collect();
    Ok(v.with_data(data)?)
}

/// Row `i` is `flatten(volumes[i], mask)`. Subject ids default to the row
/// index when `subjects` is `None`.
pub fn build_feature_matrix(
    volumes: &[Volume3D],
    subjects: Option<&[String]>,
    mask: &Mask,
) -> Result<FeatureMatrix> {
    if volumes.is_empty() {
        return Err(FeatureError::EmptyCohort);
    }
    let ids: Vec<String> = match subjects {
        Some(s) if s.len() != volumes.len() => {
            return Err(FeatureError::SubjectCount {
                subjects: s.len(),
                volumes: volumes.len(),
            })
        }
        Some(s) => s.to_vec(),
        None => (0..volumes.len()).map(|i| i.to_string()).collect(),
    };
    let mut values = Vec::with_capacity(volumes.len() * mask.count());
    for (v, id) in volumes.iter().zip(&ids) {
        if v.dims() != mask.dims() {
            return Err(FeatureError::DimsMismatch {
                expected: mask.dims(),
                found: v.dims(),
                subject: Some(id.clone()),
            });
        }
        values.extend(flatten(v, mask)?);
    }
    FeatureMatrix::new(ids, mask.clone(), values)
}

/// Reference normalization (when `reference` is given), brain masking and
/// flattening over the brain mask, for one modality.
pub fn extract_features(
    volumes: &[&Volume3D],
    subjects: &[String],
    brain: &Mask,
    reference: Option<&Mask>,
) -> Result<FeatureMatrix> {
    let prepared = volumes
        .iter()
        .zip(subjects)
        .map(|(v, id)| {
            let v = match reference {
                Some(r) => normalize_reference(v, r),
                None => Ok((*v).clone()),
            };
            v.and_then(|v| apply_brain_mask(&v, brain)).map_err(|e| match e {
                FeatureError::DimsMismatch { expected, found, .. } => FeatureError::DimsMismatch {
                    expected,
                    found,
                    subject: Some(id.clone()),
                },
                e => e,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_feature_matrix(&prepared, Some(subjects), brain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::unflatten;
    use proptest::prelude::*;

    fn vol(dims: [usize; 3], data: Vec<f64>) -> Volume3D {
        Volume3D::from_data(dims, data).unwrap()
    }

    #[test]
    fn constant_normalizes_to_one() {
        let v = vol([2, 2, 1], vec![3.0; 4]);
        let r = Mask::new([2, 2, 1], vec![false, true, true, false]).unwrap();
        assert_eq!(normalize_reference(&v, &r).unwrap().data, vec![1.0; 4]);
    }

    #[test]
    fn ratio_to_reference() {
        let v = vol([2, 1, 1], vec![2.0, 4.0]);
        let r = Mask::new([2, 1, 1], vec![true, false]).unwrap();
        assert_eq!(normalize_reference(&v, &r).unwrap().data, vec![1.0, 2.0]);
    }

    #[test]
    fn reference_errors() {
        let v = vol([2, 1, 1], vec![0.0, 4.0]);
        let r = Mask::new([2, 1, 1], vec![true, false]).unwrap();
        assert_eq!(
            normalize_reference(&v, &r),
            Err(FeatureError::NonpositiveReferenceMean(0.0))
        );
        let empty = Mask::new([2, 1, 1], vec![false, false]).unwrap();
        assert_eq!(normalize_reference(&v, &empty), Err(FeatureError::EmptyReference));
        let wrong = Mask::full([1, 2, 1]).unwrap();
        assert!(matches!(
            normalize_reference(&v, &wrong),
            Err(FeatureError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn brain_mask_examples() {
        let v = vol([2, 1, 1], vec![5.0, 7.0]);
        let m = Mask::new([2, 1, 1], vec![true, false]).unwrap();
        assert_eq!(apply_brain_mask(&v, &m).unwrap().data, vec![5.0, 0.0]);
        let full = Mask::full([2, 1, 1]).unwrap();
        assert_eq!(apply_brain_mask(&v, &full).unwrap(), v);
    }

    #[test]
    fn matrix_rows() {
        let a = vol([2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let full = Mask::full([2, 2, 1]).unwrap();
        let f = build_feature_matrix(std::slice::from_ref(&a), None, &full).unwrap();
        assert_eq!(f.n_subjects(), 1);
        assert_eq!(f.row(0), a.data.as_slice());

        let f = build_feature_matrix(&[a.clone(), a.clone()], None, &full).unwrap();
        assert_eq!(f.row(0), f.row(1));

        let m = Mask::new([2, 2, 1], vec![false, true, true, false]).unwrap();
        let f = build_feature_matrix(std::slice::from_ref(&a), None, &m).unwrap();
        let back = unflatten(f.row(0), &m).unwrap();
        assert_eq!(flatten(&back, &m).unwrap(), f.row(0));

        assert_eq!(
            build_feature_matrix(&[], None, &m),
            Err(FeatureError::EmptyCohort)
        );
        let other = vol([4, 1, 1], vec![0.0; 4]);
        let ids = vec!["x".to_string(), "y".to_string()];
        let err = build_feature_matrix(&[a, other], Some(&ids), &m).unwrap_err();
        assert_eq!(
            err,
            FeatureError::DimsMismatch {
                expected: [2, 2, 1],
                found: [4, 1, 1],
                subject: Some("y".into())
            }
        );
    }

    proptest! {
        #[test]
        fn normalization_idempotent_and_scale_free(
            data in prop::collection::vec(0.1f64..10.0, 6),
            c in 0.01f64..100.0,
            pick in prop::collection::vec(any::<bool>(), 6),
        ) {
            prop_assume!(pick.iter().any(|&b| b));
            let v = vol([3, 2, 1], data.clone());
            let r = Mask::new([3, 2, 1], pick).unwrap();
            let once = normalize_reference(&v, &r).unwrap();
            let twice = normalize_reference(&once, &r).unwrap();
            let scaled = vol([3, 2, 1], data.iter().map(|x| x * c).collect());
            let scaled = normalize_reference(&scaled, &r).unwrap();
            for i in 0..6 {
                prop_assert!((once.data[i] - twice.data[i]).abs() <= 1e-12 * once.data[i].abs().max(1.0));
                prop_assert!((once.data[i] - scaled.data[i]).abs() <= 1e-12 * once.data[i].abs().max(1.0));
            }
            let ref_mean: f64 = flatten(&once, &r).unwrap().iter().sum::<f64>() / r.count() as f64;
            prop_assert!((ref_mean - 1.0).abs() < 1e-12);
        }
    }
}
