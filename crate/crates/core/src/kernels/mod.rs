//! Subject-level Gram matrices.
//!
//! Every entry is accumulated in `f64` in ascending voxel order, so results
//! are bitwise independent of how rows are scheduled across threads.

mod diffusion;
mod graph;

use std::fmt;

use byteorder::{ByteOrder, LittleEndian};
use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::fsio::sha256_hex;

pub use diffusion::{diffuse, regularized_gram, RegularizationParams, DEFAULT_SIGMA_TISSUE};
pub use graph::{build_voxel_graph, VoxelGraph};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernels have different subject lists")]
    SubjectMismatch,
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("kernel matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("kernel matrix has non-finite entries")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tissue map dims {found:?} do not match mask dims {expected:?}")]
    DimsMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("sigma must be positive, got {0}")]
    NonpositiveSigma(f64),
    #[error("at most 3 tissue maps are supported, got {0}")]
    TooManyTissueMaps(usize),
    #[error("tissue probability {value} at voxel {voxel} outside [0, 1]")]
    TissueOutOfRange { voxel: usize, value: f64 },
    #[error("diffusion unstable: beta * 2 * max_degree / steps = {ratio} >= 1")]
    StabilityViolated { ratio: f64 },
    #[error("invalid regularization parameters: {0}")]
    InvalidParams(String),
    #[error("kernel file: {0}")]
    Format(String),
    #[error("kernel file digest mismatch: header {expected}, content {actual}")]
    DigestMismatch { expected: String, actual: String },
}

pub type Result<T> = std::result::Result<T, KernelError>;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Symmetric subject x subject matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct KernelMatrix {
    subjects: Vec<String>,
    values: Vec<f64>,
}

impl fmt::Debug for KernelMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelMatrix")
            .field("n", &self.n())
            .field("digest", &self.digest())
            .finish()
    }
}

impl KernelMatrix {
    /// Validates shape, finiteness, and symmetry to 1e-10 relative to the
    /// largest entry.
    pub fn new(subjects: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = subjects.len();
        if values.len() != n * n {
            return Err(KernelError::ShapeMismatch(format!(
                "{} values for {n} subjects",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (values[i * n + j] - values[j * n + i]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(KernelError::NotSymmetric(i, j));
                }
            }
        }
        Ok(KernelMatrix { subjects, values })
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i)).sum()
    }

    /// Dense block `rows x cols`, row-major.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.row(r);
            out.extend(cols.iter().map(|&c| row[c]));
        }
        out
    }

    /// Principal submatrix over `idx`, subjects reordered accordingly.
    pub fn submatrix(&self, idx: &[usize]) -> KernelMatrix {
        KernelMatrix {
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
            values: self.block(idx, idx),
        }
    }

    /// Hex SHA-256 of the little-endian value block.
    pub fn digest(&self) -> String {
        sha256_hex(&self.value_bytes())
    }

    fn value_bytes(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; 8 * self.values.len()];
        LittleEndian::write_f64_into(&self.values, &mut bytes);
        bytes
    }

    /// Binary container: magic `VXKM`, version `u32`, `n` as `u64`, the
    /// 32-byte SHA-256 of the value block, `n` length-prefixed UTF-8 subject
    /// ids, then `n * n` row-major `f64`. All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(KMAT_MAGIC);
        out.extend_from_slice(&KMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n() as u64).to_le_bytes());
        let data = self.value_bytes();
        out.extend_from_slice(&hex::decode(sha256_hex(&data)).expect("hex digest"));
        for s in &self.subjects {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, at: 0 };
        if cur.take(4)? != KMAT_MAGIC {
            return Err(KernelError::Format("bad magic".into()));
        }
        let version = LittleEndian::read_u32(cur.take(4)?);
        if version != KMAT_VERSION {
            return Err(KernelError::Format(format!("unsupported version {version}")));
        }
        let n = LittleEndian::read_u64(cur.take(8)?) as usize;
        let expected = hex::encode(cur.take(32)?);
        let mut subjects = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = LittleEndian::read_u32(cur.take(4)?) as usize;
            let s = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| KernelError::Format("subject id is not UTF-8".into()))?;
            subjects.push(s.to_string());
        }
        let len = n
            .checked_mul(n)
            .and_then(|nn| nn.checked_mul(8))
            .ok_or_else(|| KernelError::Format("n overflows".into()))?;
        let data = cur.take(len)?;
        if cur.at != bytes.len() {
            return Err(KernelError::Format("trailing bytes".into()));
        }
        let actual = sha256_hex(data);
        if actual != expected {
            return Err(KernelError::DigestMismatch { expected, actual });
        }
        let mut values = vec![0.0; n * n];
        LittleEndian::read_f64_into(data, &mut values);
        KernelMatrix::new(subjects, values)
    }
}

const KMAT_MAGIC: &[u8; 4] = b"VXKM";
const KMAT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| KernelError::Format("truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
}

/// Sequential dot product, ascending index.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Inner products of every pair of rows.
pub fn linear_gram(features: &FeatureMatrix) -> KernelMatrix {
    let n = features.n_subjects();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = features.row(i);
            (i..n).map(|j| dot(ri, features.row(j))).collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    KernelMatrix {
        subjects: features.subjects().to_vec(),
        values,
    }
}

/// Convex mixing weight of two kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MklParams {
    alpha: f64,
}

impl MklParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(KernelError::AlphaOutOfRange(alpha));
        }
        Ok(MklParams { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

/// `alpha * first + (1 - alpha) * second`.
pub fn combine(first: &KernelMatrix, second: &KernelMatrix, params: MklParams) -> Result<KernelMatrix> {
    if first.subjects != second.subjects {
        return Err(KernelError::SubjectMismatch);
    }
    let a = params.alpha;
    let values = first
        .values
        .iter()
        .zip(&second.values)
        .map(|(x, y)| mix(a, *x, *y))
        .collect();
    Ok(KernelMatrix {
        subjects: first.subjects.clone(),
        values,
    })
}

/// The single mixing formula shared by [`combine`] and block extraction.
#[inline]
pub(crate) fn mix(alpha: f64, x: f64, y: f64) -> f64 {
    alpha * x + (1.0 - alpha) * y
}
