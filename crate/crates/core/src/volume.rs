//! Minimal NIfTI-1 volume I/O.
//!
//! Only the single-file, uncompressed, little-endian, 3-D subset is handled,
//! with storage types `uint8`, `int16` and `float32`. Values are held as `f64`
//! in memory whatever the storage type. Everything the writer emits is
//! float32 at offset 352 with unit scaling.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

pub const HEADER_SIZE: usize = 348;
pub const DATA_OFFSET: usize = 352;

/// Byte offsets of the NIfTI-1 header fields this module touches.
mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const REGULAR: usize = 38;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN: usize = 256;
    pub const QOFFSET: usize = 268;
    pub const SROW: usize = 280;
    pub const MAGIC: usize = 344;
}

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const NIFTI_UNITS_MM: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("input is {0} bytes, shorter than the 348-byte header")]
    TruncatedHeader(usize),
    #[error("sizeof_hdr is {0}, expected 348 (big-endian or not NIfTI-1)")]
    BadHeaderSize(i32),
    #[error("bad magic {0:?}, expected single-file \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("dim[0] is {0}, only 3-D volumes are supported")]
    DimensionalityNot3D(i16),
    #[error("invalid dimensions {0:?}")]
    InvalidDims([i64; 3]),
    #[error("invalid voxel size {0:?}")]
    InvalidVoxelSize([f32; 3]),
    #[error("vox_offset {0} is below 352 or not representable")]
    BadVoxOffset(f32),
    #[error("data section truncated: need {expected} bytes, {available} available")]
    TruncatedData { expected: usize, available: usize },
    #[error("non-finite value at voxel {0}")]
    NonFiniteValue(usize),
    #[error("data length {actual} does not match dims (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("dims {0:?} do not match {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("feature vector has length {actual}, mask selects {expected} voxels")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension {0} exceeds the NIfTI-1 limit of 32767")]
    DimsTooLarge(usize),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, VolumeError>;

/// On-disk storage type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
        }
    }
}

/// Orientation fields carried through reads untouched.
///
/// The toolkit never resamples, so these are kept only for provenance. The
/// writer always emits [`Orientation::identity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    pub qfac: f32,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
}

impl Orientation {
    /// Scanner-space sform that maps voxel indices to millimetres with no
    /// rotation or offset.
    pub fn identity(voxel_size_mm: [f32; 3]) -> Self {
        let mut srow = [[0.0f32; 4]; 3];
        for (axis, row) in srow.iter_mut().enumerate() {
            row[axis] = voxel_size_mm[axis];
        }
        Orientation {
            qform_code: 0,
            sform_code: 1,
            qfac: 1.0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub voxel_size_mm: [f32; 3],
    pub datatype: Datatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub orientation: Orientation,
}

impl VolumeHeader {
    /// Float32 header with unit scaling and identity orientation.
    pub fn new(dims: [usize; 3], voxel_size_mm: [f32; 3]) -> Result<Self> {
        validate_dims(dims)?;
        validate_voxel_size(voxel_size_mm)?;
        Ok(VolumeHeader {
            dims,
            voxel_size_mm,
            datatype: Datatype::Float32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            orientation: Orientation::identity(voxel_size_mm),
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }
}

fn validate_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(VolumeError::InvalidDims(dims.map(|d| d as i64)));
    }
    Ok(())
}

fn validate_voxel_size(size: [f32; 3]) -> Result<()> {
    if size.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(VolumeError::InvalidVoxelSize(size));
    }
    Ok(())
}

/// A scalar field on a voxel grid. Data is x-fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub header: VolumeHeader,
    pub data: Vec<f64>,
}

impl Volume3D {
    pub fn new(header: VolumeHeader, data: Vec<f64>) -> Result<Self> {
        let v = Volume3D { header, data };
        v.validate()?;
        Ok(v)
    }

    /// Float32 volume with 1 mm isotropic voxels.
    pub fn from_data(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        Volume3D::new(VolumeHeader::new(dims, [1.0; 3])?, data)
    }

    pub fn zeros(header: VolumeHeader) -> Self {
        let n = header.voxel_count();
        Volume3D {
            header,
            data: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.header.dims
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.header.dims, x, y, z)
    }

    /// Checks dims, voxel sizes, data length and finiteness.
    pub fn validate(&self) -> Result<()> {
        validate_dims(self.header.dims)?;
        validate_voxel_size(self.header.voxel_size_mm)?;
        let expected = self.header.voxel_count();
        if self.data.len() != expected {
            return Err(VolumeError::DataLength {
                expected,
                actual: self.data.len(),
            });
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteValue(i));
        }
        Ok(())
    }

    /// Same header, new values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Volume3D::new(self.header.clone(), data)
    }
}

pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Boolean voxel selection over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    included: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn new(dims: [usize; 3], included: Vec<bool>) -> Result<Self> {
        validate_dims(dims)?;
        let expected: usize = dims.iter().product();
        if included.len() != expected {
            return Err(VolumeError::DataLength {
                expected,
                actual: included.len(),
            });
        }
        let count = included.iter().filter(|&&b| b).count();
        Ok(Mask {
            dims,
            included,
            count,
        })
    }

    pub fn full(dims: [usize; 3]) -> Result<Self> {
        Mask::new(dims, vec![true; dims.iter().product()])
    }

    /// Voxels with a nonzero value are included.
    pub fn from_volume(v: &Volume3D) -> Self {
        let included: Vec<bool> = v.data.iter().map(|&x| x != 0.0).collect();
        let count = included.iter().filter(|&&b| b).count();
        Mask {
            dims: v.dims(),
            included,
            count,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn contains(&self, linear: usize) -> bool {
        self.included[linear]
    }

    /// Linear indices of the included voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.included
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Mask as a 0/1 float32 volume with 1 mm voxels.
    pub fn to_volume(&self) -> Volume3D {
        let data = self
            .included
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Volume3D::from_data(self.dims, data).expect("mask dims are valid")
    }
}

/// Parses a single-file NIfTI-1 image.
pub fn read_volume(bytes: &[u8]) -> Result<Volume3D> {
    if bytes.len() < HEADER_SIZE {
        return Err(VolumeError::TruncatedHeader(bytes.len()));
    }
    let le = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]);
    if le != HEADER_SIZE as i32 {
        return Err(VolumeError::BadHeaderSize(le));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[offsets::MAGIC..offsets::MAGIC + 4]);
    if &magic != MAGIC_SINGLE {
        return Err(VolumeError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    LittleEndian::read_i16_into(&bytes[offsets::DIM..offsets::DIM + 16], &mut dim);
    if dim[0] != 3 {
        return Err(VolumeError::DimensionalityNot3D(dim[0]));
    }
    if dim[1..4].iter().any(|&d| d <= 0) {
        return Err(VolumeError::InvalidDims([
            dim[1] as i64,
            dim[2] as i64,
            dim[3] as i64,
        ]));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype = Datatype::from_code(LittleEndian::read_i16(&bytes[offsets::DATATYPE..]))?;

    let mut pixdim = [0f32; 8];
    LittleEndian::read_f32_into(&bytes[offsets::PIXDIM..offsets::PIXDIM + 32], &mut pixdim);
    let voxel_size_mm = [pixdim[1], pixdim[2], pixdim[3]];
    validate_voxel_size(voxel_size_mm)?;

    let vox_offset = LittleEndian::read_f32(&bytes[offsets::VOX_OFFSET..]);
    if !(vox_offset.is_finite() && vox_offset >= DATA_OFFSET as f32) {
        return Err(VolumeError::BadVoxOffset(vox_offset));
    }
    let data_start = vox_offset as usize;

    let scl_slope = LittleEndian::read_f32(&bytes[offsets::SCL_SLOPE..]);
    let scl_inter = LittleEndian::read_f32(&bytes[offsets::SCL_INTER..]);

    let mut quatern = [0f32; 3];
    LittleEndian::read_f32_into(&bytes[offsets::QUATERN..offsets::QUATERN + 12], &mut quatern);
    let mut qoffset = [0f32; 3];
    LittleEndian::read_f32_into(&bytes[offsets::QOFFSET..offsets::QOFFSET + 12], &mut qoffset);
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        let at = offsets::SROW + 16 * r;
        LittleEndian::read_f32_into(&bytes[at..at + 16], row);
    }
    let orientation = Orientation {
        qform_code: LittleEndian::read_i16(&bytes[offsets::QFORM_CODE..]),
        sform_code: LittleEndian::read_i16(&bytes[offsets::SFORM_CODE..]),
        qfac: pixdim[0],
        quatern,
        qoffset,
        srow,
    };

    let n = dims.iter().product::<usize>();
    let expected = n * datatype.bytes_per_voxel();
    let available = bytes.len().saturating_sub(data_start);
    if available < expected {
        return Err(VolumeError::TruncatedData {
            expected,
            available,
        });
    }
    let raw = &bytes[data_start..data_start + expected];
    let mut data: Vec<f64> = match datatype {
        Datatype::Uint8 => raw.iter().map(|&b| b as f64).collect(),
        Datatype::Int16 => raw
            .chunks_exact(2)
            .map(|c| LittleEndian::read_i16(c) as f64)
            .collect(),
        Datatype::Float32 => raw
            .chunks_exact(4)
            .map(|c| LittleEndian::read_f32(c) as f64)
            .collect(),
    };

    if scl_slope != 0.0 && (scl_slope != 1.0 || scl_inter != 0.0) {
        let slope = scl_slope as f64;
        let inter = scl_inter as f64;
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    Volume3D::new(
        VolumeHeader {
            dims,
            voxel_size_mm,
            datatype,
            scl_slope,
            scl_inter,
            orientation,
        },
        data,
    )
}

/// Serializes as float32 NIfTI-1 with unit scaling and identity orientation.
pub fn write_volume(v: &Volume3D) -> Result<Vec<u8>> {
    v.validate()?;
    if let Some(&d) = v.header.dims.iter().find(|&&d| d > i16::MAX as usize) {
        return Err(VolumeError::DimsTooLarge(d));
    }

    let n = v.header.voxel_count();
    let mut out = vec![0u8; DATA_OFFSET + 4 * n];
    let hdr = &mut out[..HEADER_SIZE];

    LittleEndian::write_i32(&mut hdr[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    hdr[offsets::REGULAR] = b'r';
    let dims = v.header.dims;
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    LittleEndian::write_i16_into(&dim, &mut hdr[offsets::DIM..offsets::DIM + 16]);
    LittleEndian::write_i16(&mut hdr[offsets::DATATYPE..], Datatype::Float32.code());
    LittleEndian::write_i16(&mut hdr[offsets::BITPIX..], 32);

    let vs = v.header.voxel_size_mm;
    let orientation = Orientation::identity(vs);
    let pixdim: [f32; 8] = [orientation.qfac, vs[0], vs[1], vs[2], 1.0, 1.0, 1.0, 1.0];
    LittleEndian::write_f32_into(&pixdim, &mut hdr[offsets::PIXDIM..offsets::PIXDIM + 32]);
    LittleEndian::write_f32(&mut hdr[offsets::VOX_OFFSET..], DATA_OFFSET as f32);
    LittleEndian::write_f32(&mut hdr[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut hdr[offsets::SCL_INTER..], 0.0);
    hdr[offsets::XYZT_UNITS] = NIFTI_UNITS_MM;

    let descrip = b"voxbench";
    hdr[offsets::DESCRIP..offsets::DESCRIP + descrip.len()].copy_from_slice(descrip);

    LittleEndian::write_i16(&mut hdr[offsets::QFORM_CODE..], orientation.qform_code);
    LittleEndian::write_i16(&mut hdr[offsets::SFORM_CODE..], orientation.sform_code);
    LittleEndian::write_f32_into(
        &orientation.quatern,
        &mut hdr[offsets::QUATERN..offsets::QUATERN + 12],
    );
    LittleEndian::write_f32_into(
        &orientation.qoffset,
        &mut hdr[offsets::QOFFSET..offsets::QOFFSET + 12],
    );
    for (r, row) in orientation.srow.iter().enumerate() {
        let at = offsets::SROW + 16 * r;
        LittleEndian::write_f32_into(row, &mut hdr[at..at + 16]);
    }
    hdr[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);

    // bytes 348..352 stay zero: the empty extension flag
    for (chunk, &value) in out[DATA_OFFSET..].chunks_exact_mut(4).zip(&v.data) {
        LittleEndian::write_f32(chunk, value as f32);
    }
    Ok(out)
}

pub fn read_volume_file(path: &Path) -> Result<Volume3D> {
    let bytes = fs::read(path).map_err(|e| VolumeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_volume(&bytes)
}

pub fn write_volume_file(path: &Path, v: &Volume3D) -> Result<()> {
    let bytes = write_volume(v)?;
    fs::write(path, bytes).map_err(|e| VolumeError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Values of `v` at the included voxels, in ascending linear-index order.
pub fn flatten(v: &Volume3D, m: &Mask) -> Result<Vec<f64>> {
    if v.dims() != m.dims() {
        return Err(VolumeError::DimsMismatch(v.dims(), m.dims()));
    }
    Ok(v
        .data
        .iter()
        .zip(m.included())
        .filter_map(|(&x, &keep)| keep.then_some(x))
        .collect())
}

/// Inverse of [`flatten`]; excluded voxels are zero. The result is a
/// float32 volume with 1 mm voxels.
pub fn unflatten(values: &[f64], m: &Mask) -> Result<Volume3D> {
    if values.len() != m.count() {
        return Err(VolumeError::LengthMismatch {
            expected: m.count(),
            actual: values.len(),
        });
    }
    let mut data = vec![0.0; m.included().len()];
    for (slot, &x) in m.indices().into_iter().zip(values) {
        data[slot] = x;
    }
    Volume3D::from_data(m.dims(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int16_volume(raw: i16, slope: f32, inter: f32) -> Vec<u8> {
        let v = Volume3D::from_data([1, 1, 1], vec![0.0]).unwrap();
        let mut bytes = write_volume(&v).unwrap();
        LittleEndian::write_i16(&mut bytes[offsets::DATATYPE..], 4);
        LittleEndian::write_i16(&mut bytes[offsets::BITPIX..], 16);
        LittleEndian::write_f32(&mut bytes[offsets::SCL_SLOPE..], slope);
        LittleEndian::write_f32(&mut bytes[offsets::SCL_INTER..], inter);
        bytes.truncate(DATA_OFFSET);
        bytes.extend_from_slice(&raw.to_le_bytes());
        bytes
    }

    #[test]
    fn single_zero_voxel_roundtrip() {
        let v = Volume3D::from_data([1, 1, 1], vec![0.0]).unwrap();
        assert_eq!(read_volume(&write_volume(&v).unwrap()).unwrap(), v);
    }

    #[test]
    fn int16_scaling_applied() {
        let v = read_volume(&int16_volume(3, 2.0, 1.0)).unwrap();
        assert_eq!(v.data, vec![7.0]);
        assert_eq!(v.header.datatype, Datatype::Int16);
    }

    #[test]
    fn zero_slope_means_no_scaling() {
        let v = read_volume(&int16_volume(-5, 0.0, 10.0)).unwrap();
        assert_eq!(v.data, vec![-5.0]);
    }

    #[test]
    fn uint8_read() {
        let v = Volume3D::from_data([2, 1, 1], vec![0.0, 0.0]).unwrap();
        let mut bytes = write_volume(&v).unwrap();
        LittleEndian::write_i16(&mut bytes[offsets::DATATYPE..], 2);
        bytes.truncate(DATA_OFFSET);
        bytes.extend_from_slice(&[9, 250]);
        assert_eq!(read_volume(&bytes).unwrap().data, vec![9.0, 250.0]);
    }

    #[test]
    fn two_file_magic_rejected() {
        let v = Volume3D::from_data([1, 1, 1], vec![0.0]).unwrap();
        let mut bytes = write_volume(&v).unwrap();
        bytes[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"ni1\0");
        assert_eq!(read_volume(&bytes), Err(VolumeError::BadMagic(*b"ni1\0")));
    }

    #[test]
    fn layout_of_small_volume() {
        let v = Volume3D::from_data([2, 2, 2], (0..8).map(|i| i as f64).collect()).unwrap();
        let bytes = write_volume(&v).unwrap();
        assert_eq!(bytes.len() - DATA_OFFSET, 32);
        for i in 0..8 {
            let at = DATA_OFFSET + 4 * i;
            assert_eq!(LittleEndian::read_f32(&bytes[at..]), i as f32);
        }
        // x-fastest: voxel (1,0,0) follows (0,0,0), (0,1,0) is two floats in
        assert_eq!(v.linear_index(1, 0, 0), 1);
        assert_eq!(v.linear_index(0, 1, 0), 2);
        assert_eq!(v.linear_index(0, 0, 1), 4);
    }

    #[test]
    fn writer_is_deterministic() {
        let v = Volume3D::from_data([3, 2, 1], vec![1.5, -2.0, 0.25, 8.0, 0.0, 3.0]).unwrap();
        assert_eq!(write_volume(&v).unwrap(), write_volume(&v).unwrap());
    }

    #[test]
    fn nan_rejected_before_write() {
        let mut v = Volume3D::from_data([2, 1, 1], vec![1.0, 2.0]).unwrap();
        v.data[1] = f64::NAN;
        assert_eq!(write_volume(&v), Err(VolumeError::NonFiniteValue(1)));
    }

    #[test]
    fn truncated_data_detected() {
        let v = Volume3D::from_data([2, 2, 2], vec![1.0; 8]).unwrap();
        let bytes = write_volume(&v).unwrap();
        let err = read_volume(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(
            err,
            VolumeError::TruncatedData {
                expected: 32,
                available: 31
            }
        );
    }

    #[test]
    fn four_d_rejected() {
        let v = Volume3D::from_data([1, 1, 1], vec![0.0]).unwrap();
        let mut bytes = write_volume(&v).unwrap();
        LittleEndian::write_i16(&mut bytes[offsets::DIM..], 4);
        assert_eq!(read_volume(&bytes), Err(VolumeError::DimensionalityNot3D(4)));
    }

    #[test]
    fn flatten_examples() {
        let v = Volume3D::from_data([2, 1, 1], vec![3.0, 4.0]).unwrap();
        let m = Mask::new([2, 1, 1], vec![false, true]).unwrap();
        assert_eq!(flatten(&v, &m).unwrap(), vec![4.0]);

        let full = Mask::full([2, 1, 1]).unwrap();
        assert_eq!(flatten(&v, &full).unwrap(), v.data);

        let w = Volume3D::from_data([2, 2, 1], vec![5.0, 1.0, 2.0, 3.0]).unwrap();
        let first = Mask::new([2, 2, 1], vec![true, false, false, false]).unwrap();
        assert_eq!(flatten(&w, &first).unwrap(), vec![5.0]);

        assert!(matches!(
            flatten(&w, &m),
            Err(VolumeError::DimsMismatch(..))
        ));
    }

    #[test]
    fn unflatten_examples() {
        let m = Mask::new([2, 1, 1], vec![false, true]).unwrap();
        assert_eq!(unflatten(&[4.0], &m).unwrap().data, vec![0.0, 4.0]);
        assert_eq!(
            unflatten(&[1.0, 2.0], &m),
            Err(VolumeError::LengthMismatch {
                expected: 1,
                actual: 2
            })
        );
        let full = Mask::full([3, 1, 1]).unwrap();
        let vals = vec![1.0, -1.0, 0.5];
        assert_eq!(unflatten(&vals, &full).unwrap().data, vals);
    }

    #[test]
    fn mask_from_volume_counts() {
        let v = Volume3D::from_data([3, 1, 1], vec![0.0, 0.2, 1.0]).unwrap();
        let m = Mask::from_volume(&v);
        assert_eq!(m.count(), 2);
        assert_eq!(m.indices(), vec![1, 2]);
        assert_eq!(Mask::from_volume(&m.to_volume()), m);
    }
}
