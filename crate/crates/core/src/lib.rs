//! Reproducible voxel-based classification benchmarks for neuroimaging
//! cohorts.
//!
//! The pipeline runs: [`curation`] of clinical and scan tables into a BIDS
//! tree, [`features`] (reference normalization, masking, subject x voxel
//! matrices), [`kernels`] (linear, Laplacian-regularized, two-kernel
//! combinations), the precomputed-kernel [`svm`], and [`evaluation`] by
//! nested cross-validation. [`phantom`] generates synthetic cohorts with a
//! known effect region so every stage can be checked without restricted
//! data.

pub mod curation;
pub mod evaluation;
pub mod features;
pub mod fsio;
pub mod kernels;
pub mod phantom;
pub mod seeds;
pub mod svm;
pub mod volume;
