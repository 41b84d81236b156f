//! Soft-margin SVM trained in the dual over a precomputed kernel.
//!
//! The solver is sequential minimal optimization with second-order working
//! pair selection. Candidates are scanned in a seeded permutation order, so
//! the seed only decides between exactly tied pairs. There is no shrinking
//! and no kernel cache: the kernel is always fully materialized here.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::kernels::KernelMatrix;
use crate::volume::{unflatten, Volume3D};

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("solver did not converge within {0} passes")]
    NotConverged(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SvmError>;

/// Binary class. Ties in the decision function go to `Positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "-1")]
    Negative,
    #[serde(rename = "+1")]
    Positive,
}

impl Class {
    pub fn sign(self) -> f64 {
        match self {
            Class::Negative => -1.0,
            Class::Positive => 1.0,
        }
    }

    pub fn from_score(score: f64) -> Class {
        if score >= 0.0 {
            Class::Positive
        } else {
            Class::Negative
        }
    }

    pub fn as_int(self) -> i8 {
        self.sign() as i8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub kkt_tolerance: f64,
    /// Iteration budget in units of the training-set size.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            kkt_tolerance: 1e-3,
            max_passes: 100_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_c(c: f64) -> Self {
        TrainConfig {
            c,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub training_subjects: Vec<String>,
    pub dual_coeffs: Vec<f64>,
    pub labels: Vec<Class>,
    pub bias: f64,
    pub c: f64,
    pub support_indices: Vec<usize>,
    pub kernel_digest: String,
    pub iterations: usize,
}

impl SvmModel {
    /// `a_i * y_i` per training subject.
    pub fn signed_coeffs(&self) -> Vec<f64> {
        self.dual_coeffs
            .iter()
            .zip(&self.labels)
            .map(|(a, y)| a * y.sign())
            .collect()
    }

    /// `sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij`.
    pub fn dual_objective(&self, kernel: &KernelMatrix) -> f64 {
        dual_objective(kernel.values(), &self.labels, &self.dual_coeffs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn dual_objective(kernel: &[f64], labels: &[Class], alpha: &[f64]) -> f64 {
    let n = labels.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += alpha[j] * labels[j].sign() * kernel[i * n + j];
        }
        quad += alpha[i] * labels[i].sign() * row;
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Largest violation of the KKT conditions of `(alpha, bias)` against a
/// dense `n x n` kernel: `y f(x) >= 1` at `a = 0`, `= 1` inside the box,
/// `<= 1` at `a = C`.
pub fn kkt_violation(kernel: &[f64], labels: &[Class], alpha: &[f64], bias: f64, c: f64) -> f64 {
    let n = labels.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut f = bias;
        for j in 0..n {
            f += alpha[j] * labels[j].sign() * kernel[i * n + j];
        }
        let margin = labels[i].sign() * f;
        let v = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Bare dual solution, without subject ids or kernel digest.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFit {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl DualFit {
    /// Scores rows of a row-major `n_test x n_train` block.
    pub fn scores(&self, labels: &[Class], cross: &[f64]) -> Vec<f64> {
        let n = self.alpha.len();
        cross
            .chunks_exact(n.max(1))
            .map(|row| {
                let mut s = 0.0;
                for t in 0..n {
                    if self.alpha[t] != 0.0 {
                        s += self.alpha[t] * labels[t].sign() * row[t];
                    }
                }
                s + self.bias
            })
            .collect()
    }
}

fn solve(kernel: &[f64], labels: &[Class], cfg: &TrainConfig) -> Result<DualFit> {
    let n = labels.len();
    let y: Vec<f64> = labels.iter().map(|c| c.sign()).collect();
    let c = cfg.c;
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a
    let mut grad = vec![-1.0; n];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let budget = cfg.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for &t in &order {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        // j: second-order choice in I_low
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for &t in &order {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = kernel[i_sel * n + i_sel] + kernel[t * n + t]
                    - 2.0 * kernel[i_sel * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let gain = -(b * b) / a;
                if gain < best_gain {
                    best_gain = gain;
                    j_sel = t;
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin <= cfg.kkt_tolerance {
            break;
        }
        if iterations >= budget {
            return Err(SvmError::NotConverged(cfg.max_passes));
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = snap(ai, c);
        alpha[j] = snap(aj, c);
        let (ai, aj) = (alpha[i], alpha[j]);
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // fresh gradient for the bias, free of accumulated update error
    for t in 0..n {
        let mut g = -1.0;
        for s in 0..n {
            if alpha[s] != 0.0 {
                g += q(t, s) * alpha[s];
            }
        }
        grad[t] = g;
    }
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if upper.is_finite() && lower.is_finite() {
        0.5 * (upper + lower)
    } else if upper.is_finite() {
        upper
    } else {
        lower
    };
    Ok(DualFit {
        alpha,
        bias: -rho,
        iterations,
    })
}

/// Rounding in the pair update can leave a coefficient a few ulps off a bound.
fn snap(a: f64, c: f64) -> f64 {
    let eps = 1e-12 * c;
    if a <= eps {
        0.0
    } else if a >= c - eps {
        c
    } else {
        a
    }
}

fn check_config(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(SvmError::InvalidConfig(format!("C = {}", cfg.c)));
    }
    if !(cfg.kkt_tolerance > 0.0) {
        return Err(SvmError::InvalidConfig(format!(
            "kkt_tolerance = {}",
            cfg.kkt_tolerance
        )));
    }
    if cfg.max_passes == 0 {
        return Err(SvmError::InvalidConfig("max_passes = 0".into()));
    }
    Ok(())
}

/// Solves the dual on a dense row-major `n x n` kernel block.
pub fn fit_dual(kernel: &[f64], labels: &[Class], cfg: &TrainConfig) -> Result<DualFit> {
    check_config(cfg)?;
    let n = labels.len();
    if kernel.len() != n * n {
        return Err(SvmError::ShapeMismatch(format!(
            "{} labels for a kernel of {} values",
            n,
            kernel.len()
        )));
    }
    let has_pos = labels.contains(&Class::Positive);
    let has_neg = labels.contains(&Class::Negative);
    if !(has_pos && has_neg) {
        return Err(SvmError::SingleClass);
    }
    solve(kernel, labels, cfg)
}

/// Trains on a precomputed kernel whose subject order matches `labels`.
pub fn train(kernel: &KernelMatrix, labels: &[Class], cfg: &TrainConfig) -> Result<SvmModel> {
    let sol = fit_dual(kernel.values(), labels, cfg)?;
    let support_indices = sol
        .alpha
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| (a > 0.0).then_some(i))
        .collect();
    Ok(SvmModel {
        training_subjects: kernel.subjects().to_vec(),
        dual_coeffs: sol.alpha,
        labels: labels.to_vec(),
        bias: sol.bias,
        c: cfg.c,
        support_indices,
        kernel_digest: kernel.digest(),
        iterations: sol.iterations,
    })
}

/// Scores test subjects from a row-major `n_test x n_train` kernel block.
pub fn decision_scores(model: &SvmModel, cross: &[f64]) -> Result<Vec<f64>> {
    let n_train = model.dual_coeffs.len();
    if n_train == 0 || !cross.len().is_multiple_of(n_train) {
        return Err(SvmError::ShapeMismatch(format!(
            "cross kernel of {} values for {n_train} training subjects",
            cross.len()
        )));
    }
    let coeffs = model.signed_coeffs();
    Ok(cross
        .chunks_exact(n_train)
        .map(|row| {
            let mut s = 0.0;
            for (&k, &w) in row.iter().zip(&coeffs) {
                s += w * k;
            }
            s + model.bias
        })
        .collect())
}

/// Primal weights `w = sum_i a_i y_i x_i` over the rows of `features`
/// belonging to the model's training subjects.
pub fn weight_vector(model: &SvmModel, features: &FeatureMatrix) -> Result<Vec<f64>> {
    let coeffs = model.signed_coeffs();
    let mut w = vec![0.0; features.n_voxels()];
    for (id, &coef) in model.training_subjects.iter().zip(&coeffs) {
        let row = features
            .subjects()
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| SvmError::ShapeMismatch(format!("subject {id} not in features")))?;
        if coef == 0.0 {
            continue;
        }
        for (acc, &x) in w.iter_mut().zip(features.row(row)) {
            *acc += coef * x;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WeightMapOptions {
    /// Divide by the largest absolute weight.
    pub normalize: bool,
    /// Clamp negative weights to zero.
    pub positive_only: bool,
}

/// Primal weights back-projected into voxel space.
pub fn weight_map(
    model: &SvmModel,
    features: &FeatureMatrix,
    opts: WeightMapOptions,
) -> Result<Volume3D> {
    let mut w = weight_vector(model, features)?;
    if opts.normalize {
        let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            for v in &mut w {
                *v /= max;
            }
        }
    }
    if opts.positive_only {
        for v in &mut w {
            *v = v.max(0.0);
        }
    }
    unflatten(&w, features.mask()).map_err(|e| SvmError::ShapeMismatch(e.to_string()))
}
