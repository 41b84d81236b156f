//! Heat-kernel smoothing of feature rows on a voxel graph.
//!
//! `exp(-beta L)` with `L = D - W` is approximated by `m` explicit Euler
//! steps, `(I - (beta/m) L)^m`, which only needs sparse products.

use rayon::prelude::*;

use super::{linear_gram, KernelError, KernelMatrix, Result, VoxelGraph};
use crate::features::FeatureMatrix;

pub const DEFAULT_SIGMA_TISSUE: f64 = 0.5;
const DEFAULT_SAFETY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub beta: f64,
    pub sigma_tissue: f64,
    pub steps: usize,
}

impl RegularizationParams {
    /// Smallest power-of-two step count with
    /// `beta * 2 * max_degree / steps <= 0.5`.
    pub fn with_default_steps(beta: f64, sigma_tissue: f64, graph: &VoxelGraph) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(KernelError::InvalidParams(format!("beta {beta}")));
        }
        let bound = 2.0 * graph.max_degree();
        let mut steps = 1usize;
        while beta * bound / steps as f64 > DEFAULT_SAFETY {
            steps *= 2;
        }
        Ok(RegularizationParams {
            beta,
            sigma_tissue,
            steps,
        })
    }

    /// Power-of-two step count whose estimated error
    /// `|(I - hL)^m x - exp(-beta L) x| / |x|`, at most `2 e^-2 / m`, stays
    /// below `tolerance`. Never fewer steps than [`Self::with_default_steps`].
    pub fn with_tolerance(
        beta: f64,
        sigma_tissue: f64,
        graph: &VoxelGraph,
        tolerance: f64,
    ) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(KernelError::InvalidParams(format!("tolerance {tolerance}")));
        }
        let mut params = Self::with_default_steps(beta, sigma_tissue, graph)?;
        if beta == 0.0 {
            return Ok(params);
        }
        let bound = 2.0 * (-2.0f64).exp();
        while bound / params.steps as f64 > tolerance {
            params.steps *= 2;
        }
        Ok(params)
    }

    /// `beta * 2 * max_degree / steps`, the bound on `h * lambda_max`.
    pub fn stability_ratio(&self, graph: &VoxelGraph) -> f64 {
        self.beta * 2.0 * graph.max_degree() / self.steps as f64
    }

    fn check(&self, graph: &VoxelGraph) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(KernelError::InvalidParams(format!("beta {}", self.beta)));
        }
        if self.steps == 0 {
            return Err(KernelError::InvalidParams("steps must be positive".into()));
        }
        let ratio = self.stability_ratio(graph);
        if ratio >= 1.0 {
            return Err(KernelError::StabilityViolated { ratio });
        }
        Ok(())
    }
}

/// One Euler step: `y_i = x_i + h * sum_j w_ij (x_j - x_i)`.
fn euler_step(graph: &VoxelGraph, h: f64, x: &[f64], y: &mut [f64]) {
    for (i, out) in y.iter_mut().enumerate() {
        let xi = x[i];
        let mut flux = 0.0;
        for (j, w) in graph.neighbors(i) {
            flux += w * (x[j] - xi);
        }
        *out = xi + h * flux;
    }
}

/// Applies `(I - (beta/m) L)^m` to one vector.
pub(crate) fn diffuse_vector(graph: &VoxelGraph, params: &RegularizationParams, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    if params.beta == 0.0 {
        return cur;
    }
    let h = params.beta / params.steps as f64;
    let mut next = vec![0.0; cur.len()];
    for _ in 0..params.steps {
        euler_step(graph, h, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Smooths every row of `features` over `graph`. Columns must correspond to
/// graph nodes (same mask).
pub fn diffuse(
    features: &FeatureMatrix,
    graph: &VoxelGraph,
    params: &RegularizationParams,
) -> Result<FeatureMatrix> {
    params.check(graph)?;
    if features.mask().indices() != graph.nodes() {
        return Err(KernelError::ShapeMismatch(format!(
            "{} feature columns vs {} graph nodes, or different masks",
            features.n_voxels(),
            graph.n_nodes()
        )));
    }
    if params.beta == 0.0 {
        return Ok(features.clone());
    }
    let rows: Vec<Vec<f64>> = (0..features.n_subjects())
        .into_par_iter()
        .map(|i| diffuse_vector(graph, params, features.row(i)))
        .collect();
    Ok(features
        .with_values(rows.concat())
        .expect("diffusion keeps the shape"))
}

/// `linear_gram(diffuse(features))`.
pub fn regularized_gram(
    features: &FeatureMatrix,
    graph: &VoxelGraph,
    params: &RegularizationParams,
) -> Result<KernelMatrix> {
    Ok(linear_gram(&diffuse(features, graph, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Mask;

    fn two_node() -> (VoxelGraph, Mask) {
        (
            VoxelGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap(),
            Mask::full([2, 1, 1]).unwrap(),
        )
    }

    fn fm(mask: &Mask, rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            mask.clone(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_beta_is_identity() {
        let (g, m) = two_node();
        let f = fm(&m, &[&[1.0, -3.0], &[0.5, 2.0]]);
        let p = RegularizationParams { beta: 0.0, sigma_tissue: 0.5, steps: 4 };
        assert_eq!(diffuse(&f, &g, &p).unwrap(), f);
        assert_eq!(regularized_gram(&f, &g, &p).unwrap(), linear_gram(&f));
    }

    #[test]
    fn constant_rows_unchanged() {
        let (g, m) = two_node();
        let f = fm(&m, &[&[2.5, 2.5]]);
        let p = RegularizationParams { beta: 3.0, sigma_tissue: 0.5, steps: 64 };
        assert_eq!(diffuse(&f, &g, &p).unwrap(), f);
    }

    #[test]
    fn two_node_heat_kernel() {
        // exp(-beta L) for L = [[1,-1],[-1,1]] is
        // 0.5 * [[1 + e, 1 - e], [1 - e, 1 + e]] with e = exp(-2 beta)
        let (g, m) = two_node();
        let beta = 0.7;
        let p = RegularizationParams { beta, sigma_tissue: 0.5, steps: 1 << 14 };
        let f = fm(&m, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = diffuse(&f, &g, &p).unwrap();
        let e = (-2.0 * beta).exp();
        let want = [0.5 * (1.0 + e), 0.5 * (1.0 - e), 0.5 * (1.0 - e), 0.5 * (1.0 + e)];
        for (got, want) in d.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        // large beta: rows collapse to their means
        let p = RegularizationParams::with_default_steps(20.0, 0.5, &g).unwrap();
        let f = fm(&m, &[&[4.0, 2.0], &[-1.0, 5.0]]);
        let d = diffuse(&f, &g, &p).unwrap();
        assert!((d.row(0)[0] - 3.0).abs() < 1e-9 && (d.row(0)[1] - 3.0).abs() < 1e-9);
        assert!((d.row(1)[0] - 2.0).abs() < 1e-9 && (d.row(1)[1] - 2.0).abs() < 1e-9);
        let k = linear_gram(&d);
        assert!((k.get(0, 1) - 12.0).abs() < 1e-7);
    }

    #[test]
    fn stability_enforced() {
        let (g, m) = two_node();
        let f = fm(&m, &[&[1.0, 0.0]]);
        // max degree 1: beta * 2 / steps = 1
        let p = RegularizationParams { beta: 2.0, sigma_tissue: 0.5, steps: 4 };
        assert_eq!(
            diffuse(&f, &g, &p),
            Err(KernelError::StabilityViolated { ratio: 1.0 })
        );
        let p = RegularizationParams::with_default_steps(2.0, 0.5, &g).unwrap();
        assert_eq!(p.steps, 8);
        assert!(p.stability_ratio(&g) <= 0.5);
        assert_eq!(RegularizationParams::with_tolerance(0.5, 0.5, &g, 1e-4).unwrap().steps, 4096);
        assert_eq!(RegularizationParams::with_tolerance(0.0, 0.5, &g, 1e-4).unwrap().steps, 1);
    }

    #[test]
    fn mask_alignment_checked() {
        let (g, _) = two_node();
        let m3 = Mask::full([3, 1, 1]).unwrap();
        let f = fm(&m3, &[&[1.0, 0.0, 2.0]]);
        let p = RegularizationParams { beta: 0.1, sigma_tissue: 0.5, steps: 4 };
        assert!(matches!(diffuse(&f, &g, &p), Err(KernelError::ShapeMismatch(_))));
    }
}
