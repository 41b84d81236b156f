use crate::volume::{Mask, Volume3D};

use super::{KernelError, Result};

/// Tissue-weighted 6-neighbour lattice over the voxels of a mask.
///
/// Node `k` is the `k`-th included voxel in ascending linear order, which is
/// also column `k` of a feature matrix built with the same mask. Adjacency
/// is stored compressed by row with neighbours in ascending node order.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGraph {
    nodes: Vec<usize>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl VoxelGraph {
    /// Builds a graph from explicit undirected weighted edges. Used for
    /// non-lattice graphs; weights must lie in (0, 1].
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_nodes];
        for &(a, b, w) in edges {
            if a >= n_nodes || b >= n_nodes || a == b {
                return Err(KernelError::ShapeMismatch(format!("bad edge ({a}, {b})")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(KernelError::ShapeMismatch(format!("edge weight {w} outside (0, 1]")));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(KernelError::ShapeMismatch("duplicate edge".into()));
            }
        }
        Ok(Self::from_adjacency((0..n_nodes).collect(), adj))
    }

    fn from_adjacency(nodes: Vec<usize>, adj: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut degree = Vec::with_capacity(adj.len());
        offsets.push(0);
        for list in adj {
            let mut d = 0.0;
            for (j, w) in list {
                neighbors.push(j);
                weights.push(w);
                d += w;
            }
            degree.push(d);
            offsets.push(neighbors.len());
        }
        VoxelGraph {
            nodes,
            offsets,
            neighbors,
            weights,
            degree,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Linear voxel index of each node.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn max_degree(&self) -> f64 {
        self.degree.iter().copied().fold(0.0, f64::max)
    }

    /// `(neighbour, weight)` pairs of node `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Weight of edge `(i, j)`, if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.neighbors(i).find(|&(k, _)| k == j).map(|(_, w)| w)
    }
}

/// Connects 6-neighbour masked voxels with weight
/// `exp(-|p_i - p_j|^2 / (2 sigma^2))`, `p` being the vector of tissue
/// probabilities. With no tissue maps every weight is 1.
pub fn build_voxel_graph(mask: &Mask, tissue_maps: &[Volume3D], sigma: f64) -> Result<VoxelGraph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(KernelError::NonpositiveSigma(sigma));
    }
    if tissue_maps.len() > 3 {
        return Err(KernelError::TooManyTissueMaps(tissue_maps.len()));
    }
    let dims = mask.dims();
    for t in tissue_maps {
        if t.dims() != dims {
            return Err(KernelError::DimsMismatch {
                expected: dims,
                found: t.dims(),
            });
        }
        if let Some((voxel, &value)) = t
            .data
            .iter()
            .enumerate()
            .find(|(i, v)| mask.contains(*i) && !(0.0..=1.0).contains(*v))
        {
            return Err(KernelError::TissueOutOfRange { voxel, value });
        }
    }

    let nodes = mask.indices();
    let mut node_of = vec![usize::MAX; mask.included().len()];
    for (k, &lin) in nodes.iter().enumerate() {
        node_of[lin] = k;
    }
    let two_sigma_sq = 2.0 * sigma * sigma;
    let weight = |a: usize, b: usize| -> f64 {
        let d2: f64 = tissue_maps
            .iter()
            .map(|t| {
                let d = t.data[a] - t.data[b];
                d * d
            })
            .sum();
        (-d2 / two_sigma_sq).exp()
    };

    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let stride_y = nx;
    let stride_z = nx * ny;
    let mut adj = Vec::with_capacity(nodes.len());
    for &lin in &nodes {
        let x = lin % nx;
        let y = (lin / nx) % ny;
        let z = lin / stride_z;
        // ascending linear order: -z, -y, -x, +x, +y, +z
        let candidates = [
            (z > 0).then(|| lin - stride_z),
            (y > 0).then(|| lin - stride_y),
            (x > 0).then(|| lin - 1),
            (x + 1 < nx).then(|| lin + 1),
            (y + 1 < ny).then(|| lin + stride_y),
            (z + 1 < nz).then(|| lin + stride_z),
        ];
        let mut list = Vec::with_capacity(6);
        for other in candidates.into_iter().flatten() {
            let k = node_of[other];
            if k == usize::MAX {
                continue;
            }
            let w = weight(lin, other);
            // underflowed weights are dropped rather than stored as zero edges
            if w > 0.0 {
                list.push((k, w));
            }
        }
        adj.push(list);
    }
    Ok(VoxelGraph::from_adjacency(nodes, adj))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_tissue_is_pure_lattice() {
        let mask = Mask::full([3, 2, 2]).unwrap();
        let t = Volume3D::from_data([3, 2, 2], vec![0.4; 12]).unwrap();
        let g = build_voxel_graph(&mask, &[t.clone(), t], 0.5).unwrap();
        // 3x2x2 lattice: x-edges 2*2*2, y-edges 3*1*2, z-edges 3*2*1
        assert_eq!(g.n_edges(), 8 + 6 + 6);
        assert!(g.weights.iter().all(|&w| w == 1.0));
        assert_eq!(g.max_degree(), 4.0);
    }

    #[test]
    fn tissue_contrast_weight() {
        let mask = Mask::full([2, 1, 1]).unwrap();
        let gm = Volume3D::from_data([2, 1, 1], vec![1.0, 0.0]).unwrap();
        let wm = Volume3D::from_data([2, 1, 1], vec![0.0, 1.0]).unwrap();
        let csf = Volume3D::from_data([2, 1, 1], vec![0.0, 0.0]).unwrap();
        let g = build_voxel_graph(&mask, &[gm, wm, csf], 1.0).unwrap();
        assert_eq!(g.weight(0, 1), Some((-1.0f64).exp()));
        assert_eq!(g.weight(1, 0), Some((-1.0f64).exp()));
    }

    #[test]
    fn single_voxel_and_masked_neighbours() {
        let mask = Mask::new([3, 1, 1], vec![false, true, false]).unwrap();
        let g = build_voxel_graph(&mask, &[], 0.5).unwrap();
        assert_eq!(g.n_nodes(), 1);
        assert_eq!(g.n_edges(), 0);
        assert_eq!(g.nodes(), &[1]);

        let gap = Mask::new([3, 1, 1], vec![true, false, true]).unwrap();
        assert_eq!(build_voxel_graph(&gap, &[], 0.5).unwrap().n_edges(), 0);
    }

    #[test]
    fn errors() {
        let mask = Mask::full([2, 1, 1]).unwrap();
        assert_eq!(
            build_voxel_graph(&mask, &[], 0.0),
            Err(KernelError::NonpositiveSigma(0.0))
        );
        let bad = Volume3D::from_data([2, 1, 1], vec![0.5, 1.5]).unwrap();
        assert_eq!(
            build_voxel_graph(&mask, &[bad], 1.0),
            Err(KernelError::TissueOutOfRange { voxel: 1, value: 1.5 })
        );
        let wrong = Volume3D::from_data([1, 2, 1], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            build_voxel_graph(&mask, &[wrong], 1.0),
            Err(KernelError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn from_edges_symmetric() {
        let g = VoxelGraph::from_edges(3, &[(0, 2, 0.5), (1, 2, 1.0)]).unwrap();
        assert_eq!(g.weight(2, 0), Some(0.5));
        assert_eq!(g.degree(), &[0.5, 1.0, 1.5]);
        assert!(VoxelGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(VoxelGraph::from_edges(2, &[(0, 1, 0.0)]).is_err());
    }
}
