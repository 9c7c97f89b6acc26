use crate::dualgraph::DualGraph;
use crate::error::{Error, Result};

/// Graph prepared for attention: node features plus neighbour lists that
/// always contain the node itself.
#[derive(Debug, Clone, PartialEq)]
pub struct GatGraph {
    dim: usize,
    x: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl GatGraph {
    /// `x` is `n x dim` row-major; edges are undirected.
    pub fn new(dim: usize, x: Vec<f64>, edges: &[(usize, usize)]) -> Result<Self> {
        if dim == 0 && !x.is_empty() {
            return Err(Error::DimensionMismatch("zero feature dimension".into()));
        }
        if dim > 0 && !x.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!("{} feature values not divisible by dim {dim}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite node feature".into()));
        }
        let n = x.len().checked_div(dim).unwrap_or(0);
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Structure(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i != j {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Self { dim, x, neighbors })
    }

    pub fn from_dual(g: &DualGraph) -> Result<Self> {
        let (x, dim) = g.features_matrix()?;
        if dim == 0 && !g.is_empty() {
            return Err(Error::DimensionMismatch("dual graph has no node features".into()));
        }
        Self::new(dim, x, &g.edges)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    /// Sorted neighbour ids including `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Relabel nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut x = vec![0.0; self.x.len()];
        for i in 0..n {
            x[perm[i] * self.dim..(perm[i] + 1) * self.dim].copy_from_slice(&self.x[i * self.dim..(i + 1) * self.dim]);
        }
        let mut edges = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            edges.extend(nb.iter().filter(|j| **j > i).map(|j| (perm[i], perm[*j])));
        }
        Self::new(self.dim, x, &edges)
    }
}
