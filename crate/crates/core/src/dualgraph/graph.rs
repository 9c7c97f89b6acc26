use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::segment::SegmentSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualNode {
    pub id: usize,
    pub segment_node_ids: Vec<u64>,
    pub length: f64,
    pub feature: Vec<f64>,
    pub target: Option<f64>,
    pub score: Option<f64>,
}

/// One node per branch segment; an edge joins two segments that share an
/// endpoint node of the source tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualGraph {
    pub nodes: Vec<DualNode>,
    pub edges: Vec<(usize, usize)>,
}

pub fn build_dual(segments: &SegmentSet) -> DualGraph {
    let mut by_endpoint: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for s in &segments.segments {
        let (a, b) = s.endpoints();
        by_endpoint.entry(a).or_default().push(s.id);
        if b != a {
            by_endpoint.entry(b).or_default().push(s.id);
        }
    }
    let mut edges = Vec::new();
    for ids in by_endpoint.values() {
        for (k, &i) in ids.iter().enumerate() {
            for &j in &ids[k + 1..] {
                if i != j {
                    edges.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let nodes = segments
        .segments
        .iter()
        .map(|s| DualNode {
            id: s.id,
            segment_node_ids: s.node_ids.clone(),
            length: s.length,
            feature: Vec::new(),
            target: None,
            score: None,
        })
        .collect();
    DualGraph { nodes, edges }
}

impl DualGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sorted neighbour lists without self-loops.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for s in 0..self.nodes.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.feature.len())
    }

    pub fn features_matrix(&self) -> Result<(Vec<f64>, usize)> {
        let dim = self.feature_dim().unwrap_or(0);
        let mut x = Vec::with_capacity(dim * self.nodes.len());
        for n in &self.nodes {
            if n.feature.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "dual node {} has {} features, expected {dim}",
                    n.id,
                    n.feature.len()
                )));
            }
            if n.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("dual node {} has non-finite features", n.id)));
            }
            x.extend_from_slice(&n.feature);
        }
        Ok((x, dim))
    }

    pub fn targets(&self) -> Option<Vec<f64>> {
        self.nodes.iter().map(|n| n.target).collect()
    }

    pub fn scores(&self) -> Option<Vec<f64>> {
        self.nodes.iter().map(|n| n.score).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, n) in self.nodes.iter().enumerate() {
            if n.id != k {
                return Err(Error::Structure(format!("dual node at position {k} has id {}", n.id)));
            }
            for (name, v) in [("target", n.target), ("score", n.score)] {
                if let Some(v) = v {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Structure(format!("dual node {k} {name} {v} outside [0,1]")));
                    }
                }
            }
        }
        for &(i, j) in &self.edges {
            if i >= self.nodes.len() || j >= self.nodes.len() || i == j {
                return Err(Error::Structure(format!("invalid dual edge ({i}, {j})")));
            }
        }
        self.features_matrix().map(|_| ())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
