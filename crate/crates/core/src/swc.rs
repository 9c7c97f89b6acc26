//! SWC morphology trees.
//!
//! A [`VesselTree`] is a forest of nodes linked by parent ids. Parsing and
//! construction validate that ids are unique, parents exist and the links are
//! acyclic, so every other module can assume a well-formed forest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct VesselNode {
    pub id: u64,
    pub kind: i32,
    pub pos: Vec3,
    pub radius: f64,
    pub parent: Option<u64>,
}

impl VesselNode {
    pub fn new(id: u64, kind: i32, pos: Vec3, radius: f64, parent: Option<u64>) -> Self {
        Self { id, kind, pos, radius, parent }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VesselTree {
    nodes: Vec<VesselNode>,
}

/// Parent/child adjacency of a tree, by node position in [`VesselTree::nodes`].
#[derive(Debug, Clone)]
pub struct Topology {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub roots: Vec<usize>,
}

impl VesselTree {
    pub fn empty() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Build a tree, checking id uniqueness, parent existence and acyclicity.
    pub fn from_nodes(nodes: Vec<VesselNode>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id == 0 {
                return Err(Error::Structure("node id 0 is not a positive integer".into()));
            }
            if index.insert(n.id, i).is_some() {
                return Err(Error::Structure(format!("duplicate node id {}", n.id)));
            }
        }
        for n in &nodes {
            if let Some(p) = n.parent {
                if !index.contains_key(&p) {
                    return Err(Error::Structure(format!("node {} has dangling parent {p}", n.id)));
                }
            }
        }
        // 0 = unseen, 1 = on current walk, 2 = known to reach a root
        let mut state = vec![0u8; nodes.len()];
        for start in 0..nodes.len() {
            let mut walk = Vec::new();
            let mut cur = start;
            loop {
                match state[cur] {
                    2 => break,
                    1 => return Err(Error::Structure(format!("cycle through node {}", nodes[cur].id))),
                    _ => {}
                }
                state[cur] = 1;
                walk.push(cur);
                match nodes[cur].parent {
                    Some(p) => cur = index[&p],
                    None => break,
                }
            }
            for w in walk {
                state[w] = 2;
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[VesselNode] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<VesselNode> {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_id(&self) -> u64 {
        self.nodes.iter().map(|n| n.id).max().unwrap_or(0)
    }

    pub fn id_index(&self) -> HashMap<u64, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn topology(&self) -> Topology {
        let index = self.id_index();
        let parent: Vec<Option<usize>> = self.nodes.iter().map(|n| n.parent.map(|p| index[&p])).collect();
        let mut children = vec![Vec::new(); self.nodes.len()];
        let mut roots = Vec::new();
        for (i, p) in parent.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(i),
                None => roots.push(i),
            }
        }
        Topology { parent, children, roots }
    }

    /// Centerline pieces: one segment per parent-child edge, plus a
    /// degenerate segment for every node without parent or children.
    pub fn centerline_segments(&self) -> Vec<(Vec3, Vec3)> {
        let topo = self.topology();
        let mut segs = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            match topo.parent[i] {
                Some(p) => segs.push((self.nodes[p].pos, n.pos)),
                None if topo.children[i].is_empty() => segs.push((n.pos, n.pos)),
                None => {}
            }
        }
        segs
    }

    /// Sum of parent-child edge lengths.
    pub fn total_length(&self) -> f64 {
        let index = self.id_index();
        self.nodes.iter().filter_map(|n| n.parent.map(|p| (n.pos - self.nodes[index[&p]].pos).norm())).sum()
    }

    pub fn root_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent.is_none()).count()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_swc(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serialize_swc(self)).map_err(|e| Error::io(path, e))
    }
}

pub fn parse_swc(text: &[u8]) -> Result<VesselTree> {
    let text = std::str::from_utf8(text).map_err(|e| Error::Parse { line: 0, msg: format!("invalid utf-8: {e}") })?;
    let mut nodes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 7 fields, found {}", fields.len()) });
        }
        let bad = |what: &str, s: &str| Error::Parse { line: line_no, msg: format!("invalid {what} '{s}'") };
        let id: u64 = fields[0].parse().map_err(|_| bad("id", fields[0]))?;
        let kind: i32 = fields[1].parse().map_err(|_| bad("type", fields[1]))?;
        let mut xyz = [0.0; 3];
        for k in 0..3 {
            xyz[k] = fields[2 + k].parse::<f64>().map_err(|_| bad("coordinate", fields[2 + k]))?;
            if !xyz[k].is_finite() {
                return Err(bad("coordinate", fields[2 + k]));
            }
        }
        let radius: f64 = fields[5].parse().map_err(|_| bad("radius", fields[5]))?;
        let parent: i64 = fields[6].parse().map_err(|_| bad("parent", fields[6]))?;
        let parent = match parent {
            -1 => None,
            p if p > 0 => Some(p as u64),
            _ => return Err(bad("parent", fields[6])),
        };
        nodes.push(VesselNode::new(id, kind, Vec3::new(xyz[0], xyz[1], xyz[2]), radius, parent));
    }
    VesselTree::from_nodes(nodes)
}

pub fn serialize_swc(tree: &VesselTree) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("# id type x y z radius parent\n");
    for n in tree.nodes() {
        let parent = n.parent.map_or(-1, |p| p as i64);
        let _ = writeln!(
            out,
            "{} {} {:.6} {:.6} {:.6} {:.6} {}",
            n.id, n.kind, n.pos[0], n.pos[1], n.pos[2], n.radius, parent
        );
    }
    out.into_bytes()
}

/// Insert linearly interpolated nodes so that no parent-child edge is longer
/// than `step`. Existing nodes keep their ids and positions; new nodes get
/// ids above the current maximum and are placed just before their child.
pub fn resample_polyline(tree: &VesselTree, step: f64) -> Result<VesselTree> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParam(format!("resample step must be positive, got {step}")));
    }
    let index = tree.id_index();
    let mut next_id = tree.max_id() + 1;
    let mut out = Vec::with_capacity(tree.len());
    for n in tree.nodes() {
        let Some(pid) = n.parent else {
            out.push(n.clone());
            continue;
        };
        let p = &tree.nodes()[index[&pid]];
        let len = (n.pos - p.pos).norm();
        let pieces = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        let mut parent = pid;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            out.push(VesselNode::new(
                next_id,
                n.kind,
                p.pos + (n.pos - p.pos) * t,
                p.radius + (n.radius - p.radius) * t,
                Some(parent),
            ));
            parent = next_id;
            next_id += 1;
        }
        let mut child = n.clone();
        child.parent = Some(parent);
        out.push(child);
    }
    VesselTree::from_nodes(out)
}
