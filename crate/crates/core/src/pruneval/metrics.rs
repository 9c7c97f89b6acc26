use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{SegmentIndex, Vec3};
use crate::swc::{resample_polyline, VesselTree};

/// Grid cell edge for metric queries, in mm.
const INDEX_CELL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatchMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pred_caught: usize,
    pub pred_nodes: usize,
    pub gt_caught: usize,
    pub gt_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialMetrics {
    pub sd: f64,
    pub ssd: f64,
    pub pssd: f64,
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn positions(t: &VesselTree) -> Vec<Vec3> {
    t.nodes().iter().map(|n| n.pos).collect()
}

/// Node-to-polyline distances from every node of `from` to `to`.
pub fn directed_distances(from: &VesselTree, to: &VesselTree) -> Vec<f64> {
    let index = SegmentIndex::new(to.centerline_segments(), INDEX_CELL);
    positions(from).par_iter().map(|p| index.nearest_distance(p)).collect()
}

fn count_caught(from: &VesselTree, to: &VesselTree, catch_dist: f64) -> usize {
    let index = SegmentIndex::new(to.centerline_segments(), catch_dist);
    positions(from).par_iter().filter(|p| index.distance_within(p, catch_dist).is_some()).count()
}

/// Precision: predicted nodes within `catch_dist` of the ground-truth
/// polyline. Recall: ground-truth nodes within `catch_dist` of the
/// predicted polyline. An empty prediction scores P = 1, R = 0; an empty
/// ground truth scores P = 0, R = 1; both empty score P = R = 1.
pub fn catch_metrics(pred: &VesselTree, gt: &VesselTree, catch_dist: f64) -> Result<CatchMetrics> {
    if !(catch_dist > 0.0 && catch_dist.is_finite()) {
        return Err(Error::InvalidParam(format!("catch distance must be positive, got {catch_dist}")));
    }
    let pred_caught = count_caught(pred, gt, catch_dist);
    let gt_caught = count_caught(gt, pred, catch_dist);
    let (precision, recall) = match (pred.is_empty(), gt.is_empty()) {
        (true, true) => (1.0, 1.0),
        (true, false) => (1.0, 0.0),
        (false, true) => (0.0, 1.0),
        (false, false) => (pred_caught as f64 / pred.len() as f64, gt_caught as f64 / gt.len() as f64),
    };
    Ok(CatchMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        pred_caught,
        pred_nodes: pred.len(),
        gt_caught,
        gt_nodes: gt.len(),
    })
}

/// SD, SSD and pSSD of a non-empty distance multiset.
pub fn spatial_from_distances(distances: &[f64], sig_dist: f64) -> SpatialMetrics {
    let n = distances.len() as f64;
    let sd = distances.iter().sum::<f64>() / n;
    let sig: Vec<f64> = distances.iter().copied().filter(|d| *d > sig_dist).collect();
    let ssd = if sig.is_empty() { 0.0 } else { sig.iter().sum::<f64>() / sig.len() as f64 };
    SpatialMetrics { sd, ssd, pssd: sig.len() as f64 / n }
}

/// Spatial metrics over the union of both directed node-distance
/// multisets; `None` when either tree is empty.
pub fn spatial_metrics(pred: &VesselTree, gt: &VesselTree, sig_dist: f64) -> Result<Option<SpatialMetrics>> {
    if !(sig_dist > 0.0 && sig_dist.is_finite()) {
        return Err(Error::InvalidParam(format!("significance distance must be positive, got {sig_dist}")));
    }
    if pred.is_empty() || gt.is_empty() {
        return Ok(None);
    }
    let mut d = directed_distances(pred, gt);
    d.extend(directed_distances(gt, pred));
    Ok(Some(spatial_from_distances(&d, sig_dist)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub catch_dist_mm: f64,
    pub sig_dist_mm: f64,
    pub resample_step_mm: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { catch_dist_mm: 4.0, sig_dist_mm: 2.0, resample_step_mm: 1.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("catch_dist_mm", self.catch_dist_mm),
            ("sig_dist_mm", self.sig_dist_mm),
            ("resample_step_mm", self.resample_step_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Spatial fields are `None` when either tree is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sd_mm: Option<f64>,
    pub ssd_mm: Option<f64>,
    pub pssd: Option<f64>,
    pub spatial_valid: bool,
    pub pred_caught: usize,
    pub pred_nodes: usize,
    pub gt_caught: usize,
    pub gt_nodes: usize,
    pub config: EvalConfig,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn build_report(c: CatchMetrics, s: Option<SpatialMetrics>, cfg: &EvalConfig) -> MetricReport {
    MetricReport {
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        sd_mm: s.map(|s| s.sd),
        ssd_mm: s.map(|s| s.ssd),
        pssd: s.map(|s| s.pssd),
        spatial_valid: s.is_some(),
        pred_caught: c.pred_caught,
        pred_nodes: c.pred_nodes,
        gt_caught: c.gt_caught,
        gt_nodes: c.gt_nodes,
        config: cfg.clone(),
    }
}

/// Resample both trees to the configured step, then compute all metrics.
pub fn evaluate(pred: &VesselTree, gt: &VesselTree, cfg: &EvalConfig) -> Result<MetricReport> {
    MetricAccumulator::default().add(pred, gt, cfg)
}

/// Pools scenes: catch counts and spatial distance multisets are summed
/// before forming ratios, so larger scenes weigh more.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    pred_caught: usize,
    pred_nodes: usize,
    gt_caught: usize,
    gt_nodes: usize,
    distances: Vec<f64>,
}

impl MetricAccumulator {
    /// Adds one scene and returns its own report.
    pub fn add(&mut self, pred: &VesselTree, gt: &VesselTree, cfg: &EvalConfig) -> Result<MetricReport> {
        cfg.validate()?;
        let pred = resample_polyline(pred, cfg.resample_step_mm)?;
        let gt = resample_polyline(gt, cfg.resample_step_mm)?;
        let c = catch_metrics(&pred, &gt, cfg.catch_dist_mm)?;
        self.pred_caught += c.pred_caught;
        self.pred_nodes += c.pred_nodes;
        self.gt_caught += c.gt_caught;
        self.gt_nodes += c.gt_nodes;
        let s = if pred.is_empty() || gt.is_empty() {
            None
        } else {
            let mut d = directed_distances(&pred, &gt);
            d.extend(directed_distances(&gt, &pred));
            let s = spatial_from_distances(&d, cfg.sig_dist_mm);
            self.distances.extend(d);
            Some(s)
        };
        Ok(build_report(c, s, cfg))
    }

    pub fn report(&self, cfg: &EvalConfig) -> MetricReport {
        let precision = if self.pred_nodes == 0 { 1.0 } else { self.pred_caught as f64 / self.pred_nodes as f64 };
        let recall = if self.gt_nodes == 0 { 1.0 } else { self.gt_caught as f64 / self.gt_nodes as f64 };
        let c = CatchMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            pred_caught: self.pred_caught,
            pred_nodes: self.pred_nodes,
            gt_caught: self.gt_caught,
            gt_nodes: self.gt_nodes,
        };
        let s = (!self.distances.is_empty()).then(|| spatial_from_distances(&self.distances, cfg.sig_dist_mm));
        build_report(c, s, cfg)
    }
}
