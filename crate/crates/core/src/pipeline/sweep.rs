use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SweepAxis};
use crate::dualgraph::DualGraph;
use crate::error::{Error, Result};
use crate::pruneval::MetricReport;

use super::manifest::{sha256_hex, FileHash, Manifest, Root};
use super::stages::{load_eval_summary, load_prune_summary, scenes, Layout, Runner, Stage, DUAL_JSON};
use super::text::{self, sig, SIG_DIGITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub segments: usize,
    pub traced_nodes: usize,
    pub surviving_nodes: usize,
    pub baseline: MetricReport,
    pub pruned: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        let mut header = vec![self.axis.name().to_string(), "segments".into(), "surviving_nodes".into()];
        header.extend(text::METRIC_NAMES.iter().map(|s| s.to_string()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![sig(r.value, SIG_DIGITS), r.segments.to_string(), r.surviving_nodes.to_string()];
                row.extend(text::metric_cells(&r.pruned));
                row
            })
            .collect();
        text::table(&header, &rows)
    }
}

fn point_config(base: &PipelineConfig, axis: SweepAxis, v: f64) -> PipelineConfig {
    let mut c = base.clone();
    match axis {
        SweepAxis::Nmd => c.dualgraph.nmd = v,
        SweepAxis::SamplingLength => c.dualgraph.sampling_length = v,
        SweepAxis::Threshold => c.gat.threshold = v,
    }
    c
}

fn point_dir(root: &Path, axis: SweepAxis, v: f64) -> PathBuf {
    root.join(format!("{}_{}", axis.name(), sig(v, SIG_DIGITS)))
}

/// Values sorted ascending with their original positions.
fn ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
    idx
}

fn check_targets_monotone(cfg: &PipelineConfig, model_dirs: &[PathBuf], values: &[f64]) -> Result<()> {
    let order = ascending(values);
    for s in scenes(cfg) {
        let targets: Vec<Vec<f64>> = order
            .iter()
            .map(|&k| {
                let path = model_dirs[k].join("scenes").join(&s.name).join(DUAL_JSON);
                let g = DualGraph::load(&path)?;
                g.targets().ok_or_else(|| Error::Structure(format!("{}: missing targets", path.display())))
            })
            .collect::<Result<_>>()?;
        for (w, k) in targets.windows(2).zip(order.windows(2)) {
            if w[0].len() != w[1].len() || w[0].iter().zip(&w[1]).any(|(a, b)| a > b) {
                return Err(Error::Invariant(format!(
                    "{}: soft targets decrease from nmd {} to {}",
                    s.name, values[k[0]], values[k[1]]
                )));
            }
        }
    }
    Ok(())
}

fn check_non_increasing(name: &str, axis: SweepAxis, values: &[f64], counts: &[usize]) -> Result<()> {
    let order = ascending(values);
    for k in order.windows(2) {
        if counts[k[1]] > counts[k[0]] {
            return Err(Error::Invariant(format!(
                "{name} rose from {} to {} between {} {} and {}",
                counts[k[0]],
                counts[k[1]],
                axis.name(),
                values[k[0]],
                values[k[1]]
            )));
        }
    }
    Ok(())
}

/// One featurize, train, prune and eval per value with seeds held fixed.
/// Threshold points share one trained model since training ignores the
/// threshold. Requires the data stages to have run in `out_dir`.
pub fn run_sweep(cfg: &PipelineConfig, out_dir: &Path, strict: bool) -> Result<SweepTable> {
    let axis = cfg.sweep.axis;
    let values = cfg.sweep.values.clone();
    if values.is_empty() {
        return Err(Error::Config("sweep.values must not be empty".into()));
    }
    for stage in [Stage::Synth, Stage::Heatmap, Stage::Trace] {
        let m = Layout::single(out_dir).manifest_path(stage);
        if !m.exists() {
            return Err(Error::MissingInput(m));
        }
    }
    let root = out_dir.join("sweep").join(axis.name());
    let layouts: Vec<Layout> = values
        .iter()
        .map(|v| {
            let dir = point_dir(&root, axis, *v);
            let model_dir = if axis == SweepAxis::Threshold { root.join("shared") } else { dir.clone() };
            Layout { data_dir: out_dir.to_path_buf(), model_dir, work_dir: dir }
        })
        .collect();

    if axis == SweepAxis::Threshold {
        let shared = Runner::new(cfg.clone(), layouts[0].clone(), strict)?;
        shared.run(Stage::Featurize)?;
        shared.run(Stage::Train)?;
    } else {
        values
            .par_iter()
            .zip(&layouts)
            .map(|(v, l)| Runner::new(point_config(cfg, axis, *v), l.clone(), strict)?.run(Stage::Featurize))
            .collect::<Result<Vec<_>>>()?;
        if axis == SweepAxis::Nmd {
            let dirs: Vec<PathBuf> = layouts.iter().map(|l| l.model_dir.clone()).collect();
            check_targets_monotone(cfg, &dirs, &values)?;
        }
    }

    let rows: Vec<SweepRow> = values
        .par_iter()
        .zip(&layouts)
        .map(|(v, l)| {
            let runner = Runner::new(point_config(cfg, axis, *v), l.clone(), strict)?;
            if axis != SweepAxis::Threshold {
                runner.run(Stage::Train)?;
            }
            runner.run(Stage::Prune)?;
            runner.run(Stage::Eval)?;
            let ps = load_prune_summary(&l.work_dir)?;
            let (baseline, pruned) = load_eval_summary(&l.work_dir)?;
            Ok(SweepRow {
                value: *v,
                segments: ps.scenes.iter().map(|s| s.segments).sum(),
                traced_nodes: ps.scenes.iter().map(|s| s.traced_nodes).sum(),
                surviving_nodes: ps.scenes.iter().map(|s| s.surviving_nodes).sum(),
                baseline,
                pruned,
            })
        })
        .collect::<Result<_>>()?;

    match axis {
        SweepAxis::SamplingLength => {
            check_non_increasing("segment count", axis, &values, &rows.iter().map(|r| r.segments).collect::<Vec<_>>())?
        }
        SweepAxis::Threshold => check_non_increasing(
            "surviving node count",
            axis,
            &values,
            &rows.iter().map(|r| r.surviving_nodes).collect::<Vec<_>>(),
        )?,
        SweepAxis::Nmd => {}
    }

    let table = SweepTable { axis, rows };
    let mut json = serde_json::to_string_pretty(&table)?;
    json.push('\n');
    let txt = table.to_text();
    let mut outputs = Vec::new();
    for (name, bytes) in [("table.json", json.as_bytes()), ("table.txt", txt.as_bytes())] {
        let path = root.join(name);
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        outputs.push(FileHash { root: Root::Work, path: name.into(), sha256: sha256_hex(bytes) });
    }
    let manifest = Manifest {
        stage: format!("sweep_{}", axis.name()),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.sha256()?,
        seed: cfg.rng_seed,
        inputs: Vec::new(),
        outputs,
    };
    let mpath = root.join("manifests").join("manifest_sweep.json");
    std::fs::create_dir_all(mpath.parent().unwrap()).map_err(|e| Error::io(&root, e))?;
    std::fs::write(&mpath, manifest.to_json()? + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(table)
}
