use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::dualgraph::{
    aggregate_features, build_dual, build_feature_volumes, label_targets, segment_branches, DualGraph,
};
use crate::error::{Error, Result};
use crate::gat::{train, GatGraph, GatModel, TrainSample};
use crate::heatmap::compute_heatmap;
use crate::pruneval::{prune, MetricAccumulator, MetricReport};
use crate::swc::{parse_swc, resample_polyline, serialize_swc, VesselTree};
use crate::synth::{corrupt_heatmap, generate_forest, SynthParams};
use crate::tracer::trace_all;
use crate::volume::ScalarVolume;

use super::manifest::{derive_seed, sha256_file, sha256_hex, FileHash, Manifest, Root};
use super::text;

pub const GT_SWC: &str = "gt.swc";
pub const HEATMAP_CVOL: &str = "heatmap.cvol";
pub const TRACED_SWC: &str = "traced.swc";
pub const TRACE_REPORT: &str = "trace_report.json";
pub const DUAL_JSON: &str = "dual.json";
pub const DUAL_SCORED_JSON: &str = "dual_scored.json";
pub const PRUNED_SWC: &str = "pruned.swc";
pub const MODEL_CKPT: &str = "model.ckpt";
pub const TRAIN_HISTORY: &str = "train_history.json";
pub const PRUNE_SUMMARY: &str = "prune_summary.json";
pub const REPORT_BASELINE: &str = "report_baseline.json";
pub const REPORT_PRUNED: &str = "report_pruned.json";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Directories a run reads from and writes to. A plain run uses one
/// directory for all three; sweeps share the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub work_dir: PathBuf,
}

impl Layout {
    pub fn single(dir: &Path) -> Self {
        Self { data_dir: dir.to_path_buf(), model_dir: dir.to_path_buf(), work_dir: dir.to_path_buf() }
    }

    pub fn root(&self, r: Root) -> &Path {
        match r {
            Root::Data => &self.data_dir,
            Root::Model => &self.model_dir,
            Root::Work => &self.work_dir,
        }
    }

    pub fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.root(stage.root()).join("manifests").join(format!("manifest_{}.json", stage.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Heatmap,
    Trace,
    Featurize,
    Train,
    Prune,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Synth, Stage::Heatmap, Stage::Trace, Stage::Featurize, Stage::Train, Stage::Prune, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Heatmap => "heatmap",
            Stage::Trace => "trace",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Prune => "prune",
            Stage::Eval => "eval",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Where the stage writes its outputs and manifest.
    pub fn root(self) -> Root {
        match self {
            Stage::Synth | Stage::Heatmap | Stage::Trace => Root::Data,
            Stage::Featurize | Stage::Train => Root::Model,
            Stage::Prune | Stage::Eval => Root::Work,
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Heatmap => &[Stage::Synth],
            Stage::Trace => &[Stage::Heatmap],
            Stage::Featurize => &[Stage::Synth, Stage::Heatmap, Stage::Trace],
            Stage::Train => &[Stage::Featurize],
            Stage::Prune => &[Stage::Trace, Stage::Featurize, Stage::Train],
            Stage::Eval => &[Stage::Synth, Stage::Trace, Stage::Prune],
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scene {
    pub name: String,
    pub split: Split,
    pub index: usize,
}

impl Scene {
    fn file(&self, name: &str) -> PathBuf {
        Path::new("scenes").join(&self.name).join(name)
    }

    fn seed(&self, global: u64, stage: Stage) -> u64 {
        derive_seed(global, &[stage.tag(), self.split as u64, self.index as u64])
    }
}

pub fn scenes(cfg: &PipelineConfig) -> Vec<Scene> {
    let mk = |split, prefix: &str, n: usize| {
        (0..n).map(move |index| Scene { name: format!("{prefix}_{index:03}"), split, index }).collect::<Vec<_>>()
    };
    let mut out = mk(Split::Train, "train", cfg.data.train_scenes);
    out.extend(mk(Split::Test, "test", cfg.data.test_scenes));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePruneStats {
    pub scene: String,
    pub segments: usize,
    pub traced_nodes: usize,
    pub surviving_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub threshold: f64,
    pub scenes: Vec<ScenePruneStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReports {
    pub scene: String,
    pub baseline: MetricReport,
    pub pruned: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub baseline: MetricReport,
    pub pruned: MetricReport,
    pub scenes: Vec<SceneReports>,
}

/// Per-stage inputs and outputs gathered for the manifest.
#[derive(Default)]
struct Io {
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Io {
    fn merge(mut self, other: Io) -> Io {
        self.inputs.extend(other.inputs);
        self.outputs.extend(other.outputs);
        self
    }
}

/// Runs pipeline stages. Every stage reads its inputs from disk, so a
/// stage gives the same bytes whether run alone or inside `run_all`.
pub struct Runner {
    cfg: PipelineConfig,
    layout: Layout,
    strict: bool,
    config_sha256: String,
}

impl Runner {
    pub fn new(cfg: PipelineConfig, layout: Layout, strict: bool) -> Result<Self> {
        cfg.validate()?;
        let config_sha256 = cfg.sha256()?;
        Ok(Self { cfg, layout, strict, config_sha256 })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn read(&self, root: Root, rel: &Path, io: &mut Io) -> Result<Vec<u8>> {
        let path = self.layout.root(root).join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        io.inputs.push(FileHash { root, path: rel.to_path_buf(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn read_tree(&self, root: Root, rel: &Path, io: &mut Io) -> Result<VesselTree> {
        parse_swc(&self.read(root, rel, io)?)
    }

    fn read_dual(&self, root: Root, rel: &Path, io: &mut Io) -> Result<DualGraph> {
        let bytes = self.read(root, rel, io)?;
        DualGraph::from_json(std::str::from_utf8(&bytes).map_err(|e| Error::Structure(e.to_string()))?)
    }

    fn write(&self, root: Root, rel: &Path, bytes: &[u8], io: &mut Io) -> Result<()> {
        let path = self.layout.root(root).join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        io.outputs.push(FileHash { root, path: rel.to_path_buf(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn write_json<T: Serialize>(&self, root: Root, rel: &Path, value: &T, io: &mut Io) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(root, rel, text.as_bytes(), io)
    }

    /// In strict mode, every upstream output must still match the hash its
    /// manifest recorded.
    fn verify_upstream(&self, stage: Stage) -> Result<()> {
        if !self.strict {
            return Ok(());
        }
        for &up in stage.upstream() {
            let manifest = Manifest::load(&self.layout.manifest_path(up))?;
            for f in &manifest.outputs {
                let path = self.layout.root(f.root).join(&f.path);
                let actual = sha256_file(&path)?;
                if actual != f.sha256 {
                    return Err(Error::HashMismatch(format!(
                        "{} changed since stage {} wrote it (expected {}, found {actual})",
                        path.display(),
                        up.name(),
                        f.sha256
                    )));
                }
            }
        }
        Ok(())
    }

    fn finish(&self, stage: Stage, seed: u64, mut io: Io) -> Result<Manifest> {
        io.inputs.sort();
        io.inputs.dedup();
        io.outputs.sort();
        let manifest = Manifest {
            stage: stage.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_sha256.clone(),
            seed,
            inputs: io.inputs,
            outputs: io.outputs,
        };
        let path = self.layout.manifest_path(stage);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = manifest.to_json()?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    fn per_scene<F>(&self, scenes: &[Scene], f: F) -> Result<Io>
    where
        F: Fn(&Scene, &mut Io) -> Result<()> + Sync,
    {
        let parts: Vec<Result<Io>> = scenes
            .par_iter()
            .map(|s| {
                let mut io = Io::default();
                f(s, &mut io)?;
                Ok(io)
            })
            .collect();
        parts.into_iter().try_fold(Io::default(), |acc, p| Ok(acc.merge(p?)))
    }

    pub fn run(&self, stage: Stage) -> Result<Manifest> {
        self.verify_upstream(stage)?;
        match stage {
            Stage::Synth => self.synth(),
            Stage::Heatmap => self.heatmap(),
            Stage::Trace => self.trace(),
            Stage::Featurize => self.featurize(),
            Stage::Train => self.train(),
            Stage::Prune => self.prune(),
            Stage::Eval => self.eval(),
        }
    }

    pub fn run_all(&self) -> Result<Vec<Manifest>> {
        Stage::ALL.iter().map(|s| self.run(*s)).collect()
    }

    fn synth(&self) -> Result<Manifest> {
        let g = self.cfg.rng_seed;
        let io = self.per_scene(&scenes(&self.cfg), |s, io| {
            let params = SynthParams { rng_seed: s.seed(g, Stage::Synth), ..self.cfg.synth.clone() };
            let tree = generate_forest(&params)?;
            self.write(Root::Data, &s.file(GT_SWC), &serialize_swc(&tree), io)
        })?;
        self.finish(Stage::Synth, derive_seed(g, &[Stage::Synth.tag()]), io)
    }

    fn heatmap(&self) -> Result<Manifest> {
        let g = self.cfg.rng_seed;
        let sp = &self.cfg.synth;
        let io = self.per_scene(&scenes(&self.cfg), |s, io| {
            let gt = self.read_tree(Root::Data, &s.file(GT_SWC), io)?;
            let clean = compute_heatmap(&gt, sp.volume_dims, sp.spacing, &self.cfg.heatmap)?;
            let (vol, _) =
                corrupt_heatmap(&clean, &gt, &self.cfg.heatmap, &self.cfg.corruption, s.seed(g, Stage::Heatmap))?;
            self.write(Root::Data, &s.file(HEATMAP_CVOL), &vol.to_bytes(), io)
        })?;
        self.finish(Stage::Heatmap, derive_seed(g, &[Stage::Heatmap.tag()]), io)
    }

    fn trace(&self) -> Result<Manifest> {
        let io = self.per_scene(&scenes(&self.cfg), |s, io| {
            let hm = ScalarVolume::from_bytes(&self.read(Root::Data, &s.file(HEATMAP_CVOL), io)?)?;
            let (forest, report) = trace_all(&hm, &self.cfg.tracer)?;
            self.write(Root::Data, &s.file(TRACED_SWC), &serialize_swc(&forest), io)?;
            self.write_json(Root::Data, &s.file(TRACE_REPORT), &report, io)
        })?;
        self.finish(Stage::Trace, 0, io)
    }

    fn traced_segments(&self, s: &Scene, io: &mut Io) -> Result<(VesselTree, crate::dualgraph::SegmentSet)> {
        let traced = self.read_tree(Root::Data, &s.file(TRACED_SWC), io)?;
        let forest = resample_polyline(&traced, self.cfg.dualgraph.resample_step)?;
        let segs = segment_branches(&forest, self.cfg.dualgraph.sampling_length)?;
        Ok((forest, segs))
    }

    fn featurize(&self) -> Result<Manifest> {
        let dg = &self.cfg.dualgraph;
        let io = self.per_scene(&scenes(&self.cfg), |s, io| {
            let (_, segs) = self.traced_segments(s, io)?;
            let gt = resample_polyline(&self.read_tree(Root::Data, &s.file(GT_SWC), io)?, dg.resample_step)?;
            let hm = ScalarVolume::from_bytes(&self.read(Root::Data, &s.file(HEATMAP_CVOL), io)?)?;
            let stack = build_feature_volumes(&hm);
            let feats = aggregate_features(&segs, &stack)?;
            let targets = label_targets(&segs, &gt, dg.nmd)?;
            let mut dual = build_dual(&segs);
            for ((n, f), t) in dual.nodes.iter_mut().zip(feats).zip(targets) {
                n.feature = f;
                n.target = Some(t);
            }
            self.write(Root::Model, &s.file(DUAL_JSON), dual.to_json()?.as_bytes(), io)
        })?;
        self.finish(Stage::Featurize, 0, io)
    }

    fn train(&self) -> Result<Manifest> {
        let g = self.cfg.rng_seed;
        let mut io = Io::default();
        let mut samples = Vec::new();
        for s in scenes(&self.cfg).iter().filter(|s| s.split == Split::Train) {
            let dual = self.read_dual(Root::Model, &s.file(DUAL_JSON), &mut io)?;
            let targets =
                dual.targets().ok_or_else(|| Error::Structure(format!("{}: dual graph lacks targets", s.name)))?;
            samples.push(TrainSample { graph: GatGraph::from_dual(&dual)?, targets });
        }
        let in_dim = samples
            .iter()
            .find(|s| !s.graph.is_empty())
            .map(|s| s.graph.dim())
            .ok_or_else(|| Error::InvalidParam("every training scene traced to an empty forest".into()))?;
        let init_seed = derive_seed(g, &[Stage::Train.tag(), 0]);
        let shuffle_seed = derive_seed(g, &[Stage::Train.tag(), 1]);
        let mut model = GatModel::new(&self.cfg.gat, in_dim, init_seed)?;
        let history = train(&mut model, &samples, self.cfg.gat.epochs, shuffle_seed)?;
        model.quantize_f32();
        self.write(Root::Model, Path::new(MODEL_CKPT), &model.to_checkpoint_bytes()?, &mut io)?;
        self.write_json(Root::Model, Path::new(TRAIN_HISTORY), &history, &mut io)?;
        self.finish(Stage::Train, init_seed, io)
    }

    fn test_scenes(&self) -> Vec<Scene> {
        scenes(&self.cfg).into_iter().filter(|s| s.split == Split::Test).collect()
    }

    fn prune(&self) -> Result<Manifest> {
        let mut io = Io::default();
        let model = GatModel::from_checkpoint_bytes(&self.read(Root::Model, Path::new(MODEL_CKPT), &mut io)?)?;
        let threshold = self.cfg.gat.threshold;
        let tests = self.test_scenes();
        let stats: Vec<Result<(ScenePruneStats, Io)>> = tests
            .par_iter()
            .map(|s| {
                let mut io = Io::default();
                let (forest, segs) = self.traced_segments(s, &mut io)?;
                let mut dual = self.read_dual(Root::Model, &s.file(DUAL_JSON), &mut io)?;
                if dual.len() != segs.len()
                    || dual.nodes.iter().zip(&segs.segments).any(|(n, sg)| n.segment_node_ids != sg.node_ids)
                {
                    return Err(Error::Structure(format!("{}: dual graph does not match the traced forest", s.name)));
                }
                let scores = model.predict(&GatGraph::from_dual(&dual)?)?;
                if scores.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("{}: non-finite score", s.name)));
                }
                for (n, sc) in dual.nodes.iter_mut().zip(&scores) {
                    n.score = Some(*sc);
                }
                let pruned = prune(&forest, &segs, &scores, threshold)?;
                self.write(Root::Work, &s.file(DUAL_SCORED_JSON), dual.to_json()?.as_bytes(), &mut io)?;
                self.write(Root::Work, &s.file(PRUNED_SWC), &serialize_swc(&pruned), &mut io)?;
                let st = ScenePruneStats {
                    scene: s.name.clone(),
                    segments: segs.len(),
                    traced_nodes: forest.len(),
                    surviving_nodes: pruned.len(),
                };
                Ok((st, io))
            })
            .collect();
        let mut summary = PruneSummary { threshold, scenes: Vec::new() };
        for r in stats {
            let (st, part) = r?;
            summary.scenes.push(st);
            io = io.merge(part);
        }
        self.write_json(Root::Work, Path::new(PRUNE_SUMMARY), &summary, &mut io)?;
        self.finish(Stage::Prune, 0, io)
    }

    fn eval(&self) -> Result<Manifest> {
        let ec = &self.cfg.eval;
        let mut io = Io::default();
        let mut base_acc = MetricAccumulator::default();
        let mut pruned_acc = MetricAccumulator::default();
        let mut per_scene = Vec::new();
        for s in &self.test_scenes() {
            let gt = self.read_tree(Root::Data, &s.file(GT_SWC), &mut io)?;
            let traced = self.read_tree(Root::Data, &s.file(TRACED_SWC), &mut io)?;
            let pruned = self.read_tree(Root::Work, &s.file(PRUNED_SWC), &mut io)?;
            let baseline = base_acc.add(&traced, &gt, ec)?;
            let after = pruned_acc.add(&pruned, &gt, ec)?;
            self.write_json(Root::Work, &s.file(REPORT_BASELINE), &baseline, &mut io)?;
            self.write_json(Root::Work, &s.file(REPORT_PRUNED), &after, &mut io)?;
            per_scene.push(SceneReports { scene: s.name.clone(), baseline, pruned: after });
        }
        let summary = EvalSummary { baseline: base_acc.report(ec), pruned: pruned_acc.report(ec), scenes: per_scene };
        let reports = Path::new("reports");
        self.write_json(Root::Work, &reports.join("baseline.json"), &summary.baseline, &mut io)?;
        self.write_json(Root::Work, &reports.join("pruned.json"), &summary.pruned, &mut io)?;
        self.write_json(Root::Work, &reports.join("per_scene.json"), &summary.scenes, &mut io)?;
        let text = text::summary(&summary.baseline, &summary.pruned);
        self.write(Root::Work, Path::new(SUMMARY_TXT), text.as_bytes(), &mut io)?;
        self.finish(Stage::Eval, 0, io)
    }
}

pub fn load_eval_summary(work_dir: &Path) -> Result<(MetricReport, MetricReport)> {
    let load = |name: &str| -> Result<MetricReport> {
        let path = work_dir.join("reports").join(name);
        MetricReport::from_json(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)
    };
    Ok((load("baseline.json")?, load("pruned.json")?))
}

pub fn load_prune_summary(work_dir: &Path) -> Result<PruneSummary> {
    let path = work_dir.join(PRUNE_SUMMARY);
    Ok(serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?)
}
