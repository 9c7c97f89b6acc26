//! Pipeline configuration: one JSON document with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gat::GatConfig;
use crate::heatmap::HeatmapParams;
use crate::pruneval::EvalConfig;
use crate::synth::{CorruptionParams, SynthParams};
use crate::tracer::TracerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train_scenes: 50, test_scenes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualGraphConfig {
    pub sampling_length: f64,
    /// Node matching distance for soft targets, mm.
    pub nmd: f64,
    /// Node spacing the traced and true forests are resampled to, mm.
    pub resample_step: f64,
}

impl Default for DualGraphConfig {
    fn default() -> Self {
        Self { sampling_length: 5.0, nmd: 3.0, resample_step: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nmd,
    SamplingLength,
    Threshold,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nmd => "nmd",
            SweepAxis::SamplingLength => "sampling_length",
            SweepAxis::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { axis: SweepAxis::Nmd, values: vec![3.0, 7.0, 11.0, 15.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    pub data: DataConfig,
    pub synth: SynthParams,
    pub corruption: CorruptionParams,
    pub heatmap: HeatmapParams,
    pub tracer: TracerParams,
    pub dualgraph: DualGraphConfig,
    pub gat: GatConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub io: IoConfig,
}

fn qualify(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::InvalidParam(m) => Error::Config(format!("{section}.{m}")),
        other => other,
    })
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{path} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    /// Parse and validate; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.train_scenes == 0 {
            return Err(Error::Config("data.train_scenes must be positive".into()));
        }
        qualify("synth", self.synth.validate())?;
        qualify("corruption", self.corruption.validate())?;
        qualify("heatmap", self.heatmap.validate())?;
        qualify("tracer", self.tracer.validate())?;
        positive("dualgraph.sampling_length", self.dualgraph.sampling_length)?;
        positive("dualgraph.nmd", self.dualgraph.nmd)?;
        positive("dualgraph.resample_step", self.dualgraph.resample_step)?;
        qualify("gat", self.gat.validate())?;
        qualify("eval", self.eval.validate())?;
        for (k, v) in self.sweep.values.iter().enumerate() {
            let path = format!("sweep.values[{k}]");
            match self.sweep.axis {
                SweepAxis::Threshold if !(0.0..=1.0).contains(v) => {
                    return Err(Error::Config(format!("{path} must lie in [0, 1], got {v}")))
                }
                SweepAxis::Threshold => {}
                _ => positive(&path, *v)?,
            }
        }
        Ok(())
    }

    /// Canonical serialisation used for hashing.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hash of the canonical form with the output directory cleared, so
    /// identical runs into different directories record the same hash.
    pub fn sha256(&self) -> Result<String> {
        let mut c = self.clone();
        c.io.out_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(c.canonical_json()?.as_bytes())))
    }
}
