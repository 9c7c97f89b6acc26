use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::GatGraph;
use super::layer::{GatLayer, LayerCache, LayerGrads, LayerKind};
use super::loss::bce_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    pub heads: usize,
    /// Per-head width of every hidden layer.
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub threshold: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            hidden_dim: 16,
            hidden_layers: 4,
            leaky_slope: 0.2,
            learning_rate: 5e-6,
            weight_decay: 5e-4,
            epochs: 200,
            threshold: 0.5,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.heads == 0 || self.hidden_dim == 0 {
            return bad("heads and hidden_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad(format!("leaky_slope must lie in [0, 1), got {}", self.leaky_slope));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        Ok(())
    }
}

/// Hidden attention layers followed by one single-output averaging layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatModel {
    pub config: GatConfig,
    pub in_dim: usize,
    pub seed: u64,
    pub layers: Vec<GatLayer>,
}

pub struct ModelCache {
    layers: Vec<LayerCache>,
}

impl ModelCache {
    pub fn scores(&self) -> &[f64] {
        self.layers.last().expect("model has layers").output()
    }

    pub fn activation_pattern(&self, model: &GatModel) -> Vec<bool> {
        self.layers.iter().zip(&model.layers).flat_map(|(c, l)| c.activation_pattern(l.kind)).collect()
    }
}

const CHECKPOINT_FORMAT: &str = "vesselprune-gat";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    format: String,
    version: u32,
    in_dim: usize,
    seed: u64,
    config: GatConfig,
    param_count: usize,
}

impl GatModel {
    /// All parameters zero: every score is exactly 0.5.
    pub fn zeros(config: &GatConfig, in_dim: usize) -> Result<Self> {
        config.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidParam("input dimension must be positive".into()));
        }
        let k = config.heads;
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut d = in_dim;
        for _ in 0..config.hidden_layers {
            layers.push(GatLayer::zeros(d, config.hidden_dim, k, LayerKind::Hidden, config.leaky_slope));
            d = k * config.hidden_dim;
        }
        layers.push(GatLayer::zeros(d, 1, k, LayerKind::Output, config.leaky_slope));
        Ok(Self { config: config.clone(), in_dim, seed: 0, layers })
    }

    /// Xavier-uniform initialisation with gain 1.
    pub fn new(config: &GatConfig, in_dim: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config, in_dim)?;
        m.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.layers {
            let bw = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            let ba = (6.0 / (1 + 2 * l.out_dim) as f64).sqrt();
            for k in 0..l.heads {
                l.w[k].iter_mut().for_each(|v| *v = rng.random_range(-bw..=bw));
                l.a[k].iter_mut().for_each(|v| *v = rng.random_range(-ba..=ba));
            }
        }
        Ok(m)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Parameters in declared order: per layer, per head, `W` then `a`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            for k in 0..l.heads {
                p.extend_from_slice(&l.w[k]);
                p.extend_from_slice(&l.a[k]);
            }
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            for k in 0..l.heads {
                let nw = l.w[k].len();
                l.w[k].copy_from_slice(&p[off..off + nw]);
                off += nw;
                let na = l.a[k].len();
                l.a[k].copy_from_slice(&p[off..off + na]);
                off += na;
            }
        }
        Ok(())
    }

    pub fn flatten_grads(grads: &[LayerGrads]) -> Vec<f64> {
        let mut out = Vec::new();
        for g in grads {
            for (w, a) in g.w.iter().zip(&g.a) {
                out.extend_from_slice(w);
                out.extend_from_slice(a);
            }
        }
        out
    }

    fn check_graph(&self, g: &GatGraph) -> Result<()> {
        if !g.is_empty() && g.dim() != self.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, graph has {}",
                self.in_dim,
                g.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &GatGraph) -> Result<ModelCache> {
        self.check_graph(g)?;
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = caches.last().map(|c| c.output()).unwrap_or(g.features());
            caches.push(l.forward(g, input)?);
        }
        Ok(ModelCache { layers: caches })
    }

    pub fn predict(&self, g: &GatGraph) -> Result<Vec<f64>> {
        Ok(self.forward(g)?.scores().to_vec())
    }

    pub fn backward(&self, g: &GatGraph, cache: &ModelCache, d_scores: &[f64]) -> Vec<LayerGrads> {
        let mut grads = vec![None; self.layers.len()];
        let mut d = d_scores.to_vec();
        for (idx, (l, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let (gr, dh) = l.backward(g, c, &d);
            grads[idx] = Some(gr);
            d = dh;
        }
        grads.into_iter().map(|g| g.expect("every layer visited")).collect()
    }

    /// Mean BCE over nodes and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, g: &GatGraph, targets: &[f64]) -> Result<(f64, Vec<LayerGrads>)> {
        let cache = self.forward(g)?;
        let (loss, d) = bce_loss(cache.scores(), targets)?;
        Ok((loss, self.backward(g, &cache, &d)))
    }

    pub fn loss(&self, g: &GatGraph, targets: &[f64]) -> Result<f64> {
        Ok(bce_loss(self.forward(g)?.scores(), targets)?.0)
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            in_dim: self.in_dim,
            seed: self.seed,
            config: self.config.clone(),
            param_count: self.param_count(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(4 + json.len() + 4 * header.param_count);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.params() {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| Error::VolumeFormat(format!("checkpoint: {m}"));
        if bytes.len() < 4 {
            return Err(fmt("truncated header length"));
        }
        let hlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let body = bytes.get(4..4 + hlen).ok_or_else(|| fmt("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(fmt("unsupported format or version"));
        }
        let mut model = Self::zeros(&header.config, header.in_dim)?;
        model.seed = header.seed;
        if model.param_count() != header.param_count {
            return Err(fmt("parameter count disagrees with architecture"));
        }
        let blob = &bytes[4 + hlen..];
        if blob.len() != 4 * header.param_count {
            return Err(fmt("parameter blob has wrong length"));
        }
        let params: Vec<f64> = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("checkpoint contains non-finite parameters".into()));
        }
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Round parameters to f32 so in-memory predictions match a reloaded
    /// checkpoint exactly.
    pub fn quantize_f32(&mut self) {
        let p: Vec<f64> = self.params().into_iter().map(|v| v as f32 as f64).collect();
        self.set_params(&p).expect("same length");
    }
}
