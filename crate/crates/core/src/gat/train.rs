use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::GatGraph;
use super::model::GatModel;
use super::optim::{adam_step, AdamState};

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub graph: GatGraph,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-graph loss of each epoch, measured before each step.
    pub epoch_loss: Vec<f64>,
}

/// One full-graph Adam step per sample, samples shuffled each epoch.
pub fn train(model: &mut GatModel, data: &[TrainSample], epochs: usize, seed: u64) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    for (k, s) in data.iter().enumerate() {
        if s.graph.len() != s.targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample {k}: {} nodes, {} targets",
                s.graph.len(),
                s.targets.len()
            )));
        }
        if !s.graph.is_empty() && s.graph.dim() != model.in_dim {
            return Err(Error::DimensionMismatch(format!(
                "sample {k}: feature dim {} != {}",
                s.graph.dim(),
                model.in_dim
            )));
        }
        if s.targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParam(format!("sample {k}: target outside [0, 1]")));
        }
    }
    let (lr, wd) = (model.config.learning_rate, model.config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(model.param_count());
    let mut params = model.params();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let s = &data[k];
            if s.graph.is_empty() {
                continue;
            }
            let (loss, grads) = model.loss_and_grad(&s.graph, &s.targets)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became {loss} at epoch {epoch}, sample {k}")));
            }
            total += loss;
            let g = GatModel::flatten_grads(&grads);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient at epoch {epoch}, sample {k}")));
            }
            adam_step(&mut params, &g, &mut state, lr, wd)?;
            model.set_params(&params)?;
        }
        history.push(total / data.len() as f64);
    }
    Ok(TrainHistory { epoch_loss: history })
}
