//! Mini-batch training with Adam and best-validation snapshotting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{forward, loss_and_gradients, loss_l1, BatchInput, GnnModel, GraphTopology, Mode};
use crate::dataset::GraphSample;
use crate::error::{Error, Result};
use crate::seed;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Share of the training samples held out to pick the snapshot.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::Validation("invalid Adam parameters".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Validation("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Adam first/second moment state over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// One update. A zero gradient leaves parameters exactly unchanged.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Per-epoch losses. `val_loss` is absent when the training set is too
/// small to hold out a validation share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// A trained model plus its loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GnnModel,
    /// One entry per epoch.
    pub history: Vec<EpochStats>,
    /// Epoch whose snapshot was returned.
    pub best_epoch: usize,
}

fn fisher_yates(indices: &mut [usize], rng: &mut impl Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

fn eval_loss(
    model: &GnnModel,
    samples: &[&GraphSample],
    topo: &GraphTopology,
    batch_size: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size) {
        let batch = BatchInput::build(chunk, topo, &model.norm)?;
        let preds = forward(model, &batch, Mode::Eval, 0);
        let nodes = batch.total_nodes();
        sum += loss_l1(
            preds.as_slice().expect("contiguous"),
            batch.labels.as_slice().expect("contiguous"),
        )? * nodes as f64;
        count += nodes;
    }
    Ok(sum / count as f64)
}

/// Train on `samples`, shuffling each epoch and batching `batch_size`
/// samples per Adam step (loss averaged over all nodes of the batch).
/// Returns the snapshot with the lowest validation loss; deterministic for
/// a fixed config.
pub fn train(
    mut model: GnnModel,
    samples: &[GraphSample],
    topo: &GraphTopology,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate_shapes()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }

    // validation split off the shuffled sample list
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut split_rng = seed::rng(seed::mix(cfg.seed, 0x7a1));
    fisher_yates(&mut order, &mut split_rng);
    let val_count = ((samples.len() as f64 * cfg.val_fraction).round() as usize)
        .min(samples.len().saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(val_count);
    let val_samples: Vec<&GraphSample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let mut train_order: Vec<usize> = train_idx.to_vec();

    let mut params = model.params_flat();
    let mut adam = AdamState::new(params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_params = params.clone();
    let mut best_metric = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut global_step = 0u64;

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = seed::rng(seed::mix2(cfg.seed, 0xe9, epoch as u64));
        fisher_yates(&mut train_order, &mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut node_count = 0usize;
        for chunk in train_order.chunks(cfg.batch_size) {
            let refs: Vec<&GraphSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let batch = BatchInput::build(&refs, topo, &model.norm)?;
            let step_seed = seed::mix2(cfg.seed, 0x57e9, global_step);
            let (loss, grads) = loss_and_gradients(&model, &batch, step_seed, None);
            adam.step(&mut params, &grads.flat(), cfg);
            model.set_params_flat(&params)?;
            loss_sum += loss * batch.total_nodes() as f64;
            node_count += batch.total_nodes();
            global_step += 1;
        }
        let train_loss = loss_sum / node_count as f64;

        let val_loss = if val_samples.is_empty() {
            None
        } else {
            Some(eval_loss(&model, &val_samples, topo, cfg.batch_size)?)
        };
        // snapshot on validation loss, falling back to train loss
        let metric = val_loss.unwrap_or(train_loss);
        if metric < best_metric {
            best_metric = metric;
            best_params.copy_from_slice(&params);
            best_epoch = epoch;
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if epoch % 20 == 0 || epoch + 1 == cfg.epochs {
            log::debug!(
                "epoch {epoch}: train {train_loss:.4}, val {:?}",
                val_loss
            );
        }
    }

    model.set_params_flat(&best_params)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureStats;
    use crate::gnn::tests::{sample_on, unit_stats};
    use crate::graph::network_from_pairs;

    fn training_setup(n_samples: usize) -> (Vec<GraphSample>, GraphTopology, FeatureStats) {
        let net = network_from_pairs(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let topo = GraphTopology::from_network(&net);
        let samples: Vec<GraphSample> = (0..n_samples)
            .map(|i| {
                let mut s = sample_on(
                    &net,
                    vec![0.1 + 0.01 * (i % 7) as f64; 5],
                    i % 5,
                    1000 + i as u64,
                );
                s.labels = vec![0.8; 5];
                s
            })
            .collect();
        (samples, topo, unit_stats())
    }

    #[test]
    fn constant_labels_are_learned_quickly() {
        let (samples, topo, stats) = training_setup(12);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let model = GnnModel::init(stats, 3);
        let out = train(model, &samples, &topo, &cfg).unwrap();
        assert_eq!(out.history.len(), 50);
        let last = out.history.last().unwrap();
        assert!(
            last.train_loss < 0.02,
            "train loss stuck at {}",
            last.train_loss
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (samples, topo, stats) = training_setup(8);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train(GnnModel::init(stats.clone(), 3), &samples, &topo, &cfg).unwrap();
        let b = train(GnnModel::init(stats, 3), &samples, &topo, &cfg).unwrap();
        assert_eq!(a.model.params_flat(), b.model.params_flat());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let cfg = TrainConfig::default();
        let mut params = vec![0.5, -0.25, 1.5];
        let before = params.clone();
        let mut adam = AdamState::new(3);
        adam.step(&mut params, &[0.0, 0.0, 0.0], &cfg);
        adam.step(&mut params, &[0.0, 0.0, 0.0], &cfg);
        assert_eq!(params, before);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let (_, topo, stats) = training_setup(1);
        let err = train(GnnModel::init(stats, 0), &[], &topo, &TrainConfig::default());
        assert!(err.is_err());
    }
}
