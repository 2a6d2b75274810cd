//! Surrogate-versus-oracle metrics and the evaluation protocols: accuracy
//! on held-out targets, training-ratio sweeps, robustness to edge
//! probability perturbation, and frozen-model transfer to a larger network.

mod report;

pub use report::{
    read_report, report_without_timing, write_error_geojson, write_per_node_csv, write_report,
    ReportFile,
};

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_features, generate_samples, select_targets, GraphSample, LabelingConfig, SplitSpec,
};
use crate::error::{Error, Result};
use crate::gnn::{forward, train, BatchInput, GnnModel, GraphTopology, Mode, TrainConfig};
use crate::graph::{Network, NodeId};
use crate::hazard::FailureField;
use crate::mc::{estimate_connectivity, McConfig};
use crate::seed;

/// Probability cut points for class-level evaluation. Boundary values
/// assign upward: p equal to a cut belongs to the band above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBands {
    /// Two-class cut (connected vs disconnected).
    pub two_class_cut: f64,
    /// Three-class cuts (major / minor / normal), strictly increasing.
    pub three_class_cuts: (f64, f64),
}

impl Default for ClassBands {
    fn default() -> Self {
        ClassBands {
            two_class_cut: 0.5,
            three_class_cuts: (0.5, 0.75),
        }
    }
}

impl ClassBands {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.three_class_cuts;
        if !(0.0 < a && a < b && b < 1.0) || !(0.0 < self.two_class_cut && self.two_class_cut < 1.0)
        {
            return Err(Error::Validation(
                "class cuts must be strictly increasing inside (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// 0 = disconnected, 1 = connected.
    pub fn two_class(&self, p: f64) -> usize {
        usize::from(p >= self.two_class_cut)
    }

    /// 0 = major disconnection, 1 = minor disconnection, 2 = normal.
    pub fn three_class(&self, p: f64) -> usize {
        if p >= self.three_class_cuts.1 {
            2
        } else if p >= self.three_class_cuts.0 {
            1
        } else {
            0
        }
    }

    pub fn three_class_name(&self, p: f64) -> &'static str {
        ["major", "minor", "normal"][self.three_class(p)]
    }
}

/// Scalar comparison metrics. `pearson_r` is NaN when either side is
/// constant (undefined correlation). Wall times are filled by experiment
/// drivers and live in their own report section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub f1_2class: f64,
    pub f1_3class: f64,
    pub pearson_r: f64,
    /// Fraction of nodes misclassified at the 0.75 cutoff.
    pub fp_fn_rate: f64,
    pub wall_time_gnn_s: f64,
    pub wall_time_mc_s: f64,
}

/// Macro-averaged F1 over `n_classes`; classes absent from both
/// predictions and labels are excluded from the average.
fn macro_f1(pred: &[usize], labels: &[usize], n_classes: usize) -> f64 {
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &y) in pred.iter().zip(labels) {
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fn_[c] == 0 {
            continue; // absent everywhere
        }
        present += 1;
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    if present == 0 {
        1.0
    } else {
        sum / present as f64
    }
}

fn pearson(pred: &[f64], labels: &[f64]) -> f64 {
    let constant = |xs: &[f64]| xs.windows(2).all(|w| w[0] == w[1]);
    if constant(pred) || constant(labels) {
        return f64::NAN; // degenerate input, correlation undefined
    }
    let n = pred.len() as f64;
    let mx = pred.iter().sum::<f64>() / n;
    let my = labels.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in pred.iter().zip(labels) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN; // degenerate input, correlation undefined
    }
    sxy / (sxx * syy).sqrt()
}

/// Compute all scalar metrics for paired predictions and labels.
pub fn compute_metrics(pred: &[f64], labels: &[f64], bands: &ClassBands) -> Result<MetricsReport> {
    bands.validate()?;
    if pred.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Validation("metrics need at least two points".into()));
    }
    let n = pred.len() as f64;
    let mae = pred
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / n;
    let mse = pred
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n;
    let two_p: Vec<usize> = pred.iter().map(|&p| bands.two_class(p)).collect();
    let two_y: Vec<usize> = labels.iter().map(|&y| bands.two_class(y)).collect();
    let three_p: Vec<usize> = pred.iter().map(|&p| bands.three_class(p)).collect();
    let three_y: Vec<usize> = labels.iter().map(|&y| bands.three_class(y)).collect();
    let fp_fn = pred
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.75) != (y >= 0.75))
        .count() as f64
        / n;
    Ok(MetricsReport {
        mae,
        mse,
        f1_2class: macro_f1(&two_p, &two_y, 2),
        f1_3class: macro_f1(&three_p, &three_y, 3),
        pearson_r: pearson(pred, labels),
        fp_fn_rate: fp_fn,
        wall_time_gnn_s: 0.0,
        wall_time_mc_s: 0.0,
    })
}

/// One per-(node, target) comparison row for the error map outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerNodeError {
    pub node_id: NodeId,
    pub target_id: NodeId,
    pub pred: f64,
    pub label: f64,
    pub abs_err: f64,
    pub class_pred: String,
    pub class_label: String,
}

/// Accuracy experiment output: aggregate metrics, the per-node error rows,
/// and the node with the largest mean absolute error.
#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub metrics: MetricsReport,
    pub per_node: Vec<PerNodeError>,
    pub max_mae_node: NodeId,
    pub max_mae: f64,
    /// Per-node mean absolute error (for map exports).
    pub node_mae: Vec<f64>,
}

/// Evaluate the surrogate over test samples in eval mode. Returns
/// per-sample prediction vectors and the inference wall time.
pub fn predict_samples(
    model: &GnnModel,
    topo: &GraphTopology,
    samples: &[GraphSample],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let start = Instant::now();
    let mut preds = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let refs: Vec<&GraphSample> = chunk.iter().collect();
        let batch = BatchInput::build(&refs, topo, &model.norm)?;
        let out = forward(model, &batch, Mode::Eval, 0);
        for w in batch.boundaries.windows(2) {
            preds.push(out.slice(ndarray::s![w[0]..w[1]]).to_vec());
        }
    }
    Ok((preds, start.elapsed().as_secs_f64()))
}

/// Time the Monte Carlo oracle over the same test samples (relabeling each
/// with its stored seed, so the labels it produces are the dataset labels).
pub fn time_mc_labeling(
    net: &Network,
    samples: &[GraphSample],
    mc: &McConfig,
) -> Result<f64> {
    let start = Instant::now();
    samples
        .par_iter()
        .try_for_each(|s| -> Result<()> {
            let field = FailureField::from_edge_probs(s.scenario.clone(), s.edge_features.clone());
            estimate_connectivity(net, &field, s.target, &mc.clone().with_seed(s.mc_seed))?;
            Ok(())
        })?;
    Ok(start.elapsed().as_secs_f64())
}

/// Compare surrogate predictions against the Monte Carlo labels of held-out
/// test samples. `train_wall_s` is the wall time spent training the model;
/// the GNN side of the timing comparison is training plus inference, the
/// MC side is labeling the same target set.
pub fn run_accuracy_experiment(
    model: &GnnModel,
    net: &Network,
    test: &[GraphSample],
    mc: &McConfig,
    bands: &ClassBands,
    train_wall_s: f64,
) -> Result<AccuracyReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("no test samples".into()));
    }
    let topo = GraphTopology::from_network(net);
    let (preds, infer_s) = predict_samples(model, &topo, test)?;
    let mc_s = time_mc_labeling(net, test, mc)?;

    let n = net.node_count();
    let mut all_pred = Vec::with_capacity(test.len() * n);
    let mut all_label = Vec::with_capacity(test.len() * n);
    let mut per_node = Vec::with_capacity(test.len() * n);
    let mut node_abs = vec![0.0f64; n];
    for (sample, pred) in test.iter().zip(&preds) {
        for v in 0..n {
            let p = pred[v];
            let y = sample.labels[v];
            all_pred.push(p);
            all_label.push(y);
            node_abs[v] += (p - y).abs();
            per_node.push(PerNodeError {
                node_id: v,
                target_id: sample.target,
                pred: p,
                label: y,
                abs_err: (p - y).abs(),
                class_pred: bands.three_class_name(p).to_string(),
                class_label: bands.three_class_name(y).to_string(),
            });
        }
    }
    let node_mae: Vec<f64> = node_abs.iter().map(|a| a / test.len() as f64).collect();
    let (max_mae_node, max_mae) = node_mae
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(v, &m)| (v, m))
        .expect("nonempty network");

    let mut metrics = compute_metrics(&all_pred, &all_label, bands)?;
    metrics.wall_time_gnn_s = train_wall_s + infer_s;
    metrics.wall_time_mc_s = mc_s;
    Ok(AccuracyReport {
        metrics,
        per_node,
        max_mae_node,
        max_mae,
        node_mae,
    })
}

/// One ratio sweep entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub ratio: f64,
    pub train_targets: usize,
    pub metrics: MetricsReport,
}

/// Train one model per training-target ratio against a fixed test set and
/// report metrics for each. The test samples are generated once from the
/// base split; its test selection does not depend on the ratio.
pub fn run_ratio_sweep(
    net: &Network,
    ratios: &[f64],
    base_split: &SplitSpec,
    n_k: usize,
    labeling: &LabelingConfig<'_>,
    train_cfg: &TrainConfig,
    bands: &ClassBands,
    sweep_seed: u64,
) -> Result<Vec<RatioReport>> {
    if ratios.is_empty() {
        return Err(Error::Validation("ratio list is empty".into()));
    }
    let topo = GraphTopology::from_network(net);
    let base_targets = select_targets(net, base_split)?;
    let test = generate_samples(net, &base_targets.test, n_k, labeling, sweep_seed)?;

    let mut reports = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let mut split = base_split.clone();
        split.train_target_ratio = ratio;
        let targets = select_targets(net, &split)?;
        debug_assert_eq!(targets.test, base_targets.test);
        let train_samples = generate_samples(net, &targets.train, n_k, labeling, sweep_seed)?;
        let stats = crate::dataset::FeatureStats::fit(&train_samples)?;
        let model = GnnModel::init(stats, seed::mix2(sweep_seed, 0x1a7, i as u64));
        let cfg = train_cfg
            .clone()
            .with_seed(seed::mix2(sweep_seed, 0x7a, i as u64));
        let outcome = train(model, &train_samples, &topo, &cfg)?;

        let (preds, _) = predict_samples(&outcome.model, &topo, &test)?;
        let all_pred: Vec<f64> = preds.iter().flatten().copied().collect();
        let all_label: Vec<f64> = test.iter().flat_map(|s| s.labels.iter().copied()).collect();
        let metrics = compute_metrics(&all_pred, &all_label, bands)?;
        log::info!(
            "ratio {ratio:.2}: {} train targets, mae {:.4}, f1_2 {:.3}",
            targets.train.len(),
            metrics.mae,
            metrics.f1_2class
        );
        reports.push(RatioReport {
            ratio,
            train_targets: targets.train.len(),
            metrics,
        });
    }
    Ok(reports)
}

/// Perturb each test sample's edge failure probabilities with zero-mean
/// Gaussian noise (sigma = `noise_frac * p`), rebuild node features,
/// relabel with the Monte Carlo oracle, and evaluate the frozen model.
pub fn run_perturbation_experiment(
    model: &GnnModel,
    net: &Network,
    test: &[GraphSample],
    noise_frac: f64,
    mc: &McConfig,
    bands: &ClassBands,
    noise_seed: u64,
) -> Result<MetricsReport> {
    if noise_frac < 0.0 {
        return Err(Error::Validation("noise_frac must be >= 0".into()));
    }
    let topo = GraphTopology::from_network(net);
    let perturbed: Vec<GraphSample> = test
        .par_iter()
        .map(|s| -> Result<GraphSample> {
            let mut rng = seed::rng(seed::mix2(noise_seed, 0x9e27, s.id as u64));
            let edge_probs: Vec<f64> = s
                .edge_features
                .iter()
                .map(|&p| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (p + noise_frac * p * z).clamp(0.0, 1.0)
                })
                .collect();
            let field = FailureField::from_edge_probs(s.scenario.clone(), edge_probs);
            let (node_features, edge_features) = build_features(net, &field, s.target)?;
            let estimate =
                estimate_connectivity(net, &field, s.target, &mc.clone().with_seed(s.mc_seed))?;
            Ok(GraphSample {
                id: s.id,
                target: s.target,
                scenario_index: s.scenario_index,
                scenario: s.scenario.clone(),
                node_features,
                edge_features,
                labels: estimate.probabilities,
                mc_seed: s.mc_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (preds, _) = predict_samples(model, &topo, &perturbed)?;
    let all_pred: Vec<f64> = preds.iter().flatten().copied().collect();
    let all_label: Vec<f64> = perturbed
        .iter()
        .flat_map(|s| s.labels.iter().copied())
        .collect();
    compute_metrics(&all_pred, &all_label, bands)
}

/// Transfer evaluation output.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub metrics: MetricsReport,
    /// Model parameters compared bitwise before and after the run.
    pub params_unchanged: bool,
    pub test_targets: usize,
}

/// Evaluate a frozen model on a different (typically larger, superset)
/// network: generate that network's test samples with fresh Monte Carlo
/// labels and score predictions without any retraining.
pub fn run_transfer_experiment(
    model: &GnnModel,
    net_b: &Network,
    split_b: &SplitSpec,
    n_k: usize,
    labeling: &LabelingConfig<'_>,
    bands: &ClassBands,
    transfer_seed: u64,
) -> Result<TransferReport> {
    let before: Vec<u64> = model.params_flat().iter().map(|p| p.to_bits()).collect();
    let topo = GraphTopology::from_network(net_b);
    let targets = select_targets(net_b, split_b)?;
    let test = generate_samples(net_b, &targets.test, n_k, labeling, transfer_seed)?;
    let (preds, _) = predict_samples(model, &topo, &test)?;
    let all_pred: Vec<f64> = preds.iter().flatten().copied().collect();
    let all_label: Vec<f64> = test.iter().flat_map(|s| s.labels.iter().copied()).collect();
    let metrics = compute_metrics(&all_pred, &all_label, bands)?;
    let after: Vec<u64> = model.params_flat().iter().map(|p| p.to_bits()).collect();
    Ok(TransferReport {
        metrics,
        params_unchanged: before == after,
        test_targets: targets.test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_perfectly() {
        let labels = [0.1, 0.6, 0.9, 0.3, 0.8];
        let m = compute_metrics(&labels, &labels, &ClassBands::default()).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.f1_2class, 1.0);
        assert_eq!(m.f1_3class, 1.0);
        assert!((m.pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(m.fp_fn_rate, 0.0);
    }

    #[test]
    fn band_assignment_follows_inclusive_upper_ranges() {
        let bands = ClassBands::default();
        assert_eq!(bands.three_class_name(0.8), "normal");
        assert_eq!(bands.three_class_name(0.6), "minor");
        assert_eq!(bands.three_class_name(0.3), "major");
        // boundaries assign upward
        assert_eq!(bands.three_class_name(0.75), "normal");
        assert_eq!(bands.three_class_name(0.5), "minor");
        assert_eq!(bands.two_class(0.5), 1);
        assert_eq!(bands.two_class(0.4999), 0);
    }

    #[test]
    fn anti_correlated_predictions_give_minus_one() {
        let labels = [0.1, 0.2, 0.7, 0.9];
        let pred: Vec<f64> = labels.iter().map(|y| 1.0 - y).collect();
        let m = compute_metrics(&pred, &labels, &ClassBands::default()).unwrap();
        assert!((m.pearson_r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pearson_is_nan_sentinel() {
        let labels = [0.4, 0.4, 0.4];
        let pred = [0.1, 0.5, 0.9];
        let m = compute_metrics(&pred, &labels, &ClassBands::default()).unwrap();
        assert!(m.pearson_r.is_nan());
        assert!(m.mae > 0.0);
    }

    #[test]
    fn macro_f1_excludes_absent_classes() {
        // all points in class 2 (normal): classes 0/1 absent from both
        let pred = [0.9, 0.8, 0.76];
        let labels = [0.99, 0.83, 0.9];
        let m = compute_metrics(&pred, &labels, &ClassBands::default()).unwrap();
        assert_eq!(m.f1_3class, 1.0);
    }

    #[test]
    fn mae_squared_never_exceeds_mse() {
        let pred = [0.2, 0.4, 0.9, 0.1, 0.55];
        let labels = [0.25, 0.35, 0.8, 0.3, 0.5];
        let m = compute_metrics(&pred, &labels, &ClassBands::default()).unwrap();
        assert!(m.mae * m.mae <= m.mse + 1e-15);
    }

    #[test]
    fn constant_half_predictions_degrade_f1_relative_to_oracle() {
        let labels = [0.1, 0.2, 0.9, 0.95, 0.3, 0.85];
        let oracle = compute_metrics(&labels, &labels, &ClassBands::default()).unwrap();
        let clipped = [0.5; 6];
        let degraded = compute_metrics(&clipped, &labels, &ClassBands::default()).unwrap();
        assert!(degraded.f1_2class < oracle.f1_2class);
        assert!(degraded.mae > oracle.mae);
    }
}
