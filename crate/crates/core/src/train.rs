//! Training loop, micro-averaged metrics and multi-run aggregation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{compute_class_weights, ClassWeights, LabeledExample};
use crate::error::{Error, Result};
use crate::models::{Encoded, Model};
use crate::rng;
use crate::tensor::kernels::{sigmoid, softplus};
use crate::tensor::{Adam, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Decision threshold for metrics.
    pub threshold: f64,
    /// Examples per gradient shard; shards are summed in order.
    pub shard_size: usize,
    /// Worker threads for shard gradients; 1 runs inline.
    pub workers: usize,
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            lr: 1e-2,
            seed: 0,
            threshold: 0.5,
            shard_size: 16,
            workers: 1,
            class_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.shard_size == 0 {
            return Err(Error::Config("epochs, batch_size and shard_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Validation,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Train => "train",
            Side::Validation => "validation",
        })
    }
}

/// Cell counts over (example, drug) pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Counts `probs[i] >= threshold` against binary `targets`, optionally
    /// restricted to the label columns in `columns` (row width `width`).
    pub fn count(probs: &[f64], targets: &[u8], width: usize, threshold: f64, columns: Option<&[usize]>) -> Self {
        let mut c = Confusion::default();
        let mut tally = |p: f64, t: u8| match (p >= threshold, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        };
        match columns {
            None => probs.iter().zip(targets).for_each(|(&p, &t)| tally(p, t)),
            Some(cols) => {
                for (row_p, row_t) in probs.chunks(width).zip(targets.chunks(width)) {
                    for &j in cols {
                        tally(row_p[j], row_t[j]);
                    }
                }
            }
        }
        c
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision and recall are 0 when their denominators are 0.
    pub fn metrics(&self) -> Metrics {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub epoch: usize,
    pub side: Side,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub loss: f64,
}

impl MetricsSnapshot {
    pub fn new(epoch: usize, side: Side, m: Metrics, loss: f64) -> Self {
        MetricsSnapshot {
            epoch,
            side,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            loss,
        }
    }
}

/// Mean binary cross-entropy of logits against targets, unweighted.
pub fn bce_mean(logits: &[f64], targets: &[u8]) -> f64 {
    let s: f64 = logits.iter().zip(targets).map(|(&z, &t)| softplus(z) - t as f64 * z).sum();
    s / logits.len().max(1) as f64
}

pub fn encode_batch(model: &Model, examples: &[&LabeledExample]) -> Result<Vec<Encoded>> {
    examples
        .iter()
        .map(|e| {
            model.encode(&e.residues).map_err(|err| match err {
                Error::InvalidResidue { residue, offset, .. } => Error::InvalidResidue {
                    accession: e.accession.clone(),
                    residue,
                    offset,
                },
                other => other,
            })
        })
        .collect()
}

/// Sigmoid outputs, row-major `N × out_dim`.
pub fn predict_probabilities(model: &Model, examples: &[LabeledExample], chunk: usize) -> Result<Vec<f64>> {
    let logits = predict_logits(model, examples, chunk)?;
    Ok(logits.into_iter().map(sigmoid).collect())
}

pub fn predict_logits(model: &Model, examples: &[LabeledExample], chunk: usize) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = examples
        .par_chunks(chunk.max(1))
        .map(|part| {
            let refs: Vec<&LabeledExample> = part.iter().collect();
            let batch = encode_batch(model, &refs)?;
            Ok(model.predict_logits(&batch)?.into_data())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

pub struct Evaluation {
    pub snapshot: MetricsSnapshot,
    pub confusion: Confusion,
    /// Row-major `N × out_dim` probabilities.
    pub probabilities: Vec<f64>,
}

/// Micro-averaged metrics over every (example, drug) cell and the
/// unweighted mean BCE.
pub fn evaluate(model: &Model, examples: &[LabeledExample], threshold: f64) -> Result<Evaluation> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluate on an empty dataset"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let targets = flat_targets(examples, model.out_dim())?;
    let logits = predict_logits(model, examples, 64)?;
    let loss = bce_mean(&logits, &targets);
    let probabilities: Vec<f64> = logits.into_iter().map(sigmoid).collect();
    let confusion = Confusion::count(&probabilities, &targets, model.out_dim(), threshold, None);
    Ok(Evaluation {
        snapshot: MetricsSnapshot::new(0, Side::Validation, confusion.metrics(), loss),
        confusion,
        probabilities,
    })
}

pub fn flat_targets(examples: &[LabeledExample], width: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(examples.len() * width);
    for e in examples {
        if e.labels.len() != width {
            return Err(Error::LabelLength {
                expected: width,
                found: e.labels.len(),
            });
        }
        out.extend_from_slice(&e.labels);
    }
    Ok(out)
}

/// Confusion per species from a probability matrix aligned with `examples`.
pub fn confusion_by_species(examples: &[LabeledExample], probs: &[f64], width: usize, threshold: f64, columns: Option<&[usize]>) -> BTreeMap<String, Confusion> {
    let mut out: BTreeMap<String, Confusion> = BTreeMap::new();
    for (e, row) in examples.iter().zip(probs.chunks(width)) {
        let c = Confusion::count(row, &e.labels, width, threshold, columns);
        out.entry(e.species.clone()).or_default().add(&c);
    }
    out
}

struct ShardResult {
    grads: Vec<Vec<f64>>,
    logits: Vec<f64>,
    loss: f64,
}

fn shard_gradients(model: &Model, shard: &[&LabeledExample], weights: &ClassWeights, batch_cells: usize, dropout_seed: u64, stream: &str) -> Result<ShardResult> {
    let width = model.out_dim();
    let batch = encode_batch(model, shard)?;
    let mut tape = Tape::new().training(rng::stream(dropout_seed, stream));
    let vars: Vec<Var> = model.bind(&mut tape);
    let logits = model.forward(&mut tape, &vars, &batch)?;
    let targets: Vec<f64> = shard.iter().flat_map(|e| e.labels.iter().map(|&b| b as f64)).collect();
    if targets.len() != shard.len() * width {
        return Err(Error::LabelLength {
            expected: width,
            found: targets.len() / shard.len().max(1),
        });
    }
    let loss = tape.bce_with_logits_weighted(logits, &targets, &weights.positive, &weights.negative)?;
    // Rescale the shard mean so shard losses sum to the batch mean.
    let loss = tape.scale(loss, targets.len() as f64 / batch_cells as f64)?;
    let loss_value = tape.value(loss).item();
    let logit_values = tape.value(logits).data().to_vec();
    tape.backward(loss)?;
    Ok(ShardResult {
        grads: vars.iter().map(|&v| tape.grad_or_zero(v)).collect(),
        logits: logit_values,
        loss: loss_value,
    })
}

pub struct TrainOutcome {
    pub history: Vec<MetricsSnapshot>,
    pub class_weights: ClassWeights,
    pub steps: u64,
}

/// Trains `model` in place with Adam on class-weighted BCE. After every
/// epoch a train snapshot (running metrics accumulated over the epoch's
/// batches) and, when `eval` is non-empty, a validation snapshot are
/// appended to the history and passed to `on_epoch`.
pub fn train<F>(model: &mut Model, train_set: &[LabeledExample], eval: &[LabeledExample], cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&Model, &[MetricsSnapshot]) -> Result<()>,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty"));
    }
    let width = model.out_dim();
    let weights = if cfg.class_weights { compute_class_weights(train_set)? } else { ClassWeights::uniform(width) };
    if weights.len() != width {
        return Err(Error::LabelLength {
            expected: width,
            found: weights.len(),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let mut adam = Adam::new(cfg.lr);
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &format!("train/shuffle/{epoch}")));
        let mut running = Confusion::default();
        let (mut loss_sum, mut cells) = (0.0, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&LabeledExample> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch_cells = batch.len() * width;
            let shards: Vec<&[&LabeledExample]> = batch.chunks(cfg.shard_size).collect();
            let model_ref: &Model = model;
            let results: Vec<ShardResult> = pool.install(|| {
                shards
                    .par_iter()
                    .enumerate()
                    .map(|(s, shard)| shard_gradients(model_ref, shard, &weights, batch_cells, cfg.seed, &format!("train/dropout/{epoch}/{b}/{s}")))
                    .collect::<Result<_>>()
            })?;
            let mut grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
            let mut batch_loss = 0.0;
            let mut logits = Vec::with_capacity(batch_cells);
            for r in results {
                batch_loss += r.loss;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                }
                logits.extend(r.logits);
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            let targets: Vec<u8> = batch.iter().flat_map(|e| e.labels.iter().copied()).collect();
            loss_sum += bce_mean(&logits, &targets) * batch_cells as f64;
            cells += batch_cells;
            let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
            running.add(&Confusion::count(&probs, &targets, width, cfg.threshold, None));
            adam.step(model.params_mut(), &grads)?;
        }
        let mut epoch_snaps = vec![MetricsSnapshot::new(epoch, Side::Train, running.metrics(), loss_sum / cells as f64)];
        if !eval.is_empty() {
            let ev = pool.install(|| evaluate(model, eval, cfg.threshold))?;
            epoch_snaps.push(MetricsSnapshot { epoch, ..ev.snapshot });
        }
        log::info!(
            "epoch {epoch}: {}",
            epoch_snaps
                .iter()
                .map(|s| format!("{} f1 {:.4} loss {:.4}", s.side, s.f1, s.loss))
                .collect::<Vec<_>>()
                .join(", ")
        );
        history.extend(epoch_snaps);
        on_epoch(model, &history)?;
    }
    Ok(TrainOutcome {
        history,
        class_weights: weights,
        steps: adam.step_count(),
    })
}

/// Mean with the 1.96·s/√n half-width (`None` for fewer than two values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: Option<f64>,
}

pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let half_width = (values.len() >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * var.sqrt() / n.sqrt()
    });
    MeanCi { mean, half_width }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n: usize,
    pub accuracy: MeanCi,
    pub precision: MeanCi,
    pub recall: MeanCi,
    pub f1: MeanCi,
    pub loss: MeanCi,
}

pub fn aggregate_runs(runs: &[MetricsSnapshot]) -> Result<RunAggregate> {
    if runs.len() < 2 {
        return Err(Error::EmptyInput("aggregation needs at least two runs"));
    }
    let col = |f: fn(&MetricsSnapshot) -> f64| mean_ci(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(RunAggregate {
        n: runs.len(),
        accuracy: col(|s| s.accuracy),
        precision: col(|s| s.precision),
        recall: col(|s| s.recall),
        f1: col(|s| s.f1),
        loss: col(|s| s.loss),
    })
}

/// One JSON object per line: run id, epoch, side and the five metrics.
pub fn write_metrics_log(run_id: &str, history: &[MetricsSnapshot], mut w: impl Write) -> Result<()> {
    for s in history {
        let line = serde_json::json!({
            "run": run_id,
            "epoch": s.epoch,
            "side": s.side,
            "accuracy": s.accuracy,
            "precision": s.precision,
            "recall": s.recall,
            "f1": s.f1,
            "loss": s.loss,
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Comma-separated curves: run, epoch, side, accuracy, precision, recall, f1, loss.
pub fn write_curves(runs: &[(String, Vec<MetricsSnapshot>)], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["run", "epoch", "side", "accuracy", "precision", "recall", "f1", "loss"])?;
    for (run, hist) in runs {
        for s in hist {
            wr.write_record([
                run.clone(),
                s.epoch.to_string(),
                s.side.to_string(),
                s.accuracy.to_string(),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
                s.loss.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
