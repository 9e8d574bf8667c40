use crate::data::{augment_with, BatchSampler, LabeledSet, ProtocolSplit};
use crate::error::{config, Error, Result};
use crate::losses::{anomaly_score, Center, Method, ScoreInput};
use crate::nn::{AdamConfig, AdamState, Network, Tensor};
use crate::rng::{self, Stream};

use super::auc::auc;
use super::config::TrainConfig;

const INFER_CHUNK: usize = 2048;

/// A trained network together with what is needed to score with it.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub net: Network,
    pub center: Option<Center>,
}

impl TrainedModel {
    /// Anomaly scores of every row of `x`.
    pub fn scores(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.rows());
        let rows: Vec<usize> = (0..x.rows()).collect();
        for chunk in rows.chunks(INFER_CHUNK) {
            let batch = x.select_rows(chunk);
            let (reps, logits) = self.net.infer(&batch)?;
            let input = match &logits {
                Some(l) => ScoreInput::Logits(l),
                None => ScoreInput::Reps(&reps),
            };
            out.extend(anomaly_score(&self.method, self.center.as_ref(), input)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: TrainedModel,
    /// Mean batch loss of every completed epoch.
    pub loss_trace: Vec<f64>,
    pub epochs_run: usize,
    /// Total rows whose HSC radial value hit the floor.
    pub saturated: usize,
    pub diverged: bool,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

fn initial_center(net: &Network, normal: &LabeledSet) -> Result<Center> {
    let (reps, _) = net.infer(&normal.x)?;
    Center::from_reps(&reps)
}

/// Trains a fresh network for `method` on `split`.
///
/// Methods without OE never look at `split.oe`. A non-finite loss or gradient
/// stops training and sets `diverged`; the model is returned as it was.
pub fn train_model(train: &TrainConfig, method: &Method, split: &ProtocolSplit, seed: u64) -> Result<TrainReport> {
    train.validate()?;
    if split.train_normal.is_empty() {
        return Err(config("empty normal training set"));
    }
    let oe = if method.uses_oe() {
        if split.oe.is_empty() {
            return Err(config(format!("{} needs OE samples", method.label())));
        }
        Some(&split.oe)
    } else {
        None
    };
    let mut init = rng::substream(seed, Stream::Init);
    let mut net = Network::mlp(
        split.train_normal.dim(),
        &train.hidden,
        train.rep_dim,
        train.slope,
        method.head(),
        &mut init,
    )?;
    let center = if method.uses_center() { Some(initial_center(&net, &split.train_normal)?) } else { None };
    let mut sampler = BatchSampler::new(&split.train_normal, oe, train.batch_normal, train.batch_oe, seed)?;
    let mut noise = rng::substream(seed, Stream::Augment);
    let mut adam = AdamState::new(&net, AdamConfig { lr: train.lr, ..AdamConfig::default() });
    let mut loss_trace = Vec::with_capacity(train.epochs);
    let mut saturated = 0;
    let mut diverged = false;

    'epochs: for epoch in 0..train.epochs {
        adam.set_lr(train.lr_at(epoch));
        let batches = sampler.next_epoch();
        let mut total = 0.0;
        for batch in &batches {
            let x = augment_with(&batch.x, train.noise_sigma, &mut noise)?;
            let out = net.forward(&x)?;
            let (loss, upstream) = method.loss(&out.reps, out.logits.as_ref(), &batch.y, center.as_ref())?;
            if !loss.loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            saturated += loss.saturated;
            let grads = net.backward(&out.cache, &upstream)?;
            match adam.step(&mut net, &grads) {
                Ok(()) => {}
                Err(Error::Training(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            total += loss.loss;
        }
        loss_trace.push(total / batches.len() as f64);
    }
    let epochs_run = loss_trace.len();
    Ok(TrainReport {
        model: TrainedModel { method: *method, net, center },
        loss_trace,
        epochs_run,
        saturated,
        diverged,
    })
}

/// Scores `test` and computes its AUC.
pub fn evaluate(model: &TrainedModel, test: &LabeledSet) -> Result<(Vec<f64>, f64)> {
    let scores = model.scores(&test.x)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite anomaly score".into()));
    }
    let a = auc(&scores, &test.y)?;
    Ok((scores, a))
}

/// Anything that turns a split into test-set anomaly scores.
pub trait ScoreTrainer: Sync {
    /// `Ok(None)` signals a diverged run.
    fn test_scores(&self, split: &ProtocolSplit, seed: u64) -> Result<Option<Vec<f64>>>;
}

/// The network trainer used by the benchmarks.
#[derive(Debug, Clone)]
pub struct NetTrainer {
    pub method: Method,
    pub train: TrainConfig,
}

impl ScoreTrainer for NetTrainer {
    fn test_scores(&self, split: &ProtocolSplit, seed: u64) -> Result<Option<Vec<f64>>> {
        let report = train_model(&self.train, &self.method, split, seed)?;
        if report.diverged {
            return Ok(None);
        }
        let scores = report.model.scores(&split.test.x)?;
        Ok(scores.iter().all(|s| s.is_finite()).then_some(scores))
    }
}
