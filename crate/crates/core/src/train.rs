//! Training loop, prediction, and the loss-curve / prediction exports.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{fit_normalization, pad_and_batch, split_dataset, NormalizationSpec, PaddedBatch, PouringSequence};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{init_params, network_backward, network_forward, Mode, NetworkConfig, NetworkParams};
use crate::optim::{adam_step, mse_loss, AdamState};
use crate::par::Exec;

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Average the loss over real steps only. When off, padded steps count as
    /// zero-valued targets.
    pub masked_loss: bool,
    /// Return the parameters of the epoch with the lowest validation loss
    /// instead of the final epoch.
    pub keep_best_validation: bool,
}

impl TrainConfig {
    /// 150 epochs at lr 0.01, batches of 32, masked loss.
    pub fn new(network: NetworkConfig) -> Self {
        TrainConfig {
            network,
            epochs: 150,
            lr: 0.01,
            batch_size: 32,
            seed: 0,
            masked_loss: true,
            keep_best_validation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive (got {})", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Loss on the held-out internal test split, with the returned parameters.
    pub internal_test_loss: f64,
    /// Epoch whose parameters were returned (1-based).
    pub selected_epoch: usize,
    pub config: TrainConfig,
}

impl TrainReport {
    /// Per-epoch `(train, validation)` losses without timings.
    pub fn losses(&self) -> Vec<(f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.validation_loss)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub normalization: NormalizationSpec,
    pub report: TrainReport,
}

fn loss_mask(batch: &PaddedBatch, masked: bool) -> Matrix {
    if masked {
        batch.mask.clone()
    } else {
        Matrix::filled(batch.time_len(), batch.batch_size(), 1.0)
    }
}

/// Eval-mode loss over `seqs`, processed in chunks of `chunk` sequences.
/// Chunks may run concurrently; their sums are combined in order.
pub fn dataset_loss(
    params: &NetworkParams,
    config: &NetworkConfig,
    spec: &NormalizationSpec,
    seqs: &[PouringSequence],
    chunk: usize,
    masked: bool,
    exec: Exec,
) -> Result<f64> {
    if seqs.is_empty() {
        return Err(Error::invalid("cannot compute a loss over zero sequences"));
    }
    let chunks: Vec<&[PouringSequence]> = seqs.chunks(chunk.max(1)).collect();
    let parts = exec.map(&chunks, |c| -> Result<(f64, f64)> {
        let refs: Vec<&PouringSequence> = c.iter().collect();
        let batch = pad_and_batch(&refs, spec)?;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (pred, _) = network_forward(params, config, &batch, Mode::Eval, &mut unused)?;
        let mask = loss_mask(&batch, masked);
        let (loss, _) = mse_loss(&pred, &batch.targets, &mask)?;
        let weight: f64 = mask.as_slice().iter().sum();
        Ok((loss * weight, weight))
    });
    let (mut sum, mut weight) = (0.0, 0.0);
    for part in parts {
        let (s, w) = part?;
        sum += s;
        weight += w;
    }
    Ok(sum / weight)
}

/// Trains one network end to end: split, fit normalization on the training
/// part, then `epochs` passes of shuffled mini-batch Adam.
pub fn train(dataset: &[PouringSequence], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let split = split_dataset(dataset, config.seed)?;
    let net = &config.network;
    let spec = fit_normalization(&split.train, net.head)?;

    let mut params = init_params(net, config.seed)?;
    let mut adam = AdamState::new(&params, config.lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, NetworkParams)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut weight) = (0.0, 0.0);
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&PouringSequence> = idx.iter().map(|&i| &split.train[i]).collect();
            let batch = pad_and_batch(&refs, &spec)?;
            let (pred, cache) = network_forward(&params, net, &batch, Mode::Train, &mut dropout_rng)?;
            let mask = loss_mask(&batch, config.masked_loss);
            let (loss, d_pred) = mse_loss(&pred, &batch.targets, &mask)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let grads = network_backward(&params, net, &cache, &d_pred, &mask)?;
            adam_step(&mut adam, &mut params, &grads).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Diverged { epoch, loss: f64::NAN },
                other => other,
            })?;
            let w: f64 = mask.as_slice().iter().sum();
            sum += loss * w;
            weight += w;
        }
        let train_loss = sum / weight;
        let validation_loss = dataset_loss(
            &params,
            net,
            &spec,
            &split.validation,
            config.batch_size,
            config.masked_loss,
            Exec::default(),
        )?;
        for loss in [train_loss, validation_loss] {
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
        }
        if config.keep_best_validation && best.as_ref().is_none_or(|(v, _, _)| validation_loss < *v) {
            best = Some((validation_loss, epoch, params.clone()));
        }
        records.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            wall_time_secs: started.elapsed().as_secs_f64(),
        });
    }

    let (params, selected_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    let internal_test_loss =
        dataset_loss(&params, net, &spec, &split.test, config.batch_size, config.masked_loss, Exec::default())?;
    Ok(TrainOutcome {
        params,
        normalization: spec,
        report: TrainReport { epochs: records, internal_test_loss, selected_epoch, config: config.clone() },
    })
}

/// Eval-mode prediction for one sequence, denormalized to lbf.
pub fn predict(
    params: &NetworkParams,
    config: &NetworkConfig,
    spec: &NormalizationSpec,
    seq: &PouringSequence,
) -> Result<Vec<f64>> {
    let batch = pad_and_batch(&[seq], spec)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let (pred, _) = network_forward(params, config, &batch, Mode::Eval, &mut unused)?;
    Ok((0..seq.len()).map(|t| spec.denormalize_target(pred.get(t, 0))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePair {
    pub id: String,
    pub theta: Vec<f64>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

pub fn evaluate_model(
    params: &NetworkParams,
    config: &NetworkConfig,
    spec: &NormalizationSpec,
    testset: &[PouringSequence],
) -> Result<Vec<CurvePair>> {
    evaluate_model_with(params, config, spec, testset, Exec::default())
}

/// Predicts every test sequence (concurrently under [`Exec::Parallel`]) and
/// pairs it with its recorded weights.
pub fn evaluate_model_with(
    params: &NetworkParams,
    config: &NetworkConfig,
    spec: &NormalizationSpec,
    testset: &[PouringSequence],
    exec: Exec,
) -> Result<Vec<CurvePair>> {
    exec.map(testset, |seq| {
        Ok(CurvePair {
            id: seq.id.clone(),
            theta: seq.angles(),
            predicted: predict(params, config, spec, seq)?,
            actual: seq.weights(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Writes `epoch,train_loss,val_loss`, one row per epoch.
pub fn export_loss_curve(report: &TrainReport, path: impl AsRef<Path>) -> Result<()> {
    let out = path.as_ref();
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::csv(out, e))?;
    for e in &report.epochs {
        w.serialize(LossRow { epoch: e.epoch, train_loss: e.train_loss, val_loss: e.validation_loss })
            .map_err(|e| Error::csv(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

pub fn read_loss_curve(path: impl AsRef<Path>) -> Result<Vec<LossRow>> {
    let src = path.as_ref();
    let mut r = csv::Reader::from_path(src).map_err(|e| Error::csv(src, e))?;
    r.deserialize().collect::<std::result::Result<Vec<LossRow>, _>>().map_err(|e| Error::csv(src, e))
}

#[derive(Serialize)]
struct PredictionRow {
    t: usize,
    theta: f64,
    actual_f: f64,
    predicted_f: f64,
}

/// Writes `t,theta,actual_f,predicted_f` for one sequence.
pub fn export_predictions(pair: &CurvePair, path: impl AsRef<Path>) -> Result<()> {
    let out = path.as_ref();
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::csv(out, e))?;
    for t in 0..pair.actual.len() {
        w.serialize(PredictionRow {
            t,
            theta: pair.theta[t],
            actual_f: pair.actual[t],
            predicted_f: pair.predicted[t],
        })
        .map_err(|e| Error::csv(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}
