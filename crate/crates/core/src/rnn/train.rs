//! Mini-batch training with Adam and best-validation checkpointing.

use rand::seq::SliceRandom;

use super::batch::{draw_masks, loss_and_gradient};
use super::estimate::SampleCount;
use super::{GruParameters, RnnModel};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::trajectory::MeasurementRecord;

pub const LEARNING_RATE: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub dataset_size: usize,
    pub batch_size: usize,
    pub validation_size: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_sample: SampleCount,
    pub seed: u64,
}

/// `(M, batch, validation, N_h, dropout)` for the L = 8, p = 0.1 circuit.
const TABLE_P01: [(usize, usize, usize, usize, f64); 14] = [
    (15000, 1000, 3000, 20, 0.2),
    (12000, 1000, 2000, 18, 0.2),
    (10000, 1000, 2000, 14, 0.1),
    (9000, 1000, 2000, 13, 0.1),
    (8000, 1000, 1000, 12, 0.2),
    (7000, 1000, 1000, 12, 0.2),
    (6000, 1000, 1000, 12, 0.2),
    (5000, 1000, 1000, 12, 0.35),
    (4000, 1000, 1000, 12, 0.6),
    (3000, 600, 600, 10, 0.5),
    (2000, 400, 400, 9, 0.5),
    (1000, 200, 200, 7, 0.6),
    (500, 100, 100, 5, 0.6),
    (100, 20, 20, 3, 0.6),
];

/// `(M, batch, validation, N_h, dropout, epochs, N_sample)` for the
/// L = 8, p = 0.2 circuit.
const TABLE_P02: [(usize, usize, usize, usize, f64, usize, usize); 7] = [
    (12000, 1000, 2000, 19, 0.1, 40000, 20000),
    (10000, 1000, 2000, 18, 0.1, 40000, 20000),
    (7000, 1000, 1000, 18, 0.2, 40000, 50000),
    (5000, 1000, 1000, 17, 0.2, 40000, 20000),
    (3000, 600, 600, 14, 0.2, 40000, 50000),
    (1000, 200, 200, 12, 0.4, 60000, 50000),
    (200, 40, 40, 6, 0.5, 60000, 50000),
];

impl TrainingConfig {
    /// Published hyperparameters for the p = 0.1 study (60000 epochs,
    /// exact enumeration for χ).
    pub fn table_p01(m: usize) -> Option<Self> {
        TABLE_P01.iter().find(|row| row.0 == m).map(|&(m, b, v, h, d)| Self {
            dataset_size: m,
            batch_size: b,
            validation_size: v,
            hidden: h,
            dropout: d,
            epochs: 60000,
            learning_rate: LEARNING_RATE,
            n_sample: SampleCount::Exact,
            seed: 0,
        })
    }

    /// Published hyperparameters for the p = 0.2 study.
    pub fn table_p02(m: usize) -> Option<Self> {
        TABLE_P02.iter().find(|row| row.0 == m).map(|&(m, b, v, h, d, e, s)| Self {
            dataset_size: m,
            batch_size: b,
            validation_size: v,
            hidden: h,
            dropout: d,
            epochs: e,
            learning_rate: LEARNING_RATE,
            n_sample: SampleCount::Finite(s),
            seed: 0,
        })
    }

    pub fn p01_sizes() -> impl Iterator<Item = usize> {
        TABLE_P01.iter().map(|r| r.0)
    }

    pub fn p02_sizes() -> impl Iterator<Item = usize> {
        TABLE_P02.iter().map(|r| r.0)
    }

    pub fn training_size(&self) -> usize {
        self.dataset_size - self.validation_size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.hidden == 0 || self.batch_size == 0 || self.validation_size == 0 || self.epochs == 0 {
            return bad("hidden size, batch size, validation size and epochs must be positive".into());
        }
        if self.dataset_size < self.batch_size + self.validation_size {
            return bad(format!(
                "dataset of {} cannot hold a batch of {} plus {} validation records",
                self.dataset_size, self.batch_size, self.validation_size
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}

/// Per-epoch losses, each the negative log-likelihood averaged over records
/// and measurement sites. Training loss is the record-weighted mean of the
/// batch losses seen during the epoch (dropout active); validation loss is
/// evaluated after the epoch in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: RnnModel,
    pub report: LossReport,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        }
    }
}

fn validation_loss(params: &GruParameters, records: &[MeasurementRecord], len: usize) -> f64 {
    let total: f64 = super::batch::log_probs(params, records, len).iter().sum();
    -total / (records.len() * len.max(1)) as f64
}

/// Trains on the first `config.dataset_size` records. The validation split
/// is a seeded permutation; batches are reshuffled every epoch.
pub fn train(records: &[MeasurementRecord], config: &TrainingConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    if records.len() < config.dataset_size {
        return Err(Error::InvalidInput(format!(
            "{} records supplied, configuration needs {}",
            records.len(),
            config.dataset_size
        )));
    }
    let records = &records[..config.dataset_size];
    let len = records[0].len();
    if let Some(bad) = records.iter().find(|r| r.len() != len) {
        return Err(Error::RecordLength { expected: len, got: bad.len() });
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut stream_rng(config.seed, Stream::Shuffle, 0));
    let validation: Vec<MeasurementRecord> =
        order[..config.validation_size].iter().map(|&i| records[i].clone()).collect();
    let mut training: Vec<&MeasurementRecord> =
        order[config.validation_size..].iter().map(|&i| &records[i]).collect();

    let mut params = GruParameters::uniform(config.hidden, config.seed);
    let mut grad = vec![0.0; params.as_slice().len()];
    let mut adam = Adam::new(grad.len(), config.learning_rate);
    let mut report = LossReport {
        train: Vec::with_capacity(config.epochs),
        validation: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best = (f64::INFINITY, params.clone());

    for epoch in 0..config.epochs {
        let index = epoch as u64 + 1;
        training.shuffle(&mut stream_rng(config.seed, Stream::Shuffle, index));
        let mut mask_rng = stream_rng(config.seed, Stream::Dropout, index);
        let mut epoch_loss = 0.0;
        for chunk in training.chunks(config.batch_size) {
            let masks = (config.dropout > 0.0)
                .then(|| draw_masks(&mut mask_rng, chunk.len(), config.hidden, len, config.dropout));
            let loss = loss_and_gradient(&params, chunk, masks.as_deref(), &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.update(params.as_mut_slice(), &grad);
        }
        let val = validation_loss(&params, &validation, len);
        if !val.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("validation loss {val}"),
            });
        }
        report.train.push(epoch_loss / training.len() as f64);
        report.validation.push(val);
        if val < best.0 {
            best = (val, params.clone());
            report.best_epoch = epoch;
        }
    }

    Ok(TrainingOutcome {
        model: RnnModel::new(best.1, config.dropout, len)?,
        report,
    })
}
