//! Initialization, optimization, scheduling, checkpoints and the epoch
//! loop.

mod checkpoint;
mod optim;
mod schedule;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{make_batches, DataError, Preprocess, ProtocolError, TrialSet, UnionSource, WaveSource};
use crate::metrics::{compute_eer_records, score_logits, MetricError, ScoreRecord};
use crate::model::{ModelParams, RwResnet};
use crate::nn::Module;
use crate::ops::{cross_entropy_logits, Mode};
use crate::tensor::TensorError;

pub use checkpoint::{
    atomic_write, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError,
    MAGIC, VERSION,
};
pub use optim::{adam_update, init_params, Adam, AdamConfig};
pub use schedule::{CyclePos, ScheduleConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("empty training set")]
    EmptyTrainingSet,
}

/// A trial list and where its audio lives.
#[derive(Clone, Copy)]
pub struct DataSplit<'a> {
    pub set: &'a TrialSet,
    pub source: &'a dyn WaveSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub adam: AdamConfig,
    /// Random windows instead of the head for long training signals.
    pub random_crop: bool,
    /// Keep the development set out of training and pick the epoch with
    /// the lowest development EER.
    pub select_by_dev: bool,
    /// Per-epoch checkpoints, `best.ckpt` and `history.csv` go here.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            seed: 0,
            schedule: ScheduleConfig::default(),
            adam: AdamConfig::default(),
            random_crop: false,
            select_by_dev: false,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub lr: f64,
    pub dev_eer: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean loss of the freshly initialized model over the training data.
    pub initial_loss: f64,
    pub best: ModelParams<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// `epoch,mean_loss,accuracy,lr` rows.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss,accuracy,lr\n");
    for h in history {
        writeln!(out, "{},{:.9},{:.6},{:e}", h.epoch, h.mean_loss, h.accuracy, h.lr).expect("writing to a String");
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    atomic_write(path, bytes).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Eval-mode scores for every trial, in protocol order.
pub fn score_trials(
    model: &mut RwResnet<f32>,
    split: DataSplit<'_>,
    batch_size: usize,
) -> Result<Vec<ScoreRecord>, TrainError> {
    let prep = Preprocess {
        length: model.config().frontend.input_len,
        crop_seed: None,
    };
    let mut out = Vec::with_capacity(split.set.len());
    for batch in make_batches(split.set, split.source, batch_size, None, prep)? {
        let batch = batch?;
        let logits = model.forward(batch.waves, Mode::Eval)?;
        for (&i, score) in batch.trial_indices.iter().zip(score_logits(&logits.values)) {
            let t = &split.set.trials[i];
            out.push(ScoreRecord {
                utt_id: t.utt_id.clone(),
                score,
                label: Some(t.label),
            });
        }
    }
    Ok(out)
}

/// Mean cross-entropy over a split with batch statistics, without any
/// parameter update.
fn mean_loss(model: &mut RwResnet<f32>, split: DataSplit<'_>, batch_size: usize) -> Result<f64, TrainError> {
    let prep = Preprocess {
        length: model.config().frontend.input_len,
        crop_seed: None,
    };
    let (mut sum, mut n) = (0.0, 0usize);
    for batch in make_batches(split.set, split.source, batch_size, None, prep)? {
        let batch = batch?;
        let logits = model.forward(batch.waves, Mode::Train)?;
        let (loss, _) = cross_entropy_logits(&logits.values, &batch.labels)?;
        sum += f64::from(loss) * batch.labels.len() as f64;
        n += batch.labels.len();
    }
    Ok(sum / n as f64)
}

/// Initializes `model` from `cfg.seed` and trains it with Adam under the
/// warm-restart schedule. Without `select_by_dev` the development split
/// is pooled with the training split and the best epoch is the one with
/// the lowest mean training loss.
pub fn train(
    model: &mut RwResnet<f32>,
    train_split: DataSplit<'_>,
    dev_split: Option<DataSplit<'_>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    init_params(model, cfg.seed);
    let mut opt = Adam::new(model, cfg.adam);

    let pooled;
    let union;
    let fit: DataSplit<'_> = match dev_split {
        Some(dev) if !cfg.select_by_dev => {
            pooled = train_split.set.union(dev.set)?;
            union = UnionSource::new(&[(train_split.set, train_split.source), (dev.set, dev.source)]);
            DataSplit {
                set: &pooled,
                source: &union,
            }
        }
        _ => train_split,
    };
    if fit.set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let length = model.config().frontend.input_len;
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let initial_loss = mean_loss(&mut model.clone(), fit, cfg.batch_size)?;
    log::info!("initial loss {initial_loss:.6}");

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch as f64);
        let shuffle_seed = order_rng.next_u64();
        let crop_seed = order_rng.next_u64();
        let prep = Preprocess {
            length,
            crop_seed: cfg.random_crop.then_some(crop_seed),
        };
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for (b, batch) in make_batches(fit.set, fit.source, cfg.batch_size, Some(shuffle_seed), prep)?.enumerate() {
            let batch = batch?;
            model.zero_grad();
            let logits = model.forward(batch.waves, Mode::Train)?;
            let (loss, d_logits) = cross_entropy_logits(&logits.values, &batch.labels)?;
            let loss = f64::from(loss);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, loss });
            }
            model.backward(d_logits)?;
            opt.step(model, lr);
            let n = batch.labels.len();
            loss_sum += loss * n as f64;
            seen += n;
            correct += logits
                .values
                .data()
                .chunks_exact(2)
                .zip(&batch.labels)
                .filter(|(row, &label)| usize::from(row[1] > row[0]) == label)
                .count();
        }
        let dev_eer = match dev_split {
            Some(dev) if cfg.select_by_dev => {
                let scores = score_trials(model, dev, cfg.batch_size)?;
                Some(compute_eer_records(&scores)?.value)
            }
            _ => None,
        };
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            accuracy: correct as f64 / seen as f64,
            lr,
            dev_eer,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} acc {:.4} lr {:.3e}{}",
            stats.mean_loss,
            stats.accuracy,
            lr,
            dev_eer.map(|e| format!(" dev_eer {:.4}", e)).unwrap_or_default()
        );
        history.push(stats);
        let snap = model.snapshot();
        let key = dev_eer.unwrap_or(stats.mean_loss);
        let improved = best.as_ref().is_none_or(|(k, _, _)| key < *k);
        if let Some(dir) = &cfg.checkpoint_dir {
            save_checkpoint(&snap, &dir.join(format!("epoch_{epoch:03}.ckpt")))?;
            if improved {
                save_checkpoint(&snap, &dir.join("best.ckpt"))?;
            }
            write_file(&dir.join("history.csv"), history_csv(&history).as_bytes())?;
        }
        if improved {
            best = Some((key, epoch, snap));
        }
    }
    let (_, best_epoch, best) = best.ok_or(TrainError::EmptyTrainingSet)?;
    Ok(TrainOutcome {
        initial_loss,
        best,
        best_epoch,
        history,
    })
}
