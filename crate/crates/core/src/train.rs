//! Mini-batch Adam training with validation-based model selection.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{FeedbackModel, PlaneSet};
use crate::nn::{adam_step, save_checkpoint, AdamState, Checkpoint, Mode, ParamSet, Tape};
use crate::rng::{domain, KeyedRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Write `last.cocw` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Validate every this many epochs; the final epoch is always validated.
    pub early_report: usize,
    /// Record zero wall-clock time so logs are reproducible byte for byte.
    pub deterministic: bool,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 200,
            lr: 1e-3,
            epochs: 200,
            seed: 1,
            checkpoint_every: 0,
            early_report: 1,
            deterministic: false,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if self.early_report == 0 {
            return Err(Error::invalid("early_report must be at least 1"));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::invalid("checkpoint_every needs a checkpoint directory"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, if any validation ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl TrainLog {
    /// CSV with columns `epoch,train_loss,val_loss,seconds`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        if self.records.is_empty() {
            out.write_record(["epoch", "train_loss", "val_loss", "seconds"])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.val_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainLog,
    /// Parameters after the last epoch; the model itself holds the best ones.
    pub final_params: ParamSet,
    pub optimizer: AdamState,
}

/// Mean loss over `data` in infer mode, evaluated in one pass.
pub fn evaluate_loss<M: FeedbackModel>(model: &M, data: &PlaneSet) -> Result<f64> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut tape = Tape::new();
    let mut unused = KeyedRng::new(0).stream();
    let loss = model.loss(&mut tape, data, &rows, Mode::Infer, &mut unused)?;
    Ok(tape.value(loss).data()[0])
}

fn write_checkpoint_file<M: FeedbackModel>(
    dir: &Path,
    name: &str,
    params: &ParamSet,
    model: &M,
    adam: Option<&AdamState>,
) -> Result<()> {
    let ck = Checkpoint::from_params(params, adam, Some(&model.topology().to_string()));
    save_checkpoint(&ck, dir.join(name))
}

/// Train `model` on `train`, selecting the parameters with the lowest
/// validation loss. An empty `val` keeps the final parameters.
pub fn train<M: FeedbackModel>(
    model: &mut M,
    train: &PlaneSet,
    val: &PlaneSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let adam = AdamState::new(cfg.lr).attach(model.params());
    train_from(model, train, val, cfg, adam)
}

/// Continue training with an existing optimizer state.
pub fn train_from<M: FeedbackModel>(
    model: &mut M,
    train: &PlaneSet,
    val: &PlaneSet,
    cfg: &TrainConfig,
    mut adam: AdamState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if train.len() < 2 {
        return Err(Error::invalid(
            "training needs at least 2 samples for batch normalization",
        ));
    }
    adam.lr = cfg.lr;
    let batch = cfg.batch_size.min(train.len());
    let n_batches = train.len() / batch;
    let root = KeyedRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<ParamSet> = None;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut root.stream_for(&[domain::SHUFFLE, epoch as u64]));
        let mut bit_rng = root.stream_for(&[domain::BITS, epoch as u64]);
        let mut total = 0.0;
        for b in 0..n_batches {
            let rows = &order[b * batch..(b + 1) * batch];
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, train, rows, Mode::Train, &mut bit_rng)?;
            total += tape.value(loss).data()[0];
            let grads = tape.backward(loss)?;
            let params = model.params_mut();
            tape.accumulate_param_grads(&grads, params)?;
            tape.commit_buffers(params);
            adam_step(params, &mut adam)?;
        }
        let validate = !val.is_empty() && (epoch % cfg.early_report == 0 || epoch == cfg.epochs);
        let val_loss = if validate {
            Some(evaluate_loss(model, val)?)
        } else {
            None
        };
        if let Some(v) = val_loss {
            if log.best_val_loss.is_none_or(|b| v < b) {
                log.best_val_loss = Some(v);
                log.best_epoch = Some(epoch);
                best = Some(model.params().clone());
            }
        }
        let seconds = if cfg.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss: total / n_batches as f64,
            val_loss,
            seconds,
        });
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                write_checkpoint_file(dir, "last.cocw", model.params(), model, Some(&adam))?;
            }
        }
        log::debug!(
            "epoch {epoch}: train {:.6} val {:?}",
            total / n_batches as f64,
            val_loss
        );
    }

    let final_params = model.params().clone();
    if let Some(b) = best {
        *model.params_mut() = b;
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        write_checkpoint_file(dir, "last.cocw", &final_params, model, Some(&adam))?;
        write_checkpoint_file(dir, "best.cocw", model.params(), model, None)?;
    }
    Ok(TrainOutcome {
        log,
        final_params,
        optimizer: adam,
    })
}

/// Continue training on the first `n_samples` of a shifted dataset. Zero
/// samples leaves the model untouched.
pub fn fine_tune<M: FeedbackModel>(
    model: &mut M,
    new_train: &PlaneSet,
    new_val: &PlaneSet,
    n_samples: usize,
    cfg: &TrainConfig,
) -> Result<Option<TrainOutcome>> {
    if n_samples > new_train.len() {
        return Err(Error::invalid(format!(
            "fine-tuning asks for {n_samples} samples, the new training split has {}",
            new_train.len()
        )));
    }
    if n_samples == 0 {
        return Ok(None);
    }
    let subset = new_train.take(n_samples)?;
    let cfg = TrainConfig {
        seed: KeyedRng::new(cfg.seed)
            .stream_for(&[domain::FINETUNE, n_samples as u64])
            .next_u64(),
        ..cfg.clone()
    };
    train(model, &subset, new_val, &cfg).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::BitMode;
    use crate::channel::{generate_dataset, ArrayGeometry, DatasetConfig, SplitKind};
    use crate::models::{MagnitudeArch, MagnitudeConfig, MagnitudeNet};

    fn toy() -> (PlaneSet, PlaneSet) {
        let ds = generate_dataset(&DatasetConfig {
            geometry: ArrayGeometry::new(8, 1),
            n_groups: 286,
            ..DatasetConfig::default()
        })
        .unwrap();
        (
            PlaneSet::from_dataset(&ds, SplitKind::Train),
            PlaneSet::from_dataset(&ds, SplitKind::Val),
        )
    }

    fn net(seed: u64) -> MagnitudeNet {
        MagnitudeNet::build(
            MagnitudeConfig {
                n_rx: 1,
                n_tx: 8,
                users: 2,
                feedback_bits: 8,
                bit_mode: BitMode::quantize(4).unwrap(),
                arch: MagnitudeArch::CoCsiNet,
                lstm_refine: false,
                tied: false,
            },
            seed,
        )
        .unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 50,
            lr: 1e-3,
            epochs,
            seed: 9,
            deterministic: true,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_reduces_loss() {
        let (tr, va) = toy();
        assert_eq!(tr.len(), 200);
        let mut m = net(1);
        let out = train(&mut m, &tr, &va, &cfg(50)).unwrap();
        let recs = &out.log.records;
        assert_eq!(recs.len(), 50);
        assert!(recs[49].train_loss < recs[0].train_loss);
        assert!(out.log.best_val_loss.unwrap() <= recs[49].val_loss.unwrap());
        assert!(recs.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
    }

    #[test]
    fn identical_runs_give_identical_logs() {
        let (tr, va) = toy();
        let (mut a, mut b) = (net(2), net(2));
        let la = train(&mut a, &tr, &va, &cfg(5)).unwrap();
        let lb = train(&mut b, &tr, &va, &cfg(5)).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        la.log.write_csv(&mut ca).unwrap();
        lb.log.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.params, b.params);
        assert!(String::from_utf8(ca)
            .unwrap()
            .starts_with("epoch,train_loss,val_loss,seconds\n"));
    }

    #[test]
    fn zero_learning_rate_leaves_trainable_params() {
        let (tr, va) = toy();
        let mut m = net(3);
        let before = m.params.clone();
        let out = train(&mut m, &tr, &va, &TrainConfig { lr: 0.0, ..cfg(3) }).unwrap();
        for id in before.trainable_ids() {
            assert_eq!(before.value(id), out.final_params.value(id));
        }
    }

    #[test]
    fn training_does_not_touch_data() {
        let (tr, va) = toy();
        let copy = tr.clone();
        train(&mut net(4), &tr, &va, &cfg(2)).unwrap();
        assert_eq!(tr, copy);
    }

    #[test]
    fn config_constraints() {
        assert!(TrainConfig {
            batch_size: 1,
            ..cfg(1)
        }
        .validate()
        .is_err());
        assert!(TrainConfig { lr: -1.0, ..cfg(1) }.validate().is_err());
        assert!(TrainConfig { lr: f64::NAN, ..cfg(1) }.validate().is_err());
        assert!(TrainConfig {
            checkpoint_every: 2,
            ..cfg(1)
        }
        .validate()
        .is_err());
        let (tr, va) = toy();
        let empty = tr.take(0).unwrap();
        assert!(matches!(
            train(&mut net(1), &empty, &va, &cfg(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn fine_tune_zero_samples_is_noop() {
        let (tr, va) = toy();
        let mut m = net(5);
        let before = m.params.clone();
        assert!(fine_tune(&mut m, &tr, &va, 0, &cfg(2)).unwrap().is_none());
        assert_eq!(m.params, before);
        assert!(fine_tune(&mut m, &tr, &va, 10_000, &cfg(2)).is_err());
        assert!(fine_tune(&mut m, &tr, &va, 100, &cfg(2)).unwrap().is_some());
        assert_ne!(m.params, before);
    }

    #[test]
    fn checkpoints_are_written() {
        let (tr, va) = toy();
        let dir = tempfile::tempdir().unwrap();
        let c = TrainConfig {
            checkpoint_every: 1,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..cfg(2)
        };
        let mut m = net(6);
        train(&mut m, &tr, &va, &c).unwrap();
        let best = crate::nn::load_checkpoint(dir.path().join("best.cocw")).unwrap();
        let last = crate::nn::load_checkpoint(dir.path().join("last.cocw")).unwrap();
        assert!(best.topology().unwrap().starts_with("magnitude"));
        assert!(last.get("adam.step").is_some());
        let rebuilt = crate::models::AnyModel::from_checkpoint(&best).unwrap();
        assert_eq!(rebuilt.param_count(), m.param_count());
    }
}
