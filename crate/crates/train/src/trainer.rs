//! The optimization loop.
//!
//! Update `s` (zero-based) uses batch `s mod B` of epoch `s / B`, where `B`
//! is the number of batches per epoch, learning rate
//! `lr_schedule(s, total_steps, base_lr)` and a dropout stream keyed by
//! `(seed, s)`. All three depend only on the step number, so a run resumed
//! from a checkpoint continues exactly as an uninterrupted one would.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use symseq_core::rng::stream;
use symseq_core::tokenizer::PAD;
use symseq_nn::{lr_schedule, AdamState, AdamW, Checkpoint, ModelConfig, Tape, Transformer};

use crate::batch::{batches_per_epoch, check_lengths, make_batches, Batch, EncodedPair};
use crate::error::TrainError;
use crate::log::{LossLog, LossRecord};

pub const DROPOUT_DOMAIN: &str = "symseq/dropout/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Save every this many steps; `0` saves only at the end.
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub dropout: f64,
    /// Number of training samples scored after training; `0` skips it.
    pub eval_subset_size: usize,
    /// Global gradient-norm cap; off when `None`.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            total_steps: 80_000,
            base_lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
            checkpoint_every: 0,
            log_every: 50,
            dropout: 0.1,
            eval_subset_size: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 || self.weight_decay < 0.0 {
            return bad("eps must be positive and weight_decay non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamW {
        AdamW {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Callbacks fired during [`Trainer::run`].
pub trait Observer {
    fn on_log(&mut self, _record: &LossRecord) {}

    fn on_checkpoint(&mut self, _ckpt: &Checkpoint) -> Result<(), TrainError> {
        Ok(())
    }
}

impl Observer for () {}

pub struct Trainer {
    model: Transformer<f32>,
    state: AdamState<f32>,
    cfg: TrainConfig,
    step: u64,
    vocab_hash: String,
    epoch_cache: Option<(u64, Vec<Batch>)>,
}

impl Trainer {
    /// Fresh model initialized from `cfg.seed`; the model's dropout rate is
    /// taken from `cfg`.
    pub fn new(mut model_cfg: ModelConfig, cfg: TrainConfig, vocab_hash: &str) -> Result<Self, TrainError> {
        cfg.validate()?;
        model_cfg.dropout = cfg.dropout;
        let model = Transformer::init(model_cfg, cfg.seed)?;
        let state = AdamState::new(model.params());
        Ok(Trainer {
            model,
            state,
            cfg,
            step: 0,
            vocab_hash: vocab_hash.to_string(),
            epoch_cache: None,
        })
    }

    /// Continues from a checkpoint that carries optimizer state.
    pub fn resume(ckpt: Checkpoint, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        if ckpt.step > cfg.total_steps {
            return Err(TrainError::Resume {
                found: ckpt.step,
                total: cfg.total_steps,
            });
        }
        let model = ckpt.model()?;
        let (_, state) = ckpt
            .optimizer
            .ok_or_else(|| TrainError::Config("checkpoint has no optimizer state".into()))?;
        if state.t != ckpt.step {
            return Err(TrainError::Config(format!(
                "optimizer has {} updates but checkpoint is at step {}",
                state.t, ckpt.step
            )));
        }
        Ok(Trainer {
            model,
            state,
            cfg,
            step: ckpt.step,
            vocab_hash: ckpt.vocab_hash,
            epoch_cache: None,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn model(&self) -> &Transformer<f32> {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config().clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            params: self.model.params().clone(),
            optimizer: Some((self.cfg.adamw(), self.state.clone())),
            meta: serde_json::json!({ "train": self.cfg }),
        }
    }

    fn preflight(&self, pairs: &[EncodedPair]) -> Result<(), TrainError> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let vocab = self.model.config().vocab_size as u32;
        for (i, p) in pairs.iter().enumerate() {
            if p.x.iter().chain(&p.y).any(|&t| t >= vocab) || p.y.len() < 2 {
                return Err(TrainError::Config(format!(
                    "sample {i} does not fit a vocabulary of {vocab} tokens"
                )));
            }
        }
        check_lengths(pairs, self.model.config().max_len)
    }

    fn batch(&mut self, pairs: &[EncodedPair], step: u64) -> Result<Batch, TrainError> {
        let per_epoch = batches_per_epoch(pairs.len(), self.cfg.batch_size) as u64;
        let epoch = step / per_epoch;
        if self.epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let batches = make_batches(
                pairs,
                self.cfg.batch_size,
                self.cfg.seed,
                epoch,
                self.model.config().max_len,
            )?;
            self.epoch_cache = Some((epoch, batches));
        }
        let (_, batches) = self.epoch_cache.as_ref().unwrap();
        Ok(batches[(step % per_epoch) as usize].clone())
    }

    /// One optimizer update on `batch`. Returns the batch loss and the
    /// learning rate used.
    pub fn update(&mut self, batch: &Batch) -> Result<(f64, f64), TrainError> {
        let lr = lr_schedule(self.step, self.cfg.total_steps, self.cfg.base_lr);
        let params = self.model.params();
        let mut tape = if self.cfg.dropout > 0.0 {
            Tape::training(
                params,
                self.cfg.dropout,
                stream(DROPOUT_DOMAIN, self.cfg.seed, self.step),
            )
        } else {
            Tape::new(params)
        };
        let logits = self.model.forward(&mut tape, &batch.x, &batch.y_in)?;
        let loss = tape.cross_entropy(logits, &batch.y_out, PAD)?;
        let value = f64::from(tape.value(loss).data()[0]);
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { step: self.step + 1 });
        }
        let mut grads = tape.backward(loss)?;
        drop(tape);
        if let Some(c) = self.cfg.clip_norm {
            grads.clip_global_norm(c);
        }
        self.cfg
            .adamw()
            .step(self.model.params_mut(), &grads, &mut self.state, lr)?;
        self.step += 1;
        Ok((value, lr))
    }

    /// Trains until `total_steps`, logging every `log_every` updates and
    /// handing checkpoints to `obs`. On a non-finite loss the run stops with
    /// an error and nothing past the last checkpoint is emitted.
    pub fn run(&mut self, pairs: &[EncodedPair], obs: &mut dyn Observer) -> Result<LossLog, TrainError> {
        self.run_until(pairs, self.cfg.total_steps, obs)
    }

    /// Like [`Trainer::run`] but stops after update `until` (≤ `total_steps`).
    pub fn run_until(
        &mut self,
        pairs: &[EncodedPair],
        until: u64,
        obs: &mut dyn Observer,
    ) -> Result<LossLog, TrainError> {
        self.preflight(pairs)?;
        let until = until.min(self.cfg.total_steps);
        let start = Instant::now();
        let mut log = LossLog::default();
        while self.step < until {
            let batch = self.batch(pairs, self.step)?;
            let (loss, lr) = self.update(&batch)?;
            if self.step.is_multiple_of(self.cfg.log_every) {
                let rec = LossRecord {
                    step: self.step,
                    lr,
                    loss,
                    seconds: start.elapsed().as_secs_f64(),
                };
                obs.on_log(&rec);
                log.push(rec);
            }
            let every = self.cfg.checkpoint_every;
            if every > 0 && self.step.is_multiple_of(every) && self.step != self.cfg.total_steps {
                obs.on_checkpoint(&self.checkpoint())?;
            }
        }
        if self.step == self.cfg.total_steps {
            obs.on_checkpoint(&self.checkpoint())?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pairs() -> Vec<EncodedPair> {
        // Copy task over tokens 6..10.
        (0..24)
            .map(|i| {
                let body: Vec<u32> = (0..3).map(|k| 6 + ((i + k * 7) % 4) as u32).collect();
                let seq: Vec<u32> = std::iter::once(1).chain(body).chain([2]).collect();
                EncodedPair { x: seq.clone(), y: seq }
            })
            .collect()
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 32,
            dropout: 0.0,
            max_len: 16,
            pad_id: 0,
        }
    }

    fn cfg(total: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 5,
            total_steps: total,
            base_lr: 3e-3,
            log_every: 3,
            dropout: 0.1,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[derive(Default)]
    struct Collect {
        logs: Vec<LossRecord>,
        ckpts: Vec<Checkpoint>,
    }

    impl Observer for Collect {
        fn on_log(&mut self, r: &LossRecord) {
            self.logs.push(*r);
        }

        fn on_checkpoint(&mut self, c: &Checkpoint) -> Result<(), TrainError> {
            self.ckpts.push(c.clone());
            Ok(())
        }
    }

    #[test]
    fn logging_and_checkpoint_cadence() {
        let mut c = cfg(10);
        c.checkpoint_every = 4;
        let mut t = Trainer::new(tiny(), c, "h").unwrap();
        let mut obs = Collect::default();
        let log = t.run(&toy_pairs(), &mut obs).unwrap();
        let steps: Vec<u64> = log.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![3, 6, 9]);
        assert_eq!(obs.ckpts.iter().map(|c| c.step).collect::<Vec<_>>(), vec![4, 8, 10]);
        assert!(log.records.iter().all(|r| r.loss.is_finite()));
        assert_eq!(log.records[0].lr, lr_schedule(2, 10, 3e-3));
    }

    #[test]
    fn no_records_before_first_log_step() {
        let mut t = Trainer::new(tiny(), cfg(10), "h").unwrap();
        let log = t.run_until(&toy_pairs(), 2, &mut ()).unwrap();
        assert!(log.records.is_empty());
        assert_eq!(t.step(), 2);
    }

    #[test]
    fn runs_are_reproducible() {
        let run = || {
            let mut t = Trainer::new(tiny(), cfg(12), "h").unwrap();
            let log = t.run(&toy_pairs(), &mut ()).unwrap();
            (
                log.records.iter().map(|r| (r.step, r.lr, r.loss)).collect::<Vec<_>>(),
                t.checkpoint().to_bytes(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let pairs = toy_pairs();
        let mut full = Trainer::new(tiny(), cfg(15), "h").unwrap();
        let full_log = full.run(&pairs, &mut ()).unwrap();

        let mut first = Trainer::new(tiny(), cfg(15), "h").unwrap();
        let mut log = first.run_until(&pairs, 7, &mut ()).unwrap();
        let bytes = first.checkpoint().to_bytes();
        let mut second = Trainer::resume(Checkpoint::from_bytes(&bytes).unwrap(), cfg(15)).unwrap();
        log.records.extend(second.run(&pairs, &mut ()).unwrap().records);

        assert_eq!(log.records.len(), full_log.records.len());
        for (a, b) in log.records.iter().zip(&full_log.records) {
            assert_eq!(a.step, b.step);
            assert!((a.loss - b.loss).abs() <= 1e-6);
        }
        assert_eq!(second.checkpoint().to_bytes(), full.checkpoint().to_bytes());
    }

    #[test]
    fn loss_decreases_on_a_learnable_task() {
        let mut c = cfg(150);
        c.dropout = 0.0;
        c.log_every = 1;
        let mut t = Trainer::new(tiny(), c, "h").unwrap();
        let log = t.run(&toy_pairs(), &mut ()).unwrap();
        let mean = |r: &[LossRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
        assert!(mean(&log.records[140..]) < 0.5 * mean(&log.records[..10]));
    }

    #[test]
    fn config_and_data_validation() {
        assert!(Trainer::new(
            tiny(),
            TrainConfig {
                batch_size: 0,
                ..cfg(3)
            },
            "h"
        )
        .is_err());
        assert!(Trainer::new(
            tiny(),
            TrainConfig {
                total_steps: 0,
                ..cfg(3)
            },
            "h"
        )
        .is_err());
        let mut t = Trainer::new(tiny(), cfg(3), "h").unwrap();
        assert!(matches!(t.run(&[], &mut ()), Err(TrainError::EmptyDataset)));
        let bad = vec![EncodedPair {
            x: vec![1, 12, 2],
            y: vec![1, 2],
        }];
        assert!(t.run(&bad, &mut ()).is_err());
        let long = vec![EncodedPair {
            x: vec![1; 20],
            y: vec![1, 2],
        }];
        assert!(matches!(
            t.run(&long, &mut ()),
            Err(TrainError::TooLong { index: 0, .. })
        ));
    }

    #[test]
    fn resume_rejects_checkpoints_without_optimizer() {
        let t = Trainer::new(tiny(), cfg(5), "h").unwrap();
        let mut ck = t.checkpoint();
        ck.optimizer = None;
        assert!(Trainer::resume(ck, cfg(5)).is_err());
        let ck = t.checkpoint();
        assert!(Trainer::resume(ck, cfg(5)).is_ok());
    }
}
