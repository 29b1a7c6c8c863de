//! A small model overfit to 50 samples must reproduce nearly all of their
//! targets under greedy decoding.

use symseq_core::{build_dataset, Task, TaskSpec};
use symseq_nn::{Checkpoint, ModelConfig};
use symseq_train::{encode_samples, evaluate, EvalOptions, LossRecord, Observer, TrainConfig, TrainError, Trainer};

#[derive(Default)]
struct Collect {
    logged: Vec<u64>,
    saved: Vec<u64>,
}

impl Observer for Collect {
    fn on_log(&mut self, r: &LossRecord) {
        self.logged.push(r.step);
    }

    fn on_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), TrainError> {
        self.saved.push(ck.step);
        Ok(())
    }
}

#[test]
fn overfit_model_reproduces_its_training_targets() {
    let mut spec = TaskSpec::preset(Task::ProdF7);
    spec.num_factors = 2;
    spec.sampler.max_total_degree = 1;
    let vocab = spec.vocabulary();
    let samples = build_dataset(&spec, 50, 8, 1).unwrap().samples;
    let pairs = encode_samples(&samples, &vocab).unwrap();

    let model = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 64,
        n_heads: 4,
        n_enc_layers: 2,
        n_dec_layers: 2,
        d_ffn: 256,
        dropout: 0.0,
        max_len: 64,
        pad_id: 0,
    };
    let cfg = TrainConfig {
        batch_size: 25,
        total_steps: 600,
        base_lr: 2e-3,
        dropout: 0.0,
        log_every: 100,
        checkpoint_every: 250,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, cfg, &vocab.hash()).unwrap();
    let mut obs = Collect::default();
    let log = trainer.run(&pairs, &mut obs).unwrap();
    assert_eq!(obs.logged, [100, 200, 300, 400, 500, 600]);
    assert_eq!(obs.saved, [250, 500, 600]);
    assert!(log.last().unwrap().loss < log.records[0].loss);

    let report = evaluate(trainer.model(), &vocab, spec.ring(), &samples, &EvalOptions::default()).unwrap();
    assert!(report.n_exact >= 45, "{} of 50 reproduced", report.n_exact);
}
