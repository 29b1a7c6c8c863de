use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;
use symseq_core::dataset::{meta_path, read_meta};
use symseq_core::{build_dataset, read_dataset, write_dataset, DatasetFile, Instance, Task, TaskSpec, Validation};
use symseq_nn::{Checkpoint, ModelConfig};
use symseq_train::log::format_row;
use symseq_train::{
    encode_samples, evaluate, evaluate_checkpoint, EvalOptions, EvalReport, LossLog, LossRecord, Observer, TrainConfig,
    TrainError, Trainer,
};

use crate::args::{EvalArgs, GenerateArgs, PlotArgs, Profile, TrainArgs};
use crate::config::{EvalConfig, GenerateConfig, TrainFileConfig};
use crate::manifest::{digests, manifest_path, write_atomic, RunManifest};
use crate::plot::{render, Series};

/// Bad or missing arguments discovered after parsing; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn load_dataset(path: &Path, task: Option<Task>) -> anyhow::Result<(TaskSpec, Vec<Instance>)> {
    let spec = match (read_meta(path)?, task) {
        (Some(meta), Some(t)) if meta.spec.task != t => {
            bail!("{} holds {} instances, not {}", path.display(), meta.spec.task, t)
        }
        (Some(meta), _) => meta.spec,
        (None, Some(t)) => TaskSpec::preset(t),
        (None, None) => bail!(
            "{} has no metadata sidecar; pass --task to say which task it holds",
            path.display()
        ),
    };
    let out = read_dataset(path, &spec, Validation::Lenient)?;
    if let Some(w) = out.warnings.first() {
        eprintln!(
            "warning: {} line(s) of {} fail the {} schema check (first: line {}: {})",
            out.warnings.len(),
            path.display(),
            spec.task,
            w.line,
            w.msg
        );
    }
    Ok((spec, out.dataset.samples))
}

pub fn generate(a: &GenerateArgs, c: &GenerateConfig) -> anyhow::Result<()> {
    let start = Instant::now();
    let task: Task = a
        .task
        .map(Task::from)
        .or(c.task)
        .ok_or_else(|| usage("--task is required"))?;
    let n = a.n.or(c.n).ok_or_else(|| usage("--n is required"))?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let workers = a.workers.or(c.workers).unwrap_or(1).max(1) as usize;

    let mut spec = TaskSpec::preset(task);
    if let Some(v) = a.factors.or(c.factors) {
        spec.num_factors = v as usize;
    }
    if let Some(v) = a.max_degree.or(c.max_degree) {
        spec.sampler.max_total_degree = v;
    }
    if let Some(v) = a.max_terms.or(c.max_terms) {
        spec.sampler.max_terms = v as usize;
    }
    if let Some(v) = a.num_vars.or(c.num_vars) {
        spec.sampler.num_vars = v as usize;
    }
    if let Some(v) = a.min_primes.or(c.min_primes) {
        spec.t_min = v as usize;
    }
    if let Some(v) = a.max_primes.or(c.max_primes) {
        spec.t_max = v as usize;
    }
    if let Some(v) = a.prime_bound.or(c.prime_bound) {
        spec.prime_bound = v;
    }
    if let Some(v) = a.max_seq_len.or(c.max_seq_len) {
        spec.max_seq_len = v as usize;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let ds = build_dataset(&spec, n as usize, seed, workers)?;
    write_dataset(&ds, &a.out)?;
    let rejected = ds.meta.as_ref().map_or(0, |m| m.rejected);
    println!(
        "wrote {} {} samples to {} ({} over-length draws rejected)",
        ds.samples.len(),
        task,
        a.out.display(),
        rejected
    );

    let sidecar = meta_path(&a.out);
    RunManifest {
        subcommand: "generate".into(),
        tool_version: VERSION.into(),
        config: serde_json::json!({ "spec": spec, "n": n, "workers": workers }),
        seeds: serde_json::json!({ "data": seed }),
        inputs: Vec::new(),
        outputs: digests(&[&a.out, &sidecar])?,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&manifest_path(&a.out))
}

#[derive(Debug, Serialize)]
struct TrainSettings {
    profile: String,
    model: ModelConfig,
    train: TrainConfig,
}

fn smoke_spec() -> TaskSpec {
    let mut spec = TaskSpec::preset(Task::ProdF7);
    spec.num_factors = 2;
    spec.sampler.max_total_degree = 1;
    spec
}

pub const SMOKE_SAMPLES: usize = 512;
pub const SMOKE_MAX_LOSS: f64 = 0.05;
pub const SMOKE_MIN_EXACT: f64 = 0.90;

fn resolve_train(a: &TrainArgs, c: &TrainFileConfig, vocab_size: usize) -> TrainSettings {
    let (mut model, mut train) = match a.profile {
        Profile::Default => (ModelConfig::base(vocab_size), TrainConfig::default()),
        Profile::Smoke => (
            ModelConfig {
                vocab_size,
                d_model: 64,
                n_heads: 4,
                n_enc_layers: 2,
                n_dec_layers: 2,
                d_ffn: 256,
                dropout: 0.0,
                max_len: 64,
                pad_id: 0,
            },
            TrainConfig {
                batch_size: 32,
                total_steps: 3000,
                base_lr: 2e-3,
                dropout: 0.0,
                log_every: 100,
                eval_subset_size: SMOKE_SAMPLES,
                ..TrainConfig::default()
            },
        ),
    };
    macro_rules! pick {
        ($flag:ident, $key:ident => $dst:expr) => {
            if let Some(v) = a.$flag.or(c.$key) {
                $dst = v;
            }
        };
    }
    pick!(steps, steps => train.total_steps);
    pick!(batch_size, batch_size => train.batch_size);
    pick!(lr, lr => train.base_lr);
    pick!(seed, seed => train.seed);
    pick!(weight_decay, weight_decay => train.weight_decay);
    pick!(dropout, dropout => train.dropout);
    pick!(log_every, log_every => train.log_every);
    pick!(checkpoint_every, checkpoint_every => train.checkpoint_every);
    pick!(eval_subset, eval_subset => train.eval_subset_size);
    pick!(d_model, d_model => model.d_model);
    pick!(heads, heads => model.n_heads);
    pick!(enc_layers, enc_layers => model.n_enc_layers);
    pick!(dec_layers, dec_layers => model.n_dec_layers);
    pick!(d_ffn, d_ffn => model.d_ffn);
    pick!(max_len, max_len => model.max_len);
    if let Some(v) = a.clip_norm.or(c.clip_norm) {
        train.clip_norm = Some(v);
    }
    model.dropout = train.dropout;
    TrainSettings {
        profile: format!("{:?}", a.profile).to_lowercase(),
        model,
        train,
    }
}

struct CliObserver {
    out_dir: PathBuf,
    csv: fs::File,
    total: u64,
}

impl Observer for CliObserver {
    fn on_log(&mut self, r: &LossRecord) {
        println!(
            "step {:>7}  lr {:.3e}  loss {:.5}  {:>8.1}s",
            r.step, r.lr, r.loss, r.seconds
        );
        let _ = writeln!(self.csv, "{}", format_row(r));
        let _ = self.csv.flush();
    }

    fn on_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), TrainError> {
        let name = if ck.step == self.total {
            "model.ckpt".to_string()
        } else {
            format!("step-{}.ckpt", ck.step)
        };
        ck.save(&self.out_dir.join(name))?;
        Ok(())
    }
}

pub fn train(a: &TrainArgs, c: &TrainFileConfig) -> anyhow::Result<()> {
    let start = Instant::now();
    if a.data.is_none() && a.profile != Profile::Smoke {
        return Err(usage("--data is required unless --profile smoke is given"));
    }
    let out = &a.out_dir;
    let ckpt_path = out.join("model.ckpt");
    let csv_path = out.join("loss.csv");
    let vocab_path = out.join("vocab.txt");
    let manifest = out.join("manifest.json");
    let eval_path = out.join("train-eval.json");
    if !a.force {
        for p in [&ckpt_path, &csv_path, &manifest] {
            if p.exists() {
                bail!("{} already exists; pass --force to overwrite", p.display());
            }
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // The smoke profile draws its own data from the training seed.
    let seed_hint = a.seed.or(c.seed).unwrap_or(0);
    let (data_path, spec, samples) = match &a.data {
        Some(p) => {
            let (spec, samples) = load_dataset(p, a.task.map(Task::from))?;
            (p.clone(), spec, samples)
        }
        None => {
            let spec = smoke_spec();
            let ds: DatasetFile = build_dataset(&spec, SMOKE_SAMPLES, seed_hint, 1)?;
            let p = out.join("smoke-data.txt");
            write_dataset(&ds, &p)?;
            (p, spec, ds.samples)
        }
    };
    let vocab = spec.vocabulary();
    let pairs = encode_samples(&samples, &vocab).context("dataset does not fit its task vocabulary")?;
    write_atomic(&vocab_path, vocab.to_text().as_bytes())?;

    let settings = resolve_train(a, c, vocab.len());
    let mut prior = LossLog::default();
    let (mut trainer, resume_input) = match &a.resume {
        Some(rp) => {
            let ck = Checkpoint::load(rp).with_context(|| format!("loading {}", rp.display()))?;
            ck.check_vocab(&vocab.hash())?;
            let prev_csv = rp.with_file_name("loss.csv");
            if let Ok(text) = fs::read_to_string(&prev_csv) {
                prior = LossLog::from_csv(&text).with_context(|| prev_csv.display().to_string())?;
                prior.truncate_after(ck.step);
            }
            println!("resuming from {} at step {}", rp.display(), ck.step);
            (Trainer::resume(ck, settings.train.clone())?, Some(rp.clone()))
        }
        None => (
            Trainer::new(settings.model.clone(), settings.train.clone(), &vocab.hash())?,
            None,
        ),
    };
    let model_cfg = trainer.model().config().clone();
    println!(
        "training {} on {} samples: {} parameters, {} steps, batch {}",
        spec.task,
        pairs.len(),
        model_cfg.param_count(),
        settings.train.total_steps,
        settings.train.batch_size
    );

    let mut csv = fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    csv.write_all(prior.to_csv().as_bytes())?;
    let mut obs = CliObserver {
        out_dir: out.clone(),
        csv,
        total: settings.train.total_steps,
    };
    let log = trainer.run(&pairs, &mut obs)?;
    drop(obs);
    let final_loss = log.last().or(prior.last()).map(|r| r.loss);

    let mut outputs: Vec<&Path> = vec![&ckpt_path, &csv_path, &vocab_path];
    let mut report: Option<EvalReport> = None;
    if settings.train.eval_subset_size > 0 {
        let k = settings.train.eval_subset_size.min(samples.len());
        let r = evaluate(
            trainer.model(),
            &vocab,
            spec.ring(),
            &samples[..k],
            &EvalOptions::default(),
        )?;
        println!(
            "training-set match on {k} samples: exact {:.4}, symbolic {:.4}",
            r.success_rate_exact, r.success_rate_symbolic
        );
        write_atomic(&eval_path, &serde_json::to_vec_pretty(&r)?)?;
        outputs.push(&eval_path);
        report = Some(r);
    }

    let mut inputs: Vec<&Path> = vec![&data_path];
    if let Some(r) = &resume_input {
        inputs.push(r);
    }
    RunManifest {
        subcommand: "train".into(),
        tool_version: VERSION.into(),
        config: serde_json::json!({
            "settings": settings,
            "spec": spec,
            "data": data_path,
            "resume": resume_input,
        }),
        seeds: serde_json::json!({ "train": settings.train.seed, "smoke_data": a.data.is_none().then_some(seed_hint) }),
        inputs: digests(&inputs)?,
        outputs: digests(&outputs)?,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&manifest)?;

    if a.profile == Profile::Smoke {
        let loss = final_loss.unwrap_or(f64::INFINITY);
        let exact = report.map_or(0.0, |r| r.success_rate_exact);
        let ok = loss < SMOKE_MAX_LOSS && exact >= SMOKE_MIN_EXACT;
        println!(
            "smoke check {}: final loss {loss:.5} (< {SMOKE_MAX_LOSS}), exact match {exact:.4} (>= {SMOKE_MIN_EXACT})",
            if ok { "passed" } else { "FAILED" }
        );
        if !ok {
            bail!("smoke check failed");
        }
    }
    Ok(())
}

pub fn eval(a: &EvalArgs, c: &EvalConfig) -> anyhow::Result<()> {
    let start = Instant::now();
    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let (spec, mut samples) = load_dataset(&a.data, a.task.map(Task::from))?;
    if let Some(k) = a.limit.or(c.limit) {
        samples.truncate(k);
    }
    let opts = EvalOptions {
        batch_size: a
            .batch_size
            .or(c.batch_size)
            .unwrap_or(EvalOptions::default().batch_size)
            .max(1),
        workers: a.workers.or(c.workers).unwrap_or(1).max(1) as usize,
        per_sample: a.per_sample || c.per_sample.unwrap_or(false),
    };
    let vocab = spec.vocabulary();
    let report = evaluate_checkpoint(&ck, &vocab, spec.ring(), &samples, &opts)?;
    println!(
        "exact match:    {:.4} ({}/{})",
        report.success_rate_exact, report.n_exact, report.n_total
    );
    println!(
        "symbolic match: {:.4} ({}/{})",
        report.success_rate_symbolic, report.n_symbolic, report.n_total
    );
    println!("malformed: {}, truncated: {}", report.n_malformed, report.n_truncated);
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_atomic(&a.report, &json)?;

    RunManifest {
        subcommand: "eval".into(),
        tool_version: VERSION.into(),
        config: serde_json::json!({
            "checkpoint": a.ckpt,
            "data": a.data,
            "task": spec.task,
            "limit": a.limit.or(c.limit),
            "batch_size": opts.batch_size,
            "workers": opts.workers,
            "per_sample": opts.per_sample,
        }),
        seeds: serde_json::json!({}),
        inputs: digests(&[&a.ckpt, &a.data])?,
        outputs: digests(&[&a.report])?,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&manifest_path(&a.report))
}

pub fn plot(a: &PlotArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut series = Vec::new();
    for p in &a.logs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let log = LossLog::from_csv(&text).with_context(|| p.display().to_string())?;
        let label = p.with_extension("").display().to_string();
        series.push(Series::from_log(label, &log));
    }
    let title = a.title.clone().unwrap_or_else(|| "training loss".into());
    write_atomic(&a.out, render(&series, &title).as_bytes())?;
    println!("wrote {} curve(s) to {}", series.len(), a.out.display());
    let inputs: Vec<&Path> = a.logs.iter().map(PathBuf::as_path).collect();
    RunManifest {
        subcommand: "plot".into(),
        tool_version: VERSION.into(),
        config: serde_json::json!({ "logs": a.logs, "title": title }),
        seeds: serde_json::json!({}),
        inputs: digests(&inputs)?,
        outputs: digests(&[&a.out])?,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&manifest_path(&a.out))
}
