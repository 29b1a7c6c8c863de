//! Greedy decoding over a test set and the two success rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use symseq_core::tokenizer::{BOS, EOS, PAD};
use symseq_core::{decode, Expression, Instance, Ring, Vocabulary};
use symseq_nn::{greedy_decode, Checkpoint, TokenBatch, Transformer};

use crate::batch::encode_samples;
use crate::error::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Token-identical to the reference.
    Exact,
    /// Different tokens, mathematically equal expressions.
    Symbolic,
    Wrong,
    /// Not decodable into expressions.
    Malformed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub input: String,
    pub gold: String,
    pub prediction: String,
    pub verdict: Verdict,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_total: usize,
    pub n_exact: usize,
    pub n_symbolic: usize,
    pub n_malformed: usize,
    pub n_truncated: usize,
    pub success_rate_exact: f64,
    pub success_rate_symbolic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<SampleRecord>>,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub workers: usize,
    pub per_sample: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            batch_size: 64,
            workers: 1,
            per_sample: false,
        }
    }
}

/// Same length and entrywise equal after canonicalization.
pub fn symbolic_match(pred: &[Expression], gold: &[Expression]) -> bool {
    pred.len() == gold.len() && pred.iter().zip(gold).all(|(p, g)| p == g)
}

/// `parsed` is the prediction decoded into expressions, if it decodes.
pub fn classify(pred_ids: &[u32], gold_ids: &[u32], parsed: Option<&[Expression]>, gold: &[Expression]) -> Verdict {
    if pred_ids == gold_ids {
        return Verdict::Exact;
    }
    match parsed {
        Some(p) if symbolic_match(p, gold) => Verdict::Symbolic,
        Some(_) => Verdict::Wrong,
        None => Verdict::Malformed,
    }
}

/// Decode budget for a reference of `gold_len` tokens.
pub fn max_out_len(gold_len: usize, model_max_len: usize) -> usize {
    (2 * gold_len + 16).min(model_max_len)
}

fn join(exprs: &[Expression]) -> String {
    exprs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" | ")
}

/// Scores `model` on `samples` with greedy decoding. Rows are decoded in
/// fixed-size batches, so the report does not depend on `workers`.
pub fn evaluate(
    model: &Transformer<f32>,
    vocab: &Vocabulary,
    ring: Ring,
    samples: &[Instance],
    opts: &EvalOptions,
) -> Result<EvalReport, TrainError> {
    let pairs = encode_samples(samples, vocab)?;
    let max_len = model.config().max_len;
    let chunks: Vec<Vec<usize>> = (0..pairs.len())
        .collect::<Vec<_>>()
        .chunks(opts.batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let decoded: Vec<Vec<(Vec<u32>, bool)>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|idx| {
                let xs: Vec<Vec<u32>> = idx.iter().map(|&i| pairs[i].x.clone()).collect();
                let budget = idx
                    .iter()
                    .map(|&i| max_out_len(pairs[i].y.len(), max_len))
                    .max()
                    .unwrap_or(1);
                let out = greedy_decode(model, &TokenBatch::from_rows(&xs, PAD), BOS, EOS, budget)?;
                Ok(idx
                    .iter()
                    .zip(out)
                    .map(|(&i, d)| {
                        // Rows share the largest budget; cut each back to
                        // what decoding it alone would have produced.
                        let cap = max_out_len(pairs[i].y.len(), max_len);
                        if d.ids.len() > cap {
                            let mut ids = d.ids[..cap].to_vec();
                            ids.push(EOS);
                            (ids, true)
                        } else {
                            (d.ids, d.truncated)
                        }
                    })
                    .collect())
            })
            .collect::<Result<_, TrainError>>()
    })?;

    let mut report = EvalReport {
        n_total: samples.len(),
        n_exact: 0,
        n_symbolic: 0,
        n_malformed: 0,
        n_truncated: 0,
        success_rate_exact: 0.0,
        success_rate_symbolic: 0.0,
        records: None,
    };
    let mut records = Vec::new();
    for (i, (ids, truncated)) in decoded.into_iter().flatten().enumerate() {
        let gold = &samples[i].output;
        let parsed = decode(&ids, vocab, ring);
        let verdict = classify(&ids, &pairs[i].y, parsed.as_ref().ok().map(Vec::as_slice), gold);
        report.n_exact += usize::from(verdict == Verdict::Exact);
        report.n_symbolic += usize::from(matches!(verdict, Verdict::Exact | Verdict::Symbolic));
        report.n_malformed += usize::from(verdict == Verdict::Malformed);
        report.n_truncated += usize::from(truncated);
        if opts.per_sample {
            records.push(SampleRecord {
                index: i,
                input: join(&samples[i].input),
                gold: join(gold),
                prediction: match parsed {
                    Ok(p) => join(&p),
                    Err(_) => vocab.render(&ids),
                },
                verdict,
                truncated,
            });
        }
    }
    if report.n_total > 0 {
        report.success_rate_exact = report.n_exact as f64 / report.n_total as f64;
        report.success_rate_symbolic = report.n_symbolic as f64 / report.n_total as f64;
    }
    if opts.per_sample {
        report.records = Some(records);
    }
    Ok(report)
}

/// Checks the vocabulary hash before decoding anything.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    vocab: &Vocabulary,
    ring: Ring,
    samples: &[Instance],
    opts: &EvalOptions,
) -> Result<EvalReport, TrainError> {
    ckpt.check_vocab(&vocab.hash())?;
    let model = ckpt.model()?;
    evaluate(&model, vocab, ring, samples, opts)
}
