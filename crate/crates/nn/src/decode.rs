//! Greedy autoregressive generation.

use crate::error::NnError;
use crate::model::{TokenBatch, Transformer};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    /// Generated sequence starting with `bos` and ending with `eos`.
    pub ids: Vec<u32>,
    /// The length cap was hit and `eos` was appended by the decoder.
    pub truncated: bool,
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decodes every row of `x` from `(bos)`, appending the argmax of the
/// last-position logits until `eos`. A sequence that reaches `max_out_len`
/// tokens without `eos` gets one appended and is flagged as truncated.
/// `max_out_len` is capped at the model's `max_len`.
pub fn greedy_decode<F: Scalar>(
    model: &Transformer<F>,
    x: &TokenBatch,
    bos: u32,
    eos: u32,
    max_out_len: usize,
) -> Result<Vec<Decoded>, NnError> {
    let cfg = model.config();
    let cap = max_out_len.clamp(1, cfg.max_len);
    let vocab = cfg.vocab_size;
    let mut state = model.begin_decode(x)?;
    let mut seqs: Vec<Vec<u32>> = vec![vec![bos]; x.rows];
    let mut truncated = vec![false; x.rows];
    let mut active: Vec<usize> = (0..x.rows).collect();
    while !active.is_empty() {
        if seqs[active[0]].len() >= cap {
            for &r in &active {
                seqs[r].push(eos);
                truncated[r] = true;
            }
            break;
        }
        let last: Vec<u32> = active.iter().map(|&r| *seqs[r].last().unwrap()).collect();
        let logits = model.decode_step(&mut state, &active, &last)?;
        for (i, &r) in active.iter().enumerate() {
            seqs[r].push(argmax(&logits[i * vocab..(i + 1) * vocab]) as u32);
        }
        active.retain(|&r| *seqs[r].last().unwrap() != eos);
    }
    Ok(seqs
        .into_iter()
        .zip(truncated)
        .map(|(ids, truncated)| Decoded { ids, truncated })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            d_ffn: 32,
            dropout: 0.0,
            max_len: 12,
            pad_id: 0,
        }
    }

    fn bias_towards(model: &mut Transformer<f32>, token: usize) {
        let id = model.params().find("out.b").unwrap();
        model.params_mut().get_mut(id).data_mut()[token] = 100.0;
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64]), 0);
    }

    #[test]
    fn immediate_eos() {
        let mut m = Transformer::<f32>::init(cfg(), 1).unwrap();
        bias_towards(&mut m, 2);
        let x = TokenBatch::from_rows(&[vec![1, 5, 2], vec![1, 6, 7, 2]], 0);
        let out = greedy_decode(&m, &x, 1, 2, 10).unwrap();
        for d in out {
            assert_eq!(d.ids, vec![1, 2]);
            assert!(!d.truncated);
        }
    }

    #[test]
    fn never_ending_output_is_truncated() {
        let mut m = Transformer::<f32>::init(cfg(), 1).unwrap();
        bias_towards(&mut m, 7);
        let x = TokenBatch::from_rows(&[vec![1, 5, 2]], 0);
        let out = greedy_decode(&m, &x, 1, 2, 5).unwrap();
        assert_eq!(out[0].ids, vec![1, 7, 7, 7, 7, 2]);
        assert!(out[0].truncated);
        // The cap never exceeds the model's positional range.
        let out = greedy_decode(&m, &x, 1, 2, 1000).unwrap();
        assert_eq!(out[0].ids.len(), 13);
    }

    #[test]
    fn decoding_is_deterministic_and_batch_independent() {
        let m = Transformer::<f32>::init(cfg(), 3).unwrap();
        let rows = vec![vec![1, 5, 2], vec![1, 6, 7, 8, 2], vec![1, 9, 2]];
        let x = TokenBatch::from_rows(&rows, 0);
        let a = greedy_decode(&m, &x, 1, 2, 8).unwrap();
        let b = greedy_decode(&m, &x, 1, 2, 8).unwrap();
        assert_eq!(a, b);
        for (i, r) in rows.iter().enumerate() {
            let single = greedy_decode(&m, &TokenBatch::from_rows(std::slice::from_ref(r), 0), 1, 2, 8).unwrap();
            assert_eq!(single[0], a[i]);
        }
    }

    #[test]
    fn invalid_source_is_rejected() {
        let m = Transformer::<f32>::init(cfg(), 3).unwrap();
        let x = TokenBatch::from_rows(&[vec![1, 50, 2]], 0);
        assert!(greedy_decode(&m, &x, 1, 2, 8).is_err());
    }

    /// Reference: rerun the decoder over the whole prefix at every step.
    fn full_prefix_decode(m: &Transformer<f64>, x: &TokenBatch, cap: usize) -> Vec<Vec<u32>> {
        use crate::tape::Tape;
        let mut out = Vec::new();
        for r in 0..x.rows {
            let xr = TokenBatch::from_rows(&[x.row(r).to_vec()], 0);
            let mut seq = vec![1u32];
            while seq.len() < cap && *seq.last().unwrap() != 2 {
                let mut tape = Tape::new(m.params());
                let mem = m.encode(&mut tape, &xr);
                let y = TokenBatch::from_rows(&[seq.clone()], 0);
                let logits = m.decode(&mut tape, mem, &xr, &y);
                let v = m.config().vocab_size;
                let row = &tape.value(logits).data()[(seq.len() - 1) * v..seq.len() * v];
                seq.push(argmax(row) as u32);
            }
            if *seq.last().unwrap() != 2 {
                seq.push(2);
            }
            out.push(seq);
        }
        out
    }

    #[test]
    fn cached_decoding_matches_full_prefix_reruns() {
        for seed in 0..6 {
            let mut c = cfg();
            c.max_len = 10;
            let m = Transformer::<f64>::init(c, seed).unwrap();
            let rows = vec![vec![1, 5, 2], vec![1, 6, 7, 8, 2], vec![1, 9, 3, 0, 2]];
            let x = TokenBatch::from_rows(&rows, 0);
            let got: Vec<Vec<u32>> = greedy_decode(&m, &x, 1, 2, 10)
                .unwrap()
                .into_iter()
                .map(|d| d.ids)
                .collect();
            assert_eq!(got, full_prefix_decode(&m, &x, 10));
        }
    }

    #[test]
    fn step_logits_match_full_decoder() {
        use crate::tape::Tape;
        let m = Transformer::<f64>::init(cfg(), 9).unwrap();
        let x = TokenBatch::from_rows(&[vec![1, 5, 6, 2], vec![1, 7, 2]], 0);
        let ys = [vec![1u32, 4, 0, 8, 9], vec![1, 3, 3, 5, 2]];
        let mut st = m.begin_decode(&x).unwrap();
        let y = TokenBatch::from_rows(&ys, 0);
        let mut tape = Tape::new(m.params());
        let mem = m.encode(&mut tape, &x);
        let full = m.decode(&mut tape, mem, &x, &y);
        let full = tape.value(full).data();
        let v = m.config().vocab_size;
        for t in 0..5 {
            let step = m.decode_step(&mut st, &[0, 1], &[ys[0][t], ys[1][t]]).unwrap();
            for r in 0..2 {
                if ys[r][t] == 0 {
                    continue;
                }
                let want = &full[(r * 5 + t) * v..(r * 5 + t + 1) * v];
                for (a, b) in step[r * v..(r + 1) * v].iter().zip(want) {
                    assert!((a - b).abs() < 1e-10, "row {r} pos {t}: {a} vs {b}");
                }
            }
        }
        assert_eq!(st.steps(), 5);
        assert!(m.decode_step(&mut st, &[0], &[1, 2]).is_err());
    }
}
