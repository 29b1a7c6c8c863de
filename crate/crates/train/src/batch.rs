//! Tokenized pairs, per-epoch shuffling and padded teacher-forcing batches.

use rand::seq::SliceRandom;
use symseq_core::rng::stream;
use symseq_core::tokenizer::PAD;
use symseq_core::{encode, Instance, Vocabulary};
use symseq_nn::TokenBatch;

use crate::error::TrainError;

pub const SHUFFLE_DOMAIN: &str = "symseq/shuffle/v1";

/// One tokenized sample: `x` and `y` are full `>`…`<` sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub x: Vec<u32>,
    pub y: Vec<u32>,
}

pub fn encode_samples(samples: &[Instance], vocab: &Vocabulary) -> Result<Vec<EncodedPair>, TrainError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let x = encode(&s.input, vocab).map_err(|e| TrainError::Encode { index: i, source: e })?;
            let y = encode(&s.output, vocab).map_err(|e| TrainError::Encode { index: i, source: e })?;
            Ok(EncodedPair { x: x.ids, y: y.ids })
        })
        .collect()
}

/// A right-padded batch. The decoder reads `y_in` (target without its final
/// `<`) and is scored against `y_out` (target without its leading `>`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Dataset indices of the rows, in row order.
    pub indices: Vec<usize>,
    pub x: TokenBatch,
    pub y_in: TokenBatch,
    pub y_out: Vec<u32>,
    /// `true` at real (non-padding) positions of `x`.
    pub x_mask: Vec<bool>,
    /// `true` at real positions of `y_in` / `y_out`.
    pub y_mask: Vec<bool>,
}

impl Batch {
    pub fn from_pairs(pairs: &[EncodedPair], indices: &[usize]) -> Batch {
        let xs: Vec<Vec<u32>> = indices.iter().map(|&i| pairs[i].x.clone()).collect();
        let ins: Vec<Vec<u32>> = indices
            .iter()
            .map(|&i| pairs[i].y[..pairs[i].y.len() - 1].to_vec())
            .collect();
        let outs: Vec<Vec<u32>> = indices.iter().map(|&i| pairs[i].y[1..].to_vec()).collect();
        let x = TokenBatch::from_rows(&xs, PAD);
        let y_in = TokenBatch::from_rows(&ins, PAD);
        let y_out = TokenBatch::from_rows(&outs, PAD).ids;
        let mask = |b: &TokenBatch, rows: &[Vec<u32>]| {
            let mut m = vec![false; b.ids.len()];
            for (r, row) in rows.iter().enumerate() {
                m[r * b.len..r * b.len + row.len()].fill(true);
            }
            m
        };
        let x_mask = mask(&x, &xs);
        let y_mask = mask(&y_in, &ins);
        Batch {
            indices: indices.to_vec(),
            x,
            y_in,
            y_out,
            x_mask,
            y_mask,
        }
    }
}

/// Dataset order for `epoch`, determined by `(seed, epoch)` alone.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(SHUFFLE_DOMAIN, seed, epoch));
    order
}

pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size.max(1))
}

/// Splits a shuffled epoch into batches of `batch_size` (the last may be
/// smaller). Fails on the first sample longer than `max_len`.
pub fn make_batches(
    pairs: &[EncodedPair],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    max_len: usize,
) -> Result<Vec<Batch>, TrainError> {
    check_lengths(pairs, max_len)?;
    let order = epoch_order(pairs.len(), seed, epoch);
    Ok(order
        .chunks(batch_size.max(1))
        .map(|idx| Batch::from_pairs(pairs, idx))
        .collect())
}

pub fn check_lengths(pairs: &[EncodedPair], max_len: usize) -> Result<(), TrainError> {
    for (i, p) in pairs.iter().enumerate() {
        let len = p.x.len().max(p.y.len() - 1);
        if len > max_len {
            return Err(TrainError::TooLong { index: i, len, max_len });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize) -> Vec<EncodedPair> {
        (0..n)
            .map(|i| EncodedPair {
                x: std::iter::once(1)
                    .chain(std::iter::repeat_n(7, i % 5))
                    .chain([2])
                    .collect(),
                y: std::iter::once(1)
                    .chain((0..(i % 3) + 1).map(|k| 6 + k as u32))
                    .chain([2])
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn single_sample_batch() {
        let p = pairs(1);
        let b = make_batches(&p, 4, 0, 0, 64).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].x.ids, p[0].x);
        assert!(b[0].x_mask.iter().all(|&m| m));
        assert!(b[0].y_mask.iter().all(|&m| m));
        assert_eq!(b[0].y_in.ids, vec![1, 6]);
        assert_eq!(b[0].y_out, vec![6, 2]);
    }

    #[test]
    fn epoch_is_a_permutation_and_reproducible() {
        let p = pairs(37);
        let b = make_batches(&p, 8, 3, 2, 64).unwrap();
        assert_eq!(b.len(), 5);
        let mut all: Vec<usize> = b.iter().flat_map(|b| b.indices.clone()).collect();
        assert_eq!(
            all,
            make_batches(&p, 8, 3, 2, 64)
                .unwrap()
                .iter()
                .flat_map(|b| b.indices.clone())
                .collect::<Vec<_>>()
        );
        assert_ne!(epoch_order(37, 3, 2), epoch_order(37, 3, 3));
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn teacher_forcing_shift() {
        let p = pairs(50);
        for b in make_batches(&p, 7, 1, 0, 64).unwrap() {
            let len = b.y_in.len;
            for r in 0..b.y_in.rows {
                let y = &p[b.indices[r]].y;
                let n = y.len() - 1;
                let input = &b.y_in.row(r)[..n];
                let target = &b.y_out[r * len..r * len + n];
                assert_eq!(input[1..], target[..n - 1]);
                assert_eq!(input, &y[..n]);
                assert_eq!(target, &y[1..]);
                assert!(b.y_out[r * len + n..(r + 1) * len].iter().all(|&t| t == PAD));
                assert_eq!(b.y_mask[r * len..(r + 1) * len].iter().filter(|&&m| m).count(), n);
            }
        }
    }

    #[test]
    fn over_long_sample_is_named() {
        let p = pairs(10);
        match make_batches(&p, 4, 0, 0, 5) {
            Err(TrainError::TooLong { index, .. }) => assert_eq!(index, 4),
            other => panic!("{other:?}"),
        }
    }
}
