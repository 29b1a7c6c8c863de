//! Every generated instance checked against an oracle that does not share
//! code with the generator.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symseq_core::tokenizer::{decode, encode};
use symseq_core::{build_dataset, Expression, Polynomial, Ring, Task, TaskSpec};

const N: usize = 10_000;

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

fn eval_mod(p: &Polynomial, point: &[i64]) -> i128 {
    let mut v: i128 = 0;
    for (m, c) in p.terms() {
        let mut t = c as i128;
        for (x, &e) in point.iter().zip(m.exponents()) {
            t *= (*x as i128).pow(e);
        }
        v += t;
    }
    match p.ring() {
        Ring::Integers => v,
        Ring::PrimeField { modulus } => v.rem_euclid(modulus as i128),
    }
}

fn reduce(ring: Ring, v: i128) -> i128 {
    match ring {
        Ring::Integers => v,
        Ring::PrimeField { modulus } => v.rem_euclid(modulus as i128),
    }
}

fn polys(side: &[Expression]) -> Vec<&Polynomial> {
    side.iter().map(|e| e.as_poly().expect("polynomial entry")).collect()
}

fn check_factorization(input: &[Expression], output: &[Expression]) {
    assert_eq!(input.len(), 1);
    let n = input[0].as_integer().unwrap();
    let ps: Vec<u64> = output
        .iter()
        .map(|e| e.as_integer().unwrap().to_u64().unwrap())
        .collect();
    assert!(ps.windows(2).all(|w| w[0] < w[1]), "not strictly ascending: {ps:?}");
    assert!(ps.iter().all(|&p| is_prime(p) && p < 100));
    let prod: BigInt = ps.iter().fold(BigInt::one(), |acc, &p| acc * p);
    assert_eq!(&prod, n);
}

fn check_product(input: &[Expression], output: &[Expression], cot: bool, rng: &mut ChaCha8Rng) {
    let fs = polys(input);
    let gs = polys(output);
    if cot {
        assert_eq!(gs.len(), fs.len());
        assert_eq!(gs[0], fs[0]);
    } else {
        assert_eq!(gs.len(), 1);
    }
    let ring = fs[0].ring();
    for _ in 0..5 {
        let pt: Vec<i64> = (0..fs[0].num_vars()).map(|_| rng.random_range(-9..=9)).collect();
        let mut acc: i128 = 1;
        for (i, f) in fs.iter().enumerate() {
            acc = reduce(ring, acc * eval_mod(f, &pt));
            if cot {
                assert_eq!(eval_mod(gs[i], &pt), acc, "chain entry {i}");
            }
        }
        assert_eq!(eval_mod(gs[gs.len() - 1], &pt), acc);
    }
}

#[test]
fn generated_instances_pass_their_oracles_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for task in Task::ALL {
        let spec = TaskSpec::preset(task);
        let vocab = spec.vocabulary();
        let ds = build_dataset(&spec, N, 2024, 2).unwrap();
        assert_eq!(ds.samples.len(), N);
        for inst in &ds.samples {
            match task {
                Task::Factorization => check_factorization(&inst.input, &inst.output),
                Task::ProdZ | Task::ProdF7 => check_product(&inst.input, &inst.output, false, &mut rng),
                Task::ProdF7Cot => check_product(&inst.input, &inst.output, true, &mut rng),
            }
            for side in [&inst.input, &inst.output] {
                let ids = encode(side, &vocab).unwrap();
                assert!(ids.len() <= spec.max_seq_len);
                assert_eq!(&decode(&ids.ids, &vocab, spec.ring()).unwrap(), side);
            }
        }
    }
}
