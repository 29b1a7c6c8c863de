//! Instance generators for the built-in tasks and the parallel dataset
//! builder.
//!
//! | task          | input                 | output                          |
//! |---------------|-----------------------|---------------------------------|
//! | factorization | `n = p1 * ... * pt`   | `p1 < ... < pt`, distinct primes |
//! | prod-z        | `f1, ..., fs` over ZZ | `f1 * ... * fs`                 |
//! | prod-f7       | `f1, ..., fs` over GF(7) | `f1 * ... * fs`              |
//! | prod-f7-cot   | `f1, ..., fs` over GF(7) | `f1, f1*f2, ..., f1*...*fs`  |

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetFile, DatasetMeta};
use crate::expr::Expression;
use crate::poly::{PolyError, Polynomial};
use crate::primes::{sample_prime_set, PrimeError};
use crate::ring::Ring;
use crate::rng::sample_rng;
use crate::sample::{sample_polynomial, SamplerConfig, SamplerError};
use crate::tokenizer::{encode, TokenizerConfig, Vocabulary};

pub const GENERATOR_VERSION: &str = "symseq-taskgen/1";

/// Draws per sample before giving up on finding one that fits the token budget.
const MAX_ATTEMPTS: u64 = 10_000;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Prime(#[from] PrimeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("invalid task spec: {0}")]
    Spec(String),
    #[error("sample {index}: no instance within {max_seq_len} tokens after {attempts} draws")]
    Exhausted {
        index: u64,
        max_seq_len: usize,
        attempts: u64,
    },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Factorization,
    ProdZ,
    ProdF7,
    ProdF7Cot,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Factorization, Task::ProdZ, Task::ProdF7, Task::ProdF7Cot];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Factorization => "factorization",
            Task::ProdZ => "prod-z",
            Task::ProdF7 => "prod-f7",
            Task::ProdF7Cot => "prod-f7-cot",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('_', "-");
        Task::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| format!("unknown task `{s}` (expected factorization, prod-z, prod-f7 or prod-f7-cot)"))
    }
}

/// Everything that determines how instances of a task are drawn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub num_factors: usize,
    pub sampler: SamplerConfig,
    pub t_min: usize,
    pub t_max: usize,
    pub prime_bound: u64,
    pub max_seq_len: usize,
}

impl TaskSpec {
    /// Built-in defaults: three factors, bivariate degree <= 2 with at most
    /// three terms; 2 to 5 distinct primes below 100; 512-token budget.
    pub fn preset(task: Task) -> Self {
        let sampler = match task {
            Task::ProdF7 | Task::ProdF7Cot => SamplerConfig::prime_field_default(Ring::F7),
            Task::Factorization | Task::ProdZ => SamplerConfig::integers_default(),
        };
        TaskSpec {
            task,
            num_factors: 3,
            sampler,
            t_min: 2,
            t_max: 5,
            prime_bound: 100,
            max_seq_len: 512,
        }
    }

    pub fn ring(&self) -> Ring {
        match self.task {
            Task::Factorization => Ring::Integers,
            _ => self.sampler.ring,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        match self.task {
            Task::Factorization => {
                if self.t_min == 0 || self.t_min > self.t_max {
                    return Err(TaskError::Prime(PrimeError::BadRange {
                        t_min: self.t_min,
                        t_max: self.t_max,
                    }));
                }
            }
            Task::ProdZ | Task::ProdF7 | Task::ProdF7Cot => {
                if self.num_factors == 0 {
                    return Err(TaskError::Spec("num_factors must be at least 1".into()));
                }
                self.sampler.validate()?;
                let expect_field = self.task != Task::ProdZ;
                if expect_field != (self.sampler.ring == Ring::F7) {
                    return Err(TaskError::Spec(format!(
                        "task {} requires ring {}",
                        self.task,
                        if expect_field { "GF(7)" } else { "ZZ" }
                    )));
                }
            }
        }
        if self.max_seq_len < 3 {
            return Err(TaskError::Spec("max_seq_len must be at least 3".into()));
        }
        Ok(())
    }

    /// Tokenizer bounds that cover every instance this spec can produce.
    ///
    /// Exponents go up to the degree of the full product. Coefficients are
    /// bounded by the balanced residues over a prime field and by a fixed
    /// 1000 over the integers, which is checked when instances are drawn.
    pub fn tokenizer_config(&self) -> TokenizerConfig {
        match self.task {
            Task::Factorization => TokenizerConfig {
                emax: 0,
                cmax: 0,
                num_vars: self.sampler.num_vars,
                integer_mode: true,
            },
            _ => TokenizerConfig {
                emax: self.sampler.max_total_degree * self.num_factors as u32,
                cmax: self.sampler.ring.max_abs_coeff().map(|m| m as u32).unwrap_or(1000),
                num_vars: self.sampler.num_vars,
                integer_mode: false,
            },
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::build(self.tokenizer_config())
    }
}

/// One training pair `(F, G)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Instance {
    pub input: Vec<Expression>,
    pub output: Vec<Expression>,
}

pub fn gen_factorization_instance<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Result<Instance, TaskError> {
    let primes = sample_prime_set(rng, spec.t_min, spec.t_max, spec.prime_bound)?;
    Ok(factorization_instance(&primes))
}

/// Instance for a known prime set (already sorted).
pub fn factorization_instance(primes: &[u64]) -> Instance {
    let n: BigInt = primes.iter().map(|&p| BigInt::from(p)).product();
    Instance {
        input: vec![Expression::Integer(n)],
        output: primes.iter().map(|&p| Expression::from(p)).collect(),
    }
}

fn draw_factors<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Vec<Polynomial> {
    (0..spec.num_factors)
        .map(|_| sample_polynomial(rng, &spec.sampler))
        .collect()
}

pub fn product_instance(factors: Vec<Polynomial>) -> Result<Instance, PolyError> {
    let g = crate::poly::product(&factors)?;
    Ok(Instance {
        input: factors.into_iter().map(Expression::Poly).collect(),
        output: vec![Expression::Poly(g)],
    })
}

pub fn product_cot_instance(factors: Vec<Polynomial>) -> Result<Instance, PolyError> {
    let mut partials: Vec<Polynomial> = Vec::with_capacity(factors.len());
    for f in &factors {
        let next = match partials.last() {
            Some(g) => g.mul(f)?,
            None => f.clone(),
        };
        partials.push(next);
    }
    Ok(Instance {
        input: factors.into_iter().map(Expression::Poly).collect(),
        output: partials.into_iter().map(Expression::Poly).collect(),
    })
}

pub fn gen_product_instance<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Result<Instance, TaskError> {
    Ok(product_instance(draw_factors(rng, spec))?)
}

pub fn gen_product_cot_instance<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Result<Instance, TaskError> {
    Ok(product_cot_instance(draw_factors(rng, spec))?)
}

/// One unconstrained draw of `spec.task`.
pub fn gen_instance<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Result<Instance, TaskError> {
    match spec.task {
        Task::Factorization => gen_factorization_instance(rng, spec),
        Task::ProdZ | Task::ProdF7 => gen_product_instance(rng, spec),
        Task::ProdF7Cot => gen_product_cot_instance(rng, spec),
    }
}

/// True when both sides tokenize with `vocab` within `spec.max_seq_len`.
pub fn fits(inst: &Instance, vocab: &Vocabulary, spec: &TaskSpec) -> bool {
    let ok = |side: &[Expression]| {
        encode(side, vocab)
            .map(|s| s.len() <= spec.max_seq_len)
            .unwrap_or(false)
    };
    ok(&inst.input) && ok(&inst.output)
}

/// Draws sample `index` of a dataset, resampling until it fits. Returns the
/// instance and the number of rejected draws.
pub fn gen_sample(spec: &TaskSpec, vocab: &Vocabulary, seed: u64, index: u64) -> Result<(Instance, u64), TaskError> {
    let mut rng = sample_rng(seed, index);
    for rejected in 0..MAX_ATTEMPTS {
        let inst = gen_instance(&mut rng, spec)?;
        if fits(&inst, vocab, spec) {
            return Ok((inst, rejected));
        }
    }
    Err(TaskError::Exhausted {
        index,
        max_seq_len: spec.max_seq_len,
        attempts: MAX_ATTEMPTS,
    })
}

/// Generates `n` samples on `workers` threads.
///
/// Sample `i` depends only on `(spec, seed, i)`, so the result is identical
/// for every worker count.
pub fn build_dataset(spec: &TaskSpec, n: usize, seed: u64, workers: usize) -> Result<DatasetFile, TaskError> {
    spec.validate()?;
    if n == 0 {
        return Err(TaskError::Spec("dataset size must be at least 1".into()));
    }
    let vocab = spec.vocabulary();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TaskError::Pool(e.to_string()))?;
    let drawn: Vec<(Instance, u64)> = pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| gen_sample(spec, &vocab, seed, i))
            .collect::<Result<_, _>>()
    })?;
    let rejected: u64 = drawn.iter().map(|(_, r)| r).sum();
    let samples: Vec<Instance> = drawn.into_iter().map(|(inst, _)| inst).collect();
    let meta = DatasetMeta::new(spec.clone(), seed, samples.len(), rejected);
    Ok(DatasetFile {
        meta: Some(meta),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_poly, poly_to_string};
    use crate::poly::product;

    fn f7(s: &str) -> Polynomial {
        parse_poly(s, Ring::F7, 2).unwrap()
    }

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert_eq!("prod_f7_cot".parse::<Task>().unwrap(), Task::ProdF7Cot);
        assert!("groebner".parse::<Task>().is_err());
    }

    #[test]
    fn factorization_reference_instance() {
        let inst = factorization_instance(&[13, 37, 43, 59, 89]);
        assert_eq!(inst.input, vec![Expression::from(108_606_433u64)]);
        assert_eq!(inst.output.len(), 5);
        let small = factorization_instance(&[2, 3]);
        assert_eq!(small.input[0].to_string(), "6");
        assert_eq!(small.output, vec![Expression::from(2u64), Expression::from(3u64)]);
    }

    #[test]
    fn cot_reference_chain() {
        let inst =
            product_cot_instance(vec![f7("-2*x^2 - 3*x + 2"), f7("x^2 - 3*x*y + 1"), f7("x - 3*y - 2")]).unwrap();
        let shown: Vec<String> = inst.output.iter().map(ToString::to_string).collect();
        assert_eq!(
            shown,
            [
                "-2*x^2 - 3*x + 2",
                "-2*x^4 - x^3*y - 3*x^3 + 2*x^2*y + x*y - 3*x + 2",
                "-2*x^5 - 2*x^4*y + 3*x^3*y^2 + x^4 - x^3*y + x^2*y^2 - x^3 - 3*x^2*y - 3*x*y^2 - 3*x^2 + x + y + 3",
            ]
        );
    }

    #[test]
    fn single_factor_products() {
        let f = f7("x*y - 2");
        let plain = product_instance(vec![f.clone()]).unwrap();
        assert_eq!(plain.output, vec![Expression::Poly(f.clone())]);
        let cot = product_cot_instance(vec![f.clone()]).unwrap();
        assert_eq!(cot.output, vec![Expression::Poly(f)]);
    }

    #[test]
    fn cot_last_entry_matches_plain_product_on_shared_stream() {
        let cot = TaskSpec::preset(Task::ProdF7Cot);
        let plain = TaskSpec::preset(Task::ProdF7);
        for i in 0..1000 {
            let a = gen_product_cot_instance(&mut sample_rng(8, i), &cot).unwrap();
            let b = gen_product_instance(&mut sample_rng(8, i), &plain).unwrap();
            assert_eq!(a.input, b.input);
            assert_eq!(a.output.last(), b.output.last());
            let chain: Vec<Polynomial> = a.output.iter().map(|e| e.as_poly().unwrap().clone()).collect();
            for k in 1..chain.len() {
                let f = a.input[k].as_poly().unwrap();
                assert_eq!(chain[k], chain[k - 1].mul(f).unwrap());
            }
        }
    }

    #[test]
    fn products_verified_by_evaluation() {
        let spec = TaskSpec::preset(Task::ProdZ);
        for i in 0..1000 {
            let mut rng = sample_rng(21, i);
            let inst = gen_product_instance(&mut rng, &spec).unwrap();
            let g = inst.output[0].as_poly().unwrap();
            for _ in 0..5 {
                let pt = [rng.random_range(-3..=3i64), rng.random_range(-3..=3i64)];
                let rhs: i128 = inst
                    .input
                    .iter()
                    .map(|f| f.as_poly().unwrap().eval(&pt).unwrap())
                    .product();
                assert_eq!(g.eval(&pt).unwrap(), rhs);
            }
        }
    }

    #[test]
    fn tokenizer_config_covers_products() {
        let spec = TaskSpec::preset(Task::ProdZ);
        let cfg = spec.tokenizer_config();
        assert_eq!(cfg.emax, 6);
        assert_eq!(cfg.cmax, 1000);
        let f7 = TaskSpec::preset(Task::ProdF7).tokenizer_config();
        assert_eq!((f7.emax, f7.cmax), (6, 3));
    }

    #[test]
    fn spec_validation() {
        let mut spec = TaskSpec::preset(Task::ProdZ);
        spec.sampler = SamplerConfig::prime_field_default(Ring::F7);
        assert!(spec.validate().is_err());
        let mut spec = TaskSpec::preset(Task::ProdF7);
        spec.num_factors = 0;
        assert!(spec.validate().is_err());
        let mut spec = TaskSpec::preset(Task::Factorization);
        spec.t_min = 6;
        assert!(spec.validate().is_err());
        for t in Task::ALL {
            TaskSpec::preset(t).validate().unwrap();
        }
    }

    #[test]
    fn tight_budget_forces_rejections() {
        let mut spec = TaskSpec::preset(Task::ProdZ);
        spec.max_seq_len = 30;
        let d = build_dataset(&spec, 50, 3, 1).unwrap();
        let meta = d.meta.unwrap();
        assert!(meta.rejected > 0);
        let vocab = spec.vocabulary();
        for inst in &d.samples {
            assert!(encode(&inst.output, &vocab).unwrap().len() <= 30);
        }
        spec.max_seq_len = 3;
        assert!(matches!(
            build_dataset(&spec, 1, 3, 1),
            Err(TaskError::Exhausted { .. })
        ));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let spec = TaskSpec::preset(Task::ProdF7Cot);
        let a = build_dataset(&spec, 200, 42, 1).unwrap();
        let b = build_dataset(&spec, 200, 42, 3).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, build_dataset(&spec, 200, 43, 1).unwrap().samples);
    }

    #[test]
    fn reference_product_from_factors() {
        let z = |s: &str| parse_poly(s, Ring::Integers, 2).unwrap();
        let inst = product_instance(vec![z("-x - 2*y - 1"), z("-2*x^2 + y"), z("x*y - x")]).unwrap();
        assert_eq!(
            poly_to_string(inst.output[0].as_poly().unwrap()),
            "2*x^4*y + 4*x^3*y^2 - 2*x^4 - 2*x^3*y - x^2*y^2 - 2*x*y^3 - 2*x^3 + x^2*y + x*y^2 + x*y"
        );
        let direct = product(&[z("-x - 2*y - 1"), z("-2*x^2 + y"), z("x*y - x")]).unwrap();
        assert_eq!(inst.output[0].as_poly().unwrap(), &direct);
    }
}
