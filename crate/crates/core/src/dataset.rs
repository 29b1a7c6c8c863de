//! Plain-text dataset files.
//!
//! One sample per line, `INPUT # OUTPUT`, where each side is a tuple of
//! expressions in canonical text form joined by ` | `:
//!
//! ```text
//! 108606433 # 13 | 37 | 43 | 59 | 89
//! x + y | x - y # x^2 - y^2
//! ```
//!
//! A JSON sidecar `<file>.meta.json` records the task spec, seed, sample
//! count and rejection statistics of generated files. Hand-written files may
//! omit it.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_bigint::{BigInt, BigUint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expression;
use crate::poly::Polynomial;
use crate::primes::trial_division_factorize;
use crate::taskgen::{Instance, Task, TaskSpec, GENERATOR_VERSION};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: schema violation: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },
    #[error("{path}: invalid metadata: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: TaskSpec,
    pub seed: u64,
    pub count: usize,
    pub generator_version: String,
    pub rejected: u64,
    pub total_draws: u64,
    pub rejected_fraction: f64,
}

impl DatasetMeta {
    pub fn new(spec: TaskSpec, seed: u64, count: usize, rejected: u64) -> Self {
        let total_draws = count as u64 + rejected;
        DatasetMeta {
            spec,
            seed,
            count,
            generator_version: GENERATOR_VERSION.to_string(),
            rejected,
            total_draws,
            rejected_fraction: rejected as f64 / total_draws as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub meta: Option<DatasetMeta>,
    pub samples: Vec<Instance>,
}

/// How [`read_dataset`] treats lines that parse but violate the task schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Validation {
    #[default]
    Lenient,
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaWarning {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug)]
pub struct ReadOutcome {
    pub dataset: DatasetFile,
    pub warnings: Vec<SchemaWarning>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn join(exprs: &[Expression]) -> String {
    exprs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" | ")
}

pub fn format_instance(inst: &Instance) -> String {
    format!("{} # {}", join(&inst.input), join(&inst.output))
}

/// Parses one line for the given task. Errors are plain messages; callers
/// attach the location.
pub fn parse_instance(line: &str, spec: &TaskSpec) -> Result<Instance, String> {
    let (lhs, rhs) = line
        .split_once('#')
        .ok_or_else(|| "missing `#` between input and output".to_string())?;
    if rhs.contains('#') {
        return Err("more than one `#`".into());
    }
    let side = |s: &str, which: &str| -> Result<Vec<Expression>, String> {
        s.split('|')
            .enumerate()
            .map(|(k, part)| {
                let parsed = if spec.task == Task::Factorization {
                    Expression::parse_integer(part)
                } else {
                    Expression::parse_poly(part, spec.ring(), spec.sampler.num_vars)
                };
                parsed.map_err(|e| format!("{which} entry {}: {e}", k + 1))
            })
            .collect()
    };
    Ok(Instance {
        input: side(lhs, "input")?,
        output: side(rhs, "output")?,
    })
}

/// Checks the mathematical contract of an instance for its task.
pub fn check_schema(inst: &Instance, spec: &TaskSpec) -> Result<(), String> {
    match spec.task {
        Task::Factorization => {
            let [Expression::Integer(n)] = inst.input.as_slice() else {
                return Err("input must be a single integer".into());
            };
            let t = inst.output.len();
            if t < spec.t_min || t > spec.t_max {
                return Err(format!("expected {}..={} factors, found {t}", spec.t_min, spec.t_max));
            }
            let factors: Vec<&BigInt> = inst
                .output
                .iter()
                .map(|e| e.as_integer().ok_or("output entries must be integers"))
                .collect::<Result<_, _>>()?;
            if factors.windows(2).any(|w| w[0] >= w[1]) {
                return Err("factors must be strictly ascending".into());
            }
            let bound = BigInt::from(spec.prime_bound);
            for f in &factors {
                let prime = f
                    .to_biguint()
                    .filter(|u| *u >= BigUint::from(2u32))
                    .and_then(|u| trial_division_factorize(&u).ok())
                    .is_some_and(|fs| fs.len() == 1);
                if !prime {
                    return Err(format!("{f} is not prime"));
                }
                if **f > bound {
                    return Err(format!("{f} exceeds the prime bound {}", spec.prime_bound));
                }
            }
            let prod: BigInt = factors.iter().copied().product();
            if &prod != n {
                return Err(format!("factors multiply to {prod}, not {n}"));
            }
            Ok(())
        }
        Task::ProdZ | Task::ProdF7 | Task::ProdF7Cot => {
            let polys = |side: &[Expression]| -> Result<Vec<Polynomial>, String> {
                side.iter()
                    .map(|e| e.as_poly().cloned().ok_or_else(|| "expected polynomials".to_string()))
                    .collect()
            };
            let fs = polys(&inst.input)?;
            let gs = polys(&inst.output)?;
            if fs.len() != spec.num_factors {
                return Err(format!("expected {} factors, found {}", spec.num_factors, fs.len()));
            }
            let mut partial = fs[0].clone();
            let mut chain = vec![partial.clone()];
            for f in &fs[1..] {
                partial = partial.mul(f).map_err(|e| e.to_string())?;
                chain.push(partial.clone());
            }
            let expected: &[Polynomial] = if spec.task == Task::ProdF7Cot {
                &chain
            } else {
                std::slice::from_ref(chain.last().expect("nonempty"))
            };
            if gs != expected {
                return Err("output does not match the product of the inputs".into());
            }
            Ok(())
        }
    }
}

pub fn write_dataset(d: &DatasetFile, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for inst in &d.samples {
        writeln!(w, "{}", format_instance(inst)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    if let Some(meta) = &d.meta {
        let mp = meta_path(path);
        let mut json = serde_json::to_string_pretty(meta).expect("metadata serializes");
        json.push('\n');
        fs::write(&mp, json).map_err(|source| DatasetError::Io { path: mp, source })?;
    }
    Ok(())
}

/// Loads the sidecar of `path`, if present.
pub fn read_meta(path: &Path) -> Result<Option<DatasetMeta>, DatasetError> {
    let mp = meta_path(path);
    match fs::read_to_string(&mp) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|source| DatasetError::Meta { path: mp, source }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(DatasetError::Io { path: mp, source }),
    }
}

pub fn read_dataset(path: &Path, spec: &TaskSpec, validation: Validation) -> Result<ReadOutcome, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let inst = parse_instance(raw, spec).map_err(|msg| DatasetError::Malformed {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
        if let Err(msg) = check_schema(&inst, spec) {
            if validation == Validation::Strict {
                return Err(DatasetError::Schema {
                    path: path.to_path_buf(),
                    line,
                    msg,
                });
            }
            warnings.push(SchemaWarning { line, msg });
        }
        samples.push(inst);
    }
    Ok(ReadOutcome {
        dataset: DatasetFile {
            meta: read_meta(path)?,
            samples,
        },
        warnings,
    })
}
