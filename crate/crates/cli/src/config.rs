//! Optional TOML defaults file.
//!
//! ```toml
//! [generate]
//! task = "prod-f7"       # factorization | prod-z | prod-f7 | prod-f7-cot
//! n = 1000
//! seed = 7
//! workers = 4
//! factors = 3
//! max_degree = 2
//! max_terms = 3
//! num_vars = 2
//! min_primes = 2
//! max_primes = 5
//! prime_bound = 100
//! max_seq_len = 512
//!
//! [train]
//! steps = 2000
//! batch_size = 128
//! lr = 5e-5
//! seed = 0
//! weight_decay = 0.01
//! dropout = 0.1
//! clip_norm = 1.0
//! log_every = 50
//! checkpoint_every = 0
//! eval_subset = 0
//! d_model = 128
//! heads = 4
//! enc_layers = 2
//! dec_layers = 2
//! d_ffn = 512
//! max_len = 512
//!
//! [eval]
//! workers = 1
//! batch_size = 64
//! per_sample = false
//! limit = 1000
//! ```
//!
//! Every key is optional. Paths are given on the command line only.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use symseq_core::Task;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub train: TrainFileConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub task: Option<Task>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<u64>,
    pub factors: Option<u64>,
    pub max_degree: Option<u32>,
    pub max_terms: Option<u64>,
    pub num_vars: Option<u64>,
    pub min_primes: Option<u64>,
    pub max_primes: Option<u64>,
    pub prime_bound: Option<u64>,
    pub max_seq_len: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub weight_decay: Option<f64>,
    pub dropout: Option<f64>,
    pub clip_norm: Option<f64>,
    pub log_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub eval_subset: Option<usize>,
    pub d_model: Option<usize>,
    pub heads: Option<usize>,
    pub enc_layers: Option<usize>,
    pub dec_layers: Option<usize>,
    pub d_ffn: Option<usize>,
    pub max_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub workers: Option<u64>,
    pub batch_size: Option<usize>,
    pub per_sample: Option<bool>,
    pub limit: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs");
        let start = doc.find("```toml").unwrap() + "```toml".len();
        let end = start + doc[start..].find("```").unwrap();
        let text: String = doc[start..end]
            .lines()
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let cfg: ConfigFile = toml::from_str(&text).unwrap();
        assert_eq!(cfg.generate.task, Some(Task::ProdF7));
        assert_eq!(cfg.train.lr, Some(5e-5));
        assert_eq!(cfg.eval.limit, Some(1000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[train]\nlearning_rate = 1.0\n").is_err());
        assert!(toml::from_str::<ConfigFile>("").is_ok());
    }
}
