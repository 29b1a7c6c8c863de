use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Monomial, Polynomial};
use crate::ring::Ring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("max_terms must be at least 1")]
    NoTerms,
    #[error("empty coefficient range {0}..={1}")]
    EmptyRange(i64, i64),
    #[error("coefficient range {low}..={high} has no nonzero value")]
    OnlyZero { low: i64, high: i64 },
    #[error("prime-field coefficient range must be the balanced residues -{max}..={max}")]
    NotBalanced { max: i64 },
    #[error("num_vars must be at least 1")]
    NoVars,
}

/// Bounds for random polynomial factors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub num_vars: usize,
    pub max_total_degree: u32,
    pub max_terms: usize,
    pub coeff_low: i64,
    pub coeff_high: i64,
    pub ring: Ring,
}

impl SamplerConfig {
    /// Bivariate, degree <= 2, at most three terms, coefficients in -2..=2.
    pub fn integers_default() -> Self {
        SamplerConfig {
            num_vars: 2,
            max_total_degree: 2,
            max_terms: 3,
            coeff_low: -2,
            coeff_high: 2,
            ring: Ring::Integers,
        }
    }

    /// Same shape as [`SamplerConfig::integers_default`] with every nonzero
    /// element of the field allowed as a coefficient.
    pub fn prime_field_default(ring: Ring) -> Self {
        let max = ring.max_abs_coeff().unwrap_or(0);
        SamplerConfig {
            coeff_low: -max,
            coeff_high: max,
            ring,
            ..Self::integers_default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.num_vars == 0 {
            return Err(SamplerError::NoVars);
        }
        if self.max_terms == 0 {
            return Err(SamplerError::NoTerms);
        }
        if self.coeff_low > self.coeff_high {
            return Err(SamplerError::EmptyRange(self.coeff_low, self.coeff_high));
        }
        if let Some(max) = self.ring.max_abs_coeff() {
            let low = if self.ring.modulus() == Some(2) { 0 } else { -max };
            if self.coeff_low != low || self.coeff_high != max {
                return Err(SamplerError::NotBalanced { max });
            }
        }
        if self.nonzero_coefficients().is_empty() {
            return Err(SamplerError::OnlyZero {
                low: self.coeff_low,
                high: self.coeff_high,
            });
        }
        Ok(())
    }

    pub fn nonzero_coefficients(&self) -> Vec<i64> {
        (self.coeff_low..=self.coeff_high).filter(|&c| c != 0).collect()
    }

    /// Candidate monomials, in canonical order.
    pub fn monomials(&self) -> Vec<Monomial> {
        Monomial::all_up_to_degree(self.num_vars, self.max_total_degree)
    }

    /// Upper end of the term-count draw: `max_terms`, capped by the number of
    /// available monomials.
    pub fn effective_max_terms(&self) -> usize {
        self.max_terms.min(self.monomials().len())
    }
}

/// Draws a random nonzero polynomial.
///
/// Scheme: `m ~ U{1..=max_terms}` (capped by the number of monomials of
/// degree `<= max_total_degree`), then `m` distinct monomials uniformly via a
/// partial Fisher-Yates shuffle of the canonical monomial list, then each
/// coefficient uniformly over the nonzero values of the coefficient range.
/// Distinct monomials with nonzero coefficients can never cancel, so the
/// zero-polynomial rejection branch is unreachable with valid configs.
pub fn sample_polynomial<R: Rng + ?Sized>(rng: &mut R, cfg: &SamplerConfig) -> Polynomial {
    debug_assert!(cfg.validate().is_ok());
    let mut pool = cfg.monomials();
    let coeffs = cfg.nonzero_coefficients();
    let m = rng.random_range(1..=cfg.max_terms.min(pool.len()));
    loop {
        for i in 0..m {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        let terms = pool[..m]
            .iter()
            .map(|mono| (mono.exponents().to_vec(), coeffs[rng.random_range(0..coeffs.len())]));
        let p = Polynomial::from_terms(cfg.ring, cfg.num_vars, terms).expect("sampled coefficients are in range");
        if !p.is_zero() {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_rng;
    use std::collections::HashMap;

    fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
        observed
            .iter()
            .zip(expected)
            .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
            .sum()
    }

    #[test]
    fn samples_respect_bounds() {
        for cfg in [
            SamplerConfig::integers_default(),
            SamplerConfig::prime_field_default(Ring::F7),
        ] {
            cfg.validate().unwrap();
            for i in 0..5000 {
                let p = sample_polynomial(&mut sample_rng(1, i), &cfg);
                assert!(!p.is_zero());
                assert!((1..=3).contains(&p.len()));
                for (m, c) in p.terms() {
                    assert!(m.degree() <= 2);
                    assert!(c != 0 && (cfg.coeff_low..=cfg.coeff_high).contains(&c));
                }
            }
        }
    }

    #[test]
    fn degenerate_bounds_give_constants() {
        let cfg = SamplerConfig {
            max_terms: 1,
            max_total_degree: 0,
            ..SamplerConfig::integers_default()
        };
        for i in 0..100 {
            let p = sample_polynomial(&mut sample_rng(2, i), &cfg);
            assert_eq!(p.len(), 1);
            assert_eq!(p.total_degree(), 0);
        }
    }

    #[test]
    fn term_count_capped_by_monomial_supply() {
        let cfg = SamplerConfig {
            max_terms: 10,
            max_total_degree: 1,
            ..SamplerConfig::integers_default()
        };
        assert_eq!(cfg.effective_max_terms(), 3);
        for i in 0..200 {
            assert!(sample_polynomial(&mut sample_rng(4, i), &cfg).len() <= 3);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SamplerConfig::integers_default();
        cfg.max_terms = 0;
        assert_eq!(cfg.validate(), Err(SamplerError::NoTerms));
        let mut cfg = SamplerConfig::integers_default();
        cfg.coeff_low = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = SamplerConfig::integers_default();
        cfg.coeff_low = 0;
        cfg.coeff_high = 0;
        assert!(matches!(cfg.validate(), Err(SamplerError::OnlyZero { .. })));
        let mut cfg = SamplerConfig::prime_field_default(Ring::F7);
        cfg.coeff_high = 2;
        assert_eq!(cfg.validate(), Err(SamplerError::NotBalanced { max: 3 }));
    }

    // Chi-square critical values at p = 0.001.
    const CHI2_DF2: f64 = 13.816;
    const CHI2_DF5: f64 = 20.515;

    #[test]
    fn histograms_match_sampling_scheme() {
        let n = 100_000u64;
        let cfg = SamplerConfig::prime_field_default(Ring::F7);
        let mut term_counts = [0u64; 3];
        let mut coeff_counts: HashMap<i64, u64> = HashMap::new();
        let mut mono_counts: HashMap<Vec<u32>, u64> = HashMap::new();
        let mut total_terms = 0u64;
        for i in 0..n {
            let p = sample_polynomial(&mut sample_rng(99, i), &cfg);
            term_counts[p.len() - 1] += 1;
            for (m, c) in p.terms() {
                *coeff_counts.entry(c).or_default() += 1;
                *mono_counts.entry(m.exponents().to_vec()).or_default() += 1;
                total_terms += 1;
            }
        }
        let stat = chi_square(&term_counts, &[n as f64 / 3.0; 3]);
        assert!(stat < CHI2_DF2, "term counts {term_counts:?} chi2 {stat}");

        let values = cfg.nonzero_coefficients();
        let obs: Vec<u64> = values.iter().map(|v| coeff_counts[v]).collect();
        let stat = chi_square(&obs, &[total_terms as f64 / 6.0; 6]);
        assert!(stat < CHI2_DF5, "coefficients {obs:?} chi2 {stat}");

        // Each of the 6 monomials is equally likely to be chosen.
        let obs: Vec<u64> = cfg.monomials().iter().map(|m| mono_counts[m.exponents()]).collect();
        let stat = chi_square(&obs, &[total_terms as f64 / 6.0; 6]);
        assert!(stat < CHI2_DF5, "monomials {obs:?} chi2 {stat}");
    }
}
