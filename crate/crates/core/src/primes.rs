use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrimeError {
    #[error("cannot factor {0}: input must be at least 2")]
    TooSmall(String),
    #[error("need {needed} distinct primes but only {available} are <= {bound}")]
    NotEnoughPrimes {
        needed: usize,
        available: usize,
        bound: u64,
    },
    #[error("invalid prime-count range {t_min}..={t_max}")]
    BadRange { t_min: usize, t_max: usize },
}

/// Primes up to and including `bound`, ascending.
pub fn primes_up_to(bound: u64) -> Vec<u64> {
    if bound < 2 {
        return Vec::new();
    }
    let n = bound as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut j = i * i;
            while j <= n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| p.then_some(k as u64))
        .collect()
}

/// Draws `t ~ U{t_min..=t_max}` distinct primes `<= prime_bound`, sorted
/// ascending.
///
/// The subset is drawn by a partial Fisher-Yates shuffle of the prime list.
pub fn sample_prime_set<R: Rng + ?Sized>(
    rng: &mut R,
    t_min: usize,
    t_max: usize,
    prime_bound: u64,
) -> Result<Vec<u64>, PrimeError> {
    if t_min == 0 || t_min > t_max {
        return Err(PrimeError::BadRange { t_min, t_max });
    }
    let mut pool = primes_up_to(prime_bound);
    if t_max > pool.len() {
        return Err(PrimeError::NotEnoughPrimes {
            needed: t_max,
            available: pool.len(),
            bound: prime_bound,
        });
    }
    let t = rng.random_range(t_min..=t_max);
    for i in 0..t {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut chosen = pool[..t].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Prime factors of `n` with multiplicity, ascending.
pub fn trial_division_factorize(n: &BigUint) -> Result<Vec<BigUint>, PrimeError> {
    if *n < BigUint::from(2u32) {
        return Err(PrimeError::TooSmall(n.to_string()));
    }
    if let Some(small) = n.to_u64() {
        return Ok(factor_u64(small).into_iter().map(BigUint::from).collect());
    }
    let mut rest = n.clone();
    let mut out = Vec::new();
    let mut d = BigUint::from(2u32);
    while &d * &d <= rest {
        while (&rest % &d).is_zero() {
            rest /= &d;
            out.push(d.clone());
        }
        d += 1u32;
    }
    if rest > BigUint::from(1u32) {
        out.push(rest);
    }
    Ok(out)
}

pub fn factor_u64(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        while n.is_multiple_of(d) {
            n /= d;
            out.push(d);
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}
