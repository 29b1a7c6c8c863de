//! Sparse multivariate polynomials over [`Ring`].
//!
//! Terms live in a `BTreeMap` keyed by [`Monomial`], whose `Ord` is the
//! canonical display order (graded-lex, largest first), so iterating the map
//! yields terms exactly as they are printed and tokenized.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ring::Ring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("ring mismatch: {0} vs {1}")]
    RingMismatch(Ring, Ring),
    #[error("variable count mismatch: {0} vs {1}")]
    VarCountMismatch(usize, usize),
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("coefficient overflow")]
    Overflow,
    #[error("monomial has {got} exponents, expected {expected}")]
    Arity { expected: usize, got: usize },
}

/// Exponent vector of a monomial.
///
/// Ordered by total degree descending, then lexicographically descending on
/// the exponents, so `x^2 < x*y < y^2 < x < y < 1` under `Ord`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(num_vars: usize) -> Self {
        Monomial(vec![0; num_vars])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All monomials in `num_vars` variables of total degree at most
    /// `max_degree`, in canonical order.
    pub fn all_up_to_degree(num_vars: usize, max_degree: u32) -> Vec<Monomial> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; num_vars];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
            if i == cur.len() {
                out.push(Monomial(cur.clone()));
                return;
            }
            for e in 0..=left {
                cur[i] = e;
                rec(i + 1, left - e, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, max_degree, &mut cur, &mut out);
        out.sort();
        out
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        other.degree().cmp(&self.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A polynomial with nonzero, ring-reduced coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Polynomial {
    ring: Ring,
    num_vars: usize,
    terms: BTreeMap<Monomial, i64>,
}

impl Polynomial {
    pub fn zero(ring: Ring, num_vars: usize) -> Self {
        Polynomial {
            ring,
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ring: Ring, num_vars: usize, c: i64) -> Self {
        let mut p = Self::zero(ring, num_vars);
        p.add_term(Monomial::one(num_vars), c);
        p
    }

    /// Builds a polynomial from possibly repeated, unordered terms.
    /// Coefficients are combined and reduced; zeros are dropped.
    pub fn from_terms<I>(ring: Ring, num_vars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, i64)>,
    {
        let mut acc: BTreeMap<Monomial, i128> = BTreeMap::new();
        for (exps, c) in terms {
            if exps.len() != num_vars {
                return Err(PolyError::Arity {
                    expected: num_vars,
                    got: exps.len(),
                });
            }
            let slot = acc.entry(Monomial(exps)).or_insert(0);
            *slot = slot.checked_add(i128::from(c)).ok_or(PolyError::Overflow)?;
        }
        Self::from_wide(ring, num_vars, acc)
    }

    fn from_wide(ring: Ring, num_vars: usize, acc: BTreeMap<Monomial, i128>) -> Result<Self, PolyError> {
        let mut terms = BTreeMap::new();
        for (m, c) in acc {
            let c = ring.reduce_wide(c);
            if c != 0 {
                terms.insert(m, i64::try_from(c).map_err(|_| PolyError::Overflow)?);
            }
        }
        Ok(Polynomial { ring, num_vars, terms })
    }

    fn add_term(&mut self, m: Monomial, c: i64) {
        let c = self.ring.reduce(c);
        if c != 0 {
            self.terms.insert(m, c);
        }
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, i64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> i64 {
        self.terms.values().map(|c| c.abs()).max().unwrap_or(0)
    }

    fn check_compatible(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.ring != other.ring {
            return Err(PolyError::RingMismatch(self.ring, other.ring));
        }
        if self.num_vars != other.num_vars {
            return Err(PolyError::VarCountMismatch(self.num_vars, other.num_vars));
        }
        Ok(())
    }

    /// Fully expanded product.
    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_compatible(other)?;
        let mut acc: BTreeMap<Monomial, i128> = BTreeMap::new();
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                let slot = acc.entry(ma.mul(mb)).or_insert(0);
                *slot = slot
                    .checked_add(i128::from(ca) * i128::from(cb))
                    .ok_or(PolyError::Overflow)?;
            }
        }
        Self::from_wide(self.ring, self.num_vars, acc)
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_compatible(other)?;
        let mut acc: BTreeMap<Monomial, i128> = BTreeMap::new();
        for (m, &c) in self.terms.iter().chain(&other.terms) {
            *acc.entry(m.clone()).or_insert(0) += i128::from(c);
        }
        Self::from_wide(self.ring, self.num_vars, acc)
    }

    /// Evaluates at an integer point; the result is reduced in the ring.
    pub fn eval(&self, point: &[i64]) -> Result<i128, PolyError> {
        if point.len() != self.num_vars {
            return Err(PolyError::Arity {
                expected: self.num_vars,
                got: point.len(),
            });
        }
        let mut sum: i128 = 0;
        for (m, &c) in &self.terms {
            let mut t = i128::from(c);
            for (&x, &e) in point.iter().zip(m.exponents()) {
                let pw = i128::from(x).checked_pow(e).ok_or(PolyError::Overflow)?;
                t = t.checked_mul(pw).ok_or(PolyError::Overflow)?;
            }
            sum = sum.checked_add(t).ok_or(PolyError::Overflow)?;
        }
        Ok(self.ring.reduce_wide(sum))
    }
}

/// Left-fold product of a nonempty slice of polynomials.
pub fn product(factors: &[Polynomial]) -> Result<Polynomial, PolyError> {
    let (first, rest) = factors.split_first().expect("product of an empty factor list");
    rest.iter().try_fold(first.clone(), |acc, f| acc.mul(f))
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parse::poly_to_string(self))
    }
}
