use std::fmt;

use serde::{Deserialize, Serialize};

use crate::poly::PolyError;

/// Coefficient ring of a polynomial: the integers or a prime field.
///
/// Prime-field elements are kept as balanced residues, i.e. in
/// `[-(p-1)/2, (p-1)/2]`; for `p = 7` that is `{-3, ..., 3}`. For `p = 2`
/// the representatives are `{0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ring {
    Integers,
    PrimeField { modulus: u32 },
}

impl Ring {
    /// The field of seven elements used by the polynomial tasks.
    pub const F7: Ring = Ring::PrimeField { modulus: 7 };

    pub fn prime_field(modulus: u32) -> Result<Ring, PolyError> {
        if !is_prime(u64::from(modulus)) {
            return Err(PolyError::NotPrime(modulus));
        }
        Ok(Ring::PrimeField { modulus })
    }

    pub fn modulus(&self) -> Option<u32> {
        match *self {
            Ring::Integers => None,
            Ring::PrimeField { modulus } => Some(modulus),
        }
    }

    /// Maps an integer to its canonical representative in this ring.
    pub fn reduce(&self, c: i64) -> i64 {
        match *self {
            Ring::Integers => c,
            Ring::PrimeField { modulus } => {
                let p = i64::from(modulus);
                let r = c.rem_euclid(p);
                if r > p / 2 {
                    r - p
                } else {
                    r
                }
            }
        }
    }

    pub fn reduce_wide(&self, c: i128) -> i128 {
        match *self {
            Ring::Integers => c,
            Ring::PrimeField { modulus } => {
                let p = i128::from(modulus);
                let r = c.rem_euclid(p);
                if r > p / 2 {
                    r - p
                } else {
                    r
                }
            }
        }
    }

    /// Largest coefficient magnitude a reduced element can have, if bounded.
    pub fn max_abs_coeff(&self) -> Option<i64> {
        self.modulus().map(|p| i64::from(p) / 2)
    }
}

impl fmt::Display for Ring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ring::Integers => write!(f, "ZZ"),
            Ring::PrimeField { modulus } => write!(f, "GF({modulus})"),
        }
    }
}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}
