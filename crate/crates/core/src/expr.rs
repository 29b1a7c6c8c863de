use std::fmt;

use num_bigint::BigInt;

use crate::parse::{parse_poly, poly_to_string, ParseError};
use crate::poly::Polynomial;
use crate::ring::Ring;

/// One entry of an input or output tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expression {
    Integer(BigInt),
    Poly(Polynomial),
}

impl Expression {
    pub fn as_poly(&self) -> Option<&Polynomial> {
        match self {
            Expression::Poly(p) => Some(p),
            Expression::Integer(_) => None,
        }
    }

    pub fn as_integer(&self) -> Option<&BigInt> {
        match self {
            Expression::Integer(n) => Some(n),
            Expression::Poly(_) => None,
        }
    }

    pub fn parse_integer(s: &str) -> Result<Expression, ParseError> {
        let t = s.trim();
        let digits = t.strip_prefix('-').unwrap_or(t);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            let offset = s.len() - s.trim_start().len();
            return Err(ParseError::Syntax {
                pos: offset,
                msg: format!("expected an integer, found `{t}`"),
            });
        }
        Ok(Expression::Integer(t.parse().expect("validated digits")))
    }

    pub fn parse_poly(s: &str, ring: Ring, num_vars: usize) -> Result<Expression, ParseError> {
        parse_poly(s, ring, num_vars).map(Expression::Poly)
    }
}

impl From<Polynomial> for Expression {
    fn from(p: Polynomial) -> Self {
        Expression::Poly(p)
    }
}

impl From<u64> for Expression {
    fn from(n: u64) -> Self {
        Expression::Integer(BigInt::from(n))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Integer(n) => write!(f, "{n}"),
            Expression::Poly(p) => f.write_str(&poly_to_string(p)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_parse_strictly() {
        assert_eq!(
            Expression::parse_integer(" 108606433 ").unwrap(),
            Expression::from(108_606_433u64)
        );
        assert_eq!(Expression::parse_integer("-12").unwrap().to_string(), "-12");
        assert!(Expression::parse_integer("12x").is_err());
        assert!(Expression::parse_integer("-").is_err());
        assert!(Expression::parse_integer("").is_err());
    }
}
