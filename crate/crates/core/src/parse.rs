//! Canonical text form of polynomials.
//!
//! Grammar accepted by [`parse_poly`] (whitespace between tokens is ignored):
//!
//! ```text
//! poly   := sign? term (sign term)*
//! sign   := '+' | '-'
//! term   := factor ('*' factor)*
//! factor := INT | VAR ('^' INT)?
//! ```
//!
//! Variables are `x, y, z` for up to three variables and `x1 .. xn` beyond.
//! Repeated monomials and any term order are accepted; the result is always
//! canonical. [`poly_to_string`] emits the canonical subset: terms in
//! graded-lex order, `1` coefficients elided except on constants, `^1` and
//! zero exponents elided, ` + ` / ` - ` between terms.

use thiserror::Error;

use crate::poly::{PolyError, Polynomial};
use crate::ring::Ring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("negative exponent at byte {pos}")]
    NegativeExponent { pos: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

pub fn var_names(num_vars: usize) -> Vec<String> {
    if num_vars <= 3 {
        ["x", "y", "z"][..num_vars].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=num_vars).map(|i| format!("x{i}")).collect()
    }
}

pub fn poly_to_string(p: &Polynomial) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let names = var_names(p.num_vars());
    let mut out = String::new();
    for (i, (m, c)) in p.terms().enumerate() {
        let mag = c.unsigned_abs();
        if i == 0 {
            if c < 0 {
                out.push('-');
            }
        } else {
            out.push_str(if c < 0 { " - " } else { " + " });
        }
        let mut parts: Vec<String> = Vec::new();
        if mag != 1 || m.is_one() {
            parts.push(mag.to_string());
        }
        for (name, &e) in names.iter().zip(m.exponents()) {
            match e {
                0 => {}
                1 => parts.push(name.clone()),
                _ => parts.push(format!("{name}^{e}")),
            }
        }
        out.push_str(&parts.join("*"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(u64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
}

fn lex(s: &str, names: &[String]) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                out.push((i, Tok::Plus));
                i += 1;
            }
            b'-' => {
                out.push((i, Tok::Minus));
                i += 1;
            }
            b'*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            b'^' => {
                out.push((i, Tok::Caret));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v = s[start..i].parse::<u64>().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: "integer literal too large".into(),
                })?;
                out.push((start, Tok::Int(v)));
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let word = &s[start..i];
                let idx = names.iter().position(|n| n == word).ok_or_else(|| ParseError::Syntax {
                    pos: start,
                    msg: format!("unknown variable `{word}`"),
                })?;
                out.push((start, Tok::Var(idx)));
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{}`", s[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        self.at += 1;
        t
    }

    fn err<T>(&self, msg: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            msg: msg.to_string(),
        })
    }

    fn term(&mut self, num_vars: usize) -> Result<(Vec<u32>, i128), ParseError> {
        let mut exps = vec![0u32; num_vars];
        let mut coeff: i128 = 1;
        loop {
            match self.bump() {
                Some(Tok::Int(v)) => {
                    coeff = coeff
                        .checked_mul(i128::from(v))
                        .ok_or(ParseError::Poly(PolyError::Overflow))?;
                }
                Some(Tok::Var(idx)) => {
                    let mut e = 1u32;
                    if self.peek() == Some(&Tok::Caret) {
                        self.bump();
                        let at = self.pos();
                        match self.bump() {
                            Some(Tok::Int(v)) => {
                                e = u32::try_from(v).map_err(|_| ParseError::Syntax {
                                    pos: at,
                                    msg: "exponent too large".into(),
                                })?;
                            }
                            Some(Tok::Minus) => return Err(ParseError::NegativeExponent { pos: at }),
                            _ => {
                                self.at -= 1;
                                return self.err("expected exponent after `^`");
                            }
                        }
                    }
                    exps[idx] = exps[idx].checked_add(e).ok_or(ParseError::Syntax {
                        pos: self.pos(),
                        msg: "exponent too large".into(),
                    })?;
                }
                _ => {
                    self.at -= 1;
                    return self.err("expected a number or variable");
                }
            }
            if self.peek() == Some(&Tok::Star) {
                self.bump();
            } else {
                return Ok((exps, coeff));
            }
        }
    }
}

/// Parses a polynomial in `num_vars` variables over `ring`.
pub fn parse_poly(s: &str, ring: Ring, num_vars: usize) -> Result<Polynomial, ParseError> {
    let names = var_names(num_vars);
    let toks = lex(s, &names)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: s.len(),
    };
    if p.peek().is_none() {
        return p.err("empty polynomial");
    }
    let mut terms: Vec<(Vec<u32>, i128)> = Vec::new();
    let mut first = true;
    while p.peek().is_some() {
        let sign: i128 = match p.peek() {
            Some(Tok::Minus) => {
                p.bump();
                -1
            }
            Some(Tok::Plus) => {
                p.bump();
                1
            }
            _ if first => 1,
            _ => return p.err("expected `+` or `-` between terms"),
        };
        first = false;
        let (exps, c) = p.term(num_vars)?;
        terms.push((exps, sign * c));
    }
    // Combine in i128 before narrowing so large cancelling inputs still parse.
    let mut acc = std::collections::BTreeMap::<Vec<u32>, i128>::new();
    for (e, c) in terms {
        let slot = acc.entry(e).or_insert(0);
        *slot = slot.checked_add(c).ok_or(PolyError::Overflow)?;
    }
    let narrowed = acc
        .into_iter()
        .map(|(e, c)| {
            let c = ring.reduce_wide(c);
            i64::try_from(c).map(|c| (e, c)).map_err(|_| PolyError::Overflow)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Polynomial::from_terms(ring, num_vars, narrowed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_sum() {
        let p = parse_poly("x + y", Ring::Integers, 2).unwrap();
        let terms: Vec<_> = p.terms().map(|(m, c)| (m.exponents().to_vec(), c)).collect();
        assert_eq!(terms, vec![(vec![1, 0], 1), (vec![0, 1], 1)]);
        assert_eq!(poly_to_string(&p), "x + y");
    }

    #[test]
    fn cancels_to_zero_mod_seven() {
        let p = parse_poly("3*x + 4*x", Ring::F7, 2).unwrap();
        assert!(p.is_zero());
        assert_eq!(poly_to_string(&p), "0");
    }

    #[test]
    fn zero_round_trips() {
        let p = parse_poly("0", Ring::Integers, 2).unwrap();
        assert!(p.is_zero());
        assert_eq!(poly_to_string(&p), "0");
    }

    #[test]
    fn constants_keep_their_one() {
        let p = parse_poly("-1", Ring::Integers, 2).unwrap();
        assert_eq!(poly_to_string(&p), "-1");
        let p = parse_poly("x - 1", Ring::Integers, 2).unwrap();
        assert_eq!(poly_to_string(&p), "x - 1");
    }

    #[test]
    fn unordered_and_spaced_input_is_canonicalized() {
        let p = parse_poly(" y+x^2 -  2 * y * x+x ^ 2", Ring::Integers, 2).unwrap();
        assert_eq!(poly_to_string(&p), "2*x^2 - 2*x*y + y");
    }

    #[test]
    fn repeated_variables_multiply() {
        let p = parse_poly("x*x*y", Ring::Integers, 2).unwrap();
        assert_eq!(poly_to_string(&p), "x^2*y");
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_poly("x + * y", Ring::Integers, 2) {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse_poly("x y", Ring::Integers, 2) {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_poly("x + w", Ring::Integers, 2),
            Err(ParseError::Syntax { pos: 4, .. })
        ));
        assert!(parse_poly("", Ring::Integers, 2).is_err());
        assert!(parse_poly("x +", Ring::Integers, 2).is_err());
        assert!(parse_poly("x # y", Ring::Integers, 2).is_err());
    }

    #[test]
    fn negative_exponent_rejected() {
        assert_eq!(
            parse_poly("x^-2", Ring::Integers, 2),
            Err(ParseError::NegativeExponent { pos: 2 })
        );
    }

    #[test]
    fn many_variable_names() {
        assert_eq!(var_names(2), vec!["x", "y"]);
        assert_eq!(var_names(4), vec!["x1", "x2", "x3", "x4"]);
        let p = parse_poly("x1*x4^2 + 1", Ring::Integers, 4).unwrap();
        assert_eq!(poly_to_string(&p), "x1*x4^2 + 1");
    }
}
