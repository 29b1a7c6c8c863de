//! Token vocabulary and the expression-tuple <-> token-id mapping.
//!
//! A tuple `(e1, ..., ek)` encodes as `> e1 | e2 | ... | ek <`. A polynomial
//! term is `[sign] C|c| E a1 ... E an`: the first term carries `-` only when
//! negative, later terms carry `+` or `-`. The zero polynomial is `C0 E0 .. E0`.
//! Integers are digit strings `[-] D.. D..`, most significant digit first.
//!
//! For example `(x + y, x - y)` over two variables becomes
//! `> C1 E1 E0 + C1 E0 E1 | C1 E1 E0 - C1 E0 E1 <`.

use std::collections::HashMap;

use num_bigint::{BigInt, Sign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::Expression;
use crate::poly::Polynomial;
use crate::ring::Ring;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const PLUS: u32 = 4;
pub const MINUS: u32 = 5;

const SPECIALS: [&str; 6] = ["<pad>", ">", "<", "|", "+", "-"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("coefficient {0} is outside the vocabulary")]
    CoefficientOov(i64),
    #[error("exponent {0} is outside the vocabulary")]
    ExponentOov(u32),
    #[error("integer {0} cannot be tokenized: vocabulary has no digit tokens")]
    IntegerOov(String),
    #[error("polynomial has {got} variables, vocabulary expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("cannot encode an empty tuple")]
    Empty,
    #[error("vocabulary file: {0}")]
    BadVocabulary(String),
}

/// Structured failure to read a token sequence back into expressions.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed sequence at token {position}: {reason}")]
pub struct MalformedSequence {
    pub position: usize,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub emax: u32,
    pub cmax: u32,
    pub num_vars: usize,
    pub integer_mode: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    config: TokenizerConfig,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    c_base: u32,
    e_base: u32,
    d_base: Option<u32>,
}

impl Vocabulary {
    /// Specials first, then `C0..Ccmax`, `E0..Eemax`, and `D0..D9` in
    /// integer mode.
    pub fn build(config: TokenizerConfig) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let c_base = tokens.len() as u32;
        tokens.extend((0..=config.cmax).map(|c| format!("C{c}")));
        let e_base = tokens.len() as u32;
        tokens.extend((0..=config.emax).map(|e| format!("E{e}")));
        let d_base = config.integer_mode.then(|| {
            let base = tokens.len() as u32;
            tokens.extend((0..10).map(|d| format!("D{d}")));
            base
        });
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary {
            config,
            tokens,
            index,
            c_base,
            e_base,
            d_base,
        }
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number (0-based) is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// Reads the line format back. `num_vars` is not recoverable from the
    /// token list and must be supplied.
    pub fn from_text(text: &str, num_vars: usize) -> Result<Self, TokenizeError> {
        let tokens: Vec<&str> = text.lines().collect();
        let count = |prefix: char| {
            tokens
                .iter()
                .filter(|t| t.len() > 1 && t.starts_with(prefix) && t[1..].bytes().all(|b| b.is_ascii_digit()))
                .count() as u32
        };
        let (nc, ne, nd) = (count('C'), count('E'), count('D'));
        if nc == 0 || ne == 0 || !(nd == 0 || nd == 10) {
            return Err(TokenizeError::BadVocabulary(
                "token list does not describe a vocabulary".into(),
            ));
        }
        let vocab = Self::build(TokenizerConfig {
            emax: ne - 1,
            cmax: nc - 1,
            num_vars,
            integer_mode: nd == 10,
        });
        if vocab.tokens.iter().map(String::as_str).ne(tokens.iter().copied()) {
            return Err(TokenizeError::BadVocabulary(
                "token order differs from the canonical layout".into(),
            ));
        }
        Ok(vocab)
    }

    /// SHA-256 of [`Vocabulary::to_text`] together with the variable count,
    /// hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.update(format!("num_vars={}\n", self.config.num_vars).as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn render(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<oov>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn coeff_id(&self, c: u64) -> Option<u32> {
        (c <= u64::from(self.config.cmax)).then(|| self.c_base + c as u32)
    }

    fn exp_id(&self, e: u32) -> Option<u32> {
        (e <= self.config.emax).then(|| self.e_base + e)
    }

    fn classify(&self, id: u32) -> Tok {
        match id {
            PAD => Tok::Pad,
            BOS => Tok::Bos,
            EOS => Tok::Eos,
            SEP => Tok::Sep,
            PLUS => Tok::Plus,
            MINUS => Tok::Minus,
            _ if id >= self.c_base && id < self.e_base => Tok::Coeff(id - self.c_base),
            _ if id >= self.e_base && id <= self.e_base + self.config.emax => Tok::Exp(id - self.e_base),
            _ => match self.d_base {
                Some(d) if id >= d && id < d + 10 => Tok::Digit(id - d),
                _ => Tok::Unknown,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tok {
    Pad,
    Bos,
    Eos,
    Sep,
    Plus,
    Minus,
    Coeff(u32),
    Exp(u32),
    Digit(u32),
    Unknown,
}

/// Token ids of one complete sequence, `BOS ... EOS`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode(exprs: &[Expression], vocab: &Vocabulary) -> Result<TokenSequence, TokenizeError> {
    if exprs.is_empty() {
        return Err(TokenizeError::Empty);
    }
    let mut ids = vec![BOS];
    for (i, e) in exprs.iter().enumerate() {
        if i > 0 {
            ids.push(SEP);
        }
        match e {
            Expression::Poly(p) => encode_poly(p, vocab, &mut ids)?,
            Expression::Integer(n) => encode_integer(n, vocab, &mut ids)?,
        }
    }
    ids.push(EOS);
    Ok(TokenSequence { ids })
}

fn encode_poly(p: &Polynomial, vocab: &Vocabulary, ids: &mut Vec<u32>) -> Result<(), TokenizeError> {
    let n = vocab.config.num_vars;
    if p.num_vars() != n {
        return Err(TokenizeError::Arity {
            expected: n,
            got: p.num_vars(),
        });
    }
    if p.is_zero() {
        ids.push(vocab.coeff_id(0).expect("C0 always present"));
        let e0 = vocab.exp_id(0).expect("E0 always present");
        ids.extend(std::iter::repeat_n(e0, n));
        return Ok(());
    }
    for (k, (m, c)) in p.terms().enumerate() {
        if c < 0 {
            ids.push(MINUS);
        } else if k > 0 {
            ids.push(PLUS);
        }
        ids.push(
            vocab
                .coeff_id(c.unsigned_abs())
                .ok_or(TokenizeError::CoefficientOov(c))?,
        );
        for &e in m.exponents() {
            ids.push(vocab.exp_id(e).ok_or(TokenizeError::ExponentOov(e))?);
        }
    }
    Ok(())
}

fn encode_integer(n: &BigInt, vocab: &Vocabulary, ids: &mut Vec<u32>) -> Result<(), TokenizeError> {
    let d_base = vocab.d_base.ok_or_else(|| TokenizeError::IntegerOov(n.to_string()))?;
    let (sign, digits) = n.to_radix_be(10);
    if sign == Sign::Minus {
        ids.push(MINUS);
    }
    ids.extend(digits.iter().map(|&d| d_base + u32::from(d)));
    Ok(())
}

/// Number of tokens [`encode`] produces for a polynomial entry, excluding
/// BOS/EOS/SEP.
pub fn poly_token_len(p: &Polynomial) -> usize {
    let n = p.num_vars();
    if p.is_zero() {
        return 1 + n;
    }
    p.terms()
        .enumerate()
        .map(|(k, (_, c))| usize::from(c < 0 || k > 0) + 1 + n)
        .sum()
}

struct Cursor<'a> {
    ids: &'a [u32],
    at: usize,
    vocab: &'a Vocabulary,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<Tok> {
        self.ids.get(self.at).map(|&i| self.vocab.classify(i))
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, MalformedSequence> {
        Err(MalformedSequence {
            position: self.at,
            reason: reason.into(),
        })
    }
}

/// Reads a token sequence back into expressions. Never panics on arbitrary
/// input; anything outside the encoder's grammar is a [`MalformedSequence`].
/// Repeated monomials in a polynomial are combined.
pub fn decode(ids: &[u32], vocab: &Vocabulary, ring: Ring) -> Result<Vec<Expression>, MalformedSequence> {
    let mut cur = Cursor { ids, at: 0, vocab };
    if cur.peek() != Some(Tok::Bos) {
        return cur.fail("sequence must start with `>`");
    }
    cur.at += 1;
    let mut out = Vec::new();
    loop {
        out.push(decode_entry(&mut cur, ring)?);
        match cur.peek() {
            Some(Tok::Sep) => cur.at += 1,
            Some(Tok::Eos) => {
                cur.at += 1;
                break;
            }
            Some(t) => return cur.fail(format!("unexpected {t:?} after entry")),
            None => return cur.fail("missing `<`"),
        }
    }
    if cur.at != ids.len() {
        return cur.fail("tokens after `<`");
    }
    Ok(out)
}

fn decode_entry(cur: &mut Cursor<'_>, ring: Ring) -> Result<Expression, MalformedSequence> {
    let negative = cur.peek() == Some(Tok::Minus);
    let lead = cur
        .ids
        .get(cur.at + usize::from(negative))
        .map(|&i| cur.vocab.classify(i));
    match lead {
        Some(Tok::Digit(_)) => decode_integer(cur),
        Some(Tok::Coeff(_)) => decode_poly(cur, ring),
        _ => cur.fail("expected a coefficient or digit"),
    }
}

fn decode_integer(cur: &mut Cursor<'_>) -> Result<Expression, MalformedSequence> {
    let negative = cur.peek() == Some(Tok::Minus);
    if negative {
        cur.at += 1;
    }
    let start = cur.at;
    let mut digits = Vec::new();
    while let Some(Tok::Digit(d)) = cur.peek() {
        digits.push(d as u8);
        cur.at += 1;
    }
    if digits.len() > 1 && digits[0] == 0 {
        return Err(MalformedSequence {
            position: start,
            reason: "leading zero".into(),
        });
    }
    if negative && digits == [0] {
        return Err(MalformedSequence {
            position: start,
            reason: "negative zero".into(),
        });
    }
    let sign = if negative { Sign::Minus } else { Sign::Plus };
    let n = BigInt::from_radix_be(sign, &digits, 10).expect("digits are base 10");
    Ok(Expression::Integer(n))
}

fn decode_poly(cur: &mut Cursor<'_>, ring: Ring) -> Result<Expression, MalformedSequence> {
    let n = cur.vocab.config.num_vars;
    let start = cur.at;
    let mut terms: Vec<(Vec<u32>, i64)> = Vec::new();
    loop {
        let sign = match cur.peek() {
            Some(Tok::Minus) => {
                cur.at += 1;
                -1
            }
            Some(Tok::Plus) if !terms.is_empty() => {
                cur.at += 1;
                1
            }
            Some(Tok::Plus) => return cur.fail("leading `+`"),
            _ if terms.is_empty() => 1,
            _ => break,
        };
        let c = match cur.peek() {
            Some(Tok::Coeff(c)) => i64::from(c),
            _ => return cur.fail("expected a coefficient token"),
        };
        cur.at += 1;
        let mut exps = Vec::with_capacity(n);
        for _ in 0..n {
            match cur.peek() {
                Some(Tok::Exp(e)) => exps.push(e),
                _ => return cur.fail(format!("expected {n} exponent tokens")),
            }
            cur.at += 1;
        }
        terms.push((exps, sign * c));
        if !matches!(cur.peek(), Some(Tok::Plus | Tok::Minus)) {
            break;
        }
    }
    let p = Polynomial::from_terms(ring, n, terms).map_err(|e| MalformedSequence {
        position: start,
        reason: e.to_string(),
    })?;
    Ok(Expression::Poly(p))
}
