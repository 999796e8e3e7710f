//! Concrete syntax for STL formulae.
//!
//! ```text
//! formula := or
//! or      := and ('|' and)*
//! and     := term ('&' term)*
//! term    := ('G' | 'F') '[' int ',' int ']' '(' or ')'
//!          | '(' or ')'
//!          | ['!'] linear
//! linear  := affine cmp affine [cmp affine]      // chained form desugars to a conjunction
//! cmp     := '<=' | '>='
//! affine  := ['-'] part (('+' | '-') part)*
//! part    := number '*' var | var | number
//! var     := 'x' digits
//! ```
//!
//! `&` binds tighter than `|`. `>=` is normalized to `<=` by sign flip and
//! all constants are moved to the right-hand side, so every atom becomes a
//! [`Predicate`] `coeffs·x ≤ bound`. Negation applies to single predicates
//! only. Whitespace is insignificant.

use super::{Formula, Interval, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl ParseError {
    fn new(pos: usize, message: impl Into<String>) -> Self {
        Self {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Globally,
    Finally,
    Var(usize),
    Num(f64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Bang,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    Eof,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let pos = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'G' => toks.push((Tok::Globally, pos)),
            b'F' => toks.push((Tok::Finally, pos)),
            b'[' => toks.push((Tok::LBracket, pos)),
            b']' => toks.push((Tok::RBracket, pos)),
            b'(' => toks.push((Tok::LParen, pos)),
            b')' => toks.push((Tok::RParen, pos)),
            b',' => toks.push((Tok::Comma, pos)),
            b'&' => toks.push((Tok::Amp, pos)),
            b'|' => toks.push((Tok::Pipe, pos)),
            b'!' => toks.push((Tok::Bang, pos)),
            b'+' => toks.push((Tok::Plus, pos)),
            b'-' => toks.push((Tok::Minus, pos)),
            b'*' => toks.push((Tok::Star, pos)),
            b'<' | b'>' => {
                if i + 1 >= bytes.len() || bytes[i + 1] != b'=' {
                    return Err(ParseError::new(pos, "expected '<=' or '>='"));
                }
                toks.push((if b == b'<' { Tok::Le } else { Tok::Ge }, pos));
                i += 2;
                continue;
            }
            b'x' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j == start {
                    return Err(ParseError::new(pos, "expected variable index after 'x'"));
                }
                let idx: usize = text[start..j]
                    .parse()
                    .map_err(|_| ParseError::new(pos, "variable index out of range"))?;
                toks.push((Tok::Var(idx), pos));
                i = j;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    j += 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let v: f64 = text[start..j]
                    .parse()
                    .map_err(|_| ParseError::new(pos, "malformed number"))?;
                toks.push((Tok::Num(v), pos));
                i = j;
                continue;
            }
            _ => {
                return Err(ParseError::new(
                    pos,
                    format!("unexpected character {:?}", b as char),
                ))
            }
        }
        i += 1;
    }
    toks.push((Tok::Eof, bytes.len()));
    Ok(toks)
}

/// Affine expression `coeffs·x + constant` accumulated during parsing.
struct Affine {
    coeffs: Vec<f64>,
    constant: f64,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    state_dim: usize,
}

/// Parse `text` into a [`Formula`] over variables `x0..x{state_dim-1}`.
pub fn parse(text: &str, state_dim: usize) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        state_dim,
    };
    let f = p.parse_or()?;
    let (tok, pos) = p.peek();
    if tok != Tok::Eof {
        return Err(ParseError::new(pos, "unexpected trailing input"));
    }
    Ok(f)
}

impl Parser {
    fn peek(&self) -> (Tok, usize) {
        self.toks[self.at]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at];
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize, ParseError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(pos)
        } else {
            Err(ParseError::new(pos, format!("expected {what}")))
        }
    }

    fn parse_or(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.parse_and()?];
        while self.peek().0 == Tok::Pipe {
            self.bump();
            parts.push(self.parse_and()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn parse_and(&mut self) -> Result<Formula, ParseError> {
        let mut parts = vec![self.parse_term()?];
        while self.peek().0 == Tok::Amp {
            self.bump();
            parts.push(self.parse_term()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn parse_term(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            (Tok::Globally, _) | (Tok::Finally, _) => {
                let (kind, _) = self.bump();
                let iv = self.parse_interval()?;
                self.expect(Tok::LParen, "'('")?;
                let inner = self.parse_or()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(match kind {
                    Tok::Globally => Formula::Globally(iv, Box::new(inner)),
                    _ => Formula::Finally(iv, Box::new(inner)),
                })
            }
            (Tok::Bang, pos) => {
                self.bump();
                match self.peek().0 {
                    Tok::Globally | Tok::Finally => Err(ParseError::new(
                        pos,
                        "negation above a temporal operator is not allowed",
                    )),
                    Tok::LParen => {
                        self.bump();
                        let inner = self.parse_or()?;
                        self.expect(Tok::RParen, "')'")?;
                        match inner {
                            Formula::Pred(p) => Ok(Formula::Not(Box::new(Formula::Pred(p)))),
                            Formula::Globally(..) | Formula::Finally(..) => Err(ParseError::new(
                                pos,
                                "negation above a temporal operator is not allowed",
                            )),
                            _ => Err(ParseError::new(
                                pos,
                                "negation is only allowed on a single predicate",
                            )),
                        }
                    }
                    _ => {
                        let f = self.parse_linear()?;
                        match f {
                            Formula::Pred(p) => Ok(Formula::Not(Box::new(Formula::Pred(p)))),
                            _ => Err(ParseError::new(
                                pos,
                                "negation is only allowed on a single predicate",
                            )),
                        }
                    }
                }
            }
            (Tok::LParen, _) => {
                self.bump();
                let inner = self.parse_or()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            _ => self.parse_linear(),
        }
    }

    fn parse_interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(Tok::LBracket, "'['")?;
        let (start, spos) = self.parse_step()?;
        self.expect(Tok::Comma, "','")?;
        let (end, _) = self.parse_step()?;
        self.expect(Tok::RBracket, "']'")?;
        if start > end {
            return Err(ParseError::new(
                spos,
                format!("malformed interval [{start},{end}]: start exceeds end"),
            ));
        }
        Ok(Interval { start, end })
    }

    fn parse_step(&mut self) -> Result<(usize, usize), ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                Ok((v as usize, pos))
            }
            _ => Err(ParseError::new(pos, "expected a nonnegative integer step")),
        }
    }

    /// `affine cmp affine [cmp affine]`, normalized to `coeffs·x ≤ bound`.
    /// The chained form `a <= e <= b` yields the conjunction of both bounds.
    fn parse_linear(&mut self) -> Result<Formula, ParseError> {
        let first = self.parse_affine()?;
        let (op1, op1_pos) = self.parse_cmp()?;
        let second = self.parse_affine()?;
        if matches!(self.peek().0, Tok::Le | Tok::Ge) {
            let (op2, op2_pos) = self.parse_cmp()?;
            if op2 != op1 {
                return Err(ParseError::new(
                    op2_pos,
                    "chained comparison must use a single direction",
                ));
            }
            let third = self.parse_affine()?;
            let p1 = self.normalize(&first, op1, &second, op1_pos)?;
            let p2 = self.normalize(&second, op2, &third, op2_pos)?;
            return Ok(Formula::And(vec![Formula::Pred(p1), Formula::Pred(p2)]));
        }
        let p = self.normalize(&first, op1, &second, op1_pos)?;
        Ok(Formula::Pred(p))
    }

    fn parse_cmp(&mut self) -> Result<(Tok, usize), ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Le | Tok::Ge => Ok((tok, pos)),
            _ => Err(ParseError::new(pos, "expected '<=' or '>='")),
        }
    }

    /// Move every variable to the left and every constant to the right,
    /// flipping signs for `>=`.
    fn normalize(
        &self,
        lhs: &Affine,
        op: Tok,
        rhs: &Affine,
        pos: usize,
    ) -> Result<Predicate, ParseError> {
        let sign = if op == Tok::Le { 1.0 } else { -1.0 };
        let coeffs: Vec<f64> = lhs
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(l, r)| sign * (l - r))
            .collect();
        let bound = sign * (rhs.constant - lhs.constant);
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(ParseError::new(pos, "predicate contains no variable"));
        }
        if !coeffs.iter().all(|c| c.is_finite()) || !bound.is_finite() {
            return Err(ParseError::new(pos, "predicate coefficients overflow"));
        }
        Ok(Predicate::new(coeffs, bound))
    }

    fn parse_affine(&mut self) -> Result<Affine, ParseError> {
        let mut acc = Affine {
            coeffs: vec![0.0; self.state_dim],
            constant: 0.0,
        };
        let mut sign = 1.0;
        if self.peek().0 == Tok::Minus {
            self.bump();
            sign = -1.0;
        }
        self.parse_affine_part(&mut acc, sign)?;
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.bump();
                    self.parse_affine_part(&mut acc, 1.0)?;
                }
                Tok::Minus => {
                    self.bump();
                    self.parse_affine_part(&mut acc, -1.0)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn parse_affine_part(&mut self, acc: &mut Affine, sign: f64) -> Result<(), ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => {
                if self.peek().0 == Tok::Star {
                    self.bump();
                    let (vt, vpos) = self.bump();
                    match vt {
                        Tok::Var(idx) => {
                            self.check_var(idx, vpos)?;
                            acc.coeffs[idx] += sign * v;
                        }
                        _ => return Err(ParseError::new(vpos, "expected a variable after '*'")),
                    }
                } else {
                    acc.constant += sign * v;
                }
                Ok(())
            }
            Tok::Var(idx) => {
                self.check_var(idx, pos)?;
                acc.coeffs[idx] += sign;
                Ok(())
            }
            _ => Err(ParseError::new(
                pos,
                "expected a number, a variable, or 'coef*var'",
            )),
        }
    }

    fn check_var(&self, idx: usize, pos: usize) -> Result<(), ParseError> {
        if idx >= self.state_dim {
            return Err(ParseError::new(
                pos,
                format!(
                    "unknown variable x{idx}: state dimension is {}",
                    self.state_dim
                ),
            ));
        }
        Ok(())
    }
}
