//! Discrete-time signal temporal logic: syntax tree, Boolean semantics,
//! quantitative (robustness) semantics, and formula horizons.
//!
//! Predicates are linear inequalities `coeffs·x ≤ bound` over the state
//! vector. Temporal operators carry inclusive step intervals. Negation is
//! restricted to sit below the temporal operators; the parser in
//! [`parse`] enforces this, the semantics here are defined for any tree.

mod fragment;
mod parse;

pub use fragment::{validate_fragment, FragmentError, FragmentInfo, SubFormula, TemporalKind};
pub use parse::{parse, ParseError};

use std::fmt;

/// A system state: one real value per declared state dimension.
pub type State = Vec<f64>;

/// Linear predicate `coeffs·x ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    /// One coefficient per state dimension.
    pub coeffs: Vec<f64>,
    /// Right-hand side of the inequality.
    pub bound: f64,
}

impl Predicate {
    pub fn new(coeffs: Vec<f64>, bound: f64) -> Self {
        Self { coeffs, bound }
    }

    /// Signed satisfaction margin `bound − coeffs·x`; nonnegative iff the
    /// predicate holds at `x`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.coeffs.len(), x.len(), "state dimension mismatch");
        let h: f64 = self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
        self.bound - h
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.margin(x) >= 0.0
    }
}

/// Inclusive discrete-time interval `[start, end]` in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "interval start must not exceed end");
        Self { start, end }
    }
}

/// STL formula over linear predicates with bounded G/F operators.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Globally(Interval, Box<Formula>),
    Finally(Interval, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("trace too short: evaluation reads up to index {needed} but trace has {len} states")]
    TraceTooShort { needed: usize, len: usize },
}

impl Formula {
    /// Number of future steps the formula needs beyond the evaluation index:
    /// 0 for predicates, `end + horizon(child)` for temporal operators, and
    /// the maximum over children for Boolean connectives.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(c) => c.horizon(),
            Formula::And(cs) | Formula::Or(cs) => {
                cs.iter().map(Formula::horizon).max().unwrap_or(0)
            }
            Formula::Globally(iv, c) | Formula::Finally(iv, c) => iv.end + c.horizon(),
        }
    }

    /// Boolean satisfaction of the formula by `trace` at index `k`.
    ///
    /// Requires `k + horizon() < trace.len()`.
    pub fn eval_boolean(&self, trace: &[State], k: usize) -> Result<bool, EvalError> {
        let needed = k + self.horizon();
        if needed >= trace.len() {
            return Err(EvalError::TraceTooShort {
                needed,
                len: trace.len(),
            });
        }
        Ok(self.eval_bool_at(trace, k))
    }

    fn eval_bool_at(&self, trace: &[State], k: usize) -> bool {
        match self {
            Formula::Pred(p) => p.holds(&trace[k]),
            Formula::Not(c) => !c.eval_bool_at(trace, k),
            Formula::And(cs) => cs.iter().all(|c| c.eval_bool_at(trace, k)),
            Formula::Or(cs) => cs.iter().any(|c| c.eval_bool_at(trace, k)),
            Formula::Globally(iv, c) => {
                (k + iv.start..=k + iv.end).all(|k2| c.eval_bool_at(trace, k2))
            }
            Formula::Finally(iv, c) => {
                (k + iv.start..=k + iv.end).any(|k2| c.eval_bool_at(trace, k2))
            }
        }
    }

    /// Quantitative robustness of `trace` against the formula at index `k`:
    /// the predicate margin at the leaves, negation flips the sign, And/G
    /// take minima, Or/F take maxima over their children or windows.
    ///
    /// Requires `k + horizon() < trace.len()`.
    pub fn robustness(&self, trace: &[State], k: usize) -> Result<f64, EvalError> {
        let needed = k + self.horizon();
        if needed >= trace.len() {
            return Err(EvalError::TraceTooShort {
                needed,
                len: trace.len(),
            });
        }
        Ok(self.robustness_at(trace, k))
    }

    fn robustness_at(&self, trace: &[State], k: usize) -> f64 {
        match self {
            Formula::Pred(p) => p.margin(&trace[k]),
            Formula::Not(c) => -c.robustness_at(trace, k),
            Formula::And(cs) => cs
                .iter()
                .map(|c| c.robustness_at(trace, k))
                .fold(f64::INFINITY, f64::min),
            Formula::Or(cs) => cs
                .iter()
                .map(|c| c.robustness_at(trace, k))
                .fold(f64::NEG_INFINITY, f64::max),
            Formula::Globally(iv, c) => (k + iv.start..=k + iv.end)
                .map(|k2| c.robustness_at(trace, k2))
                .fold(f64::INFINITY, f64::min),
            Formula::Finally(iv, c) => (k + iv.start..=k + iv.end)
                .map(|k2| c.robustness_at(trace, k2))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if first {
                if c == 1.0 {
                    write!(f, "x{i}")?;
                } else if c == -1.0 {
                    write!(f, "-x{i}")?;
                } else {
                    write!(f, "{c}*x{i}")?;
                }
                first = false;
            } else if c == 1.0 {
                write!(f, " + x{i}")?;
            } else if c == -1.0 {
                write!(f, " - x{i}")?;
            } else if c < 0.0 {
                write!(f, " - {}*x{i}", -c)?;
            } else {
                write!(f, " + {c}*x{i}")?;
            }
        }
        write!(f, " <= {}", self.bound)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Children of a connective are parenthesized when they are themselves
        // connectives, so printing round-trips through the parser.
        fn write_child(f: &mut fmt::Formatter<'_>, c: &Formula) -> fmt::Result {
            match c {
                Formula::And(_) | Formula::Or(_) => write!(f, "({c})"),
                _ => write!(f, "{c}"),
            }
        }
        match self {
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(c) => write!(f, "!{c}"),
            Formula::And(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " & ")?;
                    }
                    write_child(f, c)?;
                }
                Ok(())
            }
            Formula::Or(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " | ")?;
                    }
                    write_child(f, c)?;
                }
                Ok(())
            }
            Formula::Globally(iv, c) => write!(f, "G[{},{}]({c})", iv.start, iv.end),
            Formula::Finally(iv, c) => write!(f, "F[{},{}]({c})", iv.start, iv.end),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred1(coeff: f64, bound: f64) -> Formula {
        Formula::Pred(Predicate::new(vec![coeff], bound))
    }

    fn tr(vals: &[f64]) -> Vec<State> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn predicate_margin_and_robustness() {
        // x <= 2.5 at x = 1.5
        let f = pred1(1.0, 2.5);
        let t = tr(&[1.5]);
        assert_eq!(f.robustness(&t, 0).unwrap(), 1.0);
        assert!(f.eval_boolean(&t, 0).unwrap());
    }

    #[test]
    fn horizon_recursion() {
        let p = pred1(1.0, 0.0);
        assert_eq!(p.horizon(), 0);

        // F[0,99](p1) & F[0,99](p2) has horizon 99
        let inner = Formula::And(vec![
            Formula::Finally(Interval::new(0, 99), Box::new(p.clone())),
            Formula::Finally(Interval::new(0, 99), Box::new(p.clone())),
        ]);
        assert_eq!(inner.horizon(), 99);

        // G[0,900] over a horizon-99 child: 900 + 99
        let outer = Formula::Globally(Interval::new(0, 900), Box::new(inner));
        assert_eq!(outer.horizon(), 999);
    }

    #[test]
    fn finally_window_boolean() {
        // F[0,3](-2.5 <= x <= 0) on [-0.5, 0.5, 1.0, 1.5]: holds at index 0.
        let band = Formula::And(vec![pred1(-1.0, 2.5), pred1(1.0, 0.0)]);
        let f = Formula::Finally(Interval::new(0, 3), Box::new(band));
        let t = tr(&[-0.5, 0.5, 1.0, 1.5]);
        assert!(f.eval_boolean(&t, 0).unwrap());
        // robustness: max over window of min(2.5 + x, -x) = 0.5 at x = -0.5
        assert_eq!(f.robustness(&t, 0).unwrap(), 0.5);
    }

    #[test]
    fn globally_violation() {
        let f = Formula::Globally(Interval::new(0, 3), Box::new(pred1(1.0, 1.0)));
        let t = tr(&[0.5, 1.0, 1.5, 2.0]);
        assert!(!f.eval_boolean(&t, 0).unwrap());
    }

    #[test]
    fn negation_flips_robustness() {
        let f = pred1(1.0, 0.7);
        let neg = Formula::Not(Box::new(f.clone()));
        let t = tr(&[0.0]);
        assert_eq!(f.robustness(&t, 0).unwrap(), 0.7);
        assert_eq!(neg.robustness(&t, 0).unwrap(), -0.7);
    }

    #[test]
    fn short_trace_rejected() {
        let f = Formula::Finally(Interval::new(0, 3), Box::new(pred1(1.0, 0.0)));
        let t = tr(&[0.0, 0.0, 0.0]);
        assert_eq!(
            f.eval_boolean(&t, 0),
            Err(EvalError::TraceTooShort { needed: 3, len: 3 })
        );
        assert!(f.robustness(&t, 1).is_err());
    }
}
