//! The restricted windowed fragment: an outer `G[0,Ke]` or `F[0,Ke]` over a
//! Boolean combination of bounded temporal sub-formulae, each of which wraps
//! a predicate-level formula. The window length τ is the inner horizon plus
//! one; flag-state preprocessing applies when every sub-formula's window
//! ends exactly at τ−1.

use super::{Formula, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalKind {
    Globally,
    Finally,
}

/// One temporal leaf `G[ks,ke](inner)` or `F[ks,ke](inner)` of the inner
/// formula, with `inner` free of temporal operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SubFormula {
    pub kind: TemporalKind,
    pub window: Interval,
    pub inner: Formula,
}

/// Shape summary of a formula in the fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentInfo {
    /// Kind of the outermost temporal operator.
    pub outer: TemporalKind,
    /// End of the outer interval `[0, Ke]`.
    pub outer_end: usize,
    /// The inner formula φ the outer operator ranges over.
    pub inner: Formula,
    /// Temporal leaves of the inner formula, left to right.
    pub subs: Vec<SubFormula>,
    /// Window length: `horizon(inner) + 1`.
    pub tau: usize,
    /// True iff every sub-formula window ends at τ−1.
    pub flag_eligible: bool,
}

impl FragmentInfo {
    /// Number of sub-formulae (one flag per sub-formula when eligible).
    pub fn sub_count(&self) -> usize {
        self.subs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FragmentError {
    #[error("outermost operator must be a time-bounded G or F, got: {node}")]
    OuterNotTemporal { node: String },
    #[error("outer interval must start at 0, got [{start},{end}]")]
    OuterIntervalStart { start: usize, end: usize },
    #[error("temporal operator nested inside a sub-formula body: {node}")]
    NestedTemporal { node: String },
    #[error("negation above a temporal operator: {node}")]
    NegationAboveTemporal { node: String },
    #[error("predicate outside a temporal sub-formula: {node}")]
    BareAtom { node: String },
}

fn contains_temporal(f: &Formula) -> bool {
    match f {
        Formula::Pred(_) => false,
        Formula::Not(c) => contains_temporal(c),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().any(contains_temporal),
        Formula::Globally(..) | Formula::Finally(..) => true,
    }
}

fn collect_subs(f: &Formula, subs: &mut Vec<SubFormula>) -> Result<(), FragmentError> {
    match f {
        Formula::And(cs) | Formula::Or(cs) => {
            for c in cs {
                collect_subs(c, subs)?;
            }
            Ok(())
        }
        Formula::Globally(iv, body) | Formula::Finally(iv, body) => {
            if contains_temporal(body) {
                return Err(FragmentError::NestedTemporal {
                    node: body.to_string(),
                });
            }
            subs.push(SubFormula {
                kind: if matches!(f, Formula::Globally(..)) {
                    TemporalKind::Globally
                } else {
                    TemporalKind::Finally
                },
                window: *iv,
                inner: (**body).clone(),
            });
            Ok(())
        }
        Formula::Not(c) => {
            if contains_temporal(c) {
                Err(FragmentError::NegationAboveTemporal {
                    node: f.to_string(),
                })
            } else {
                Err(FragmentError::BareAtom {
                    node: f.to_string(),
                })
            }
        }
        Formula::Pred(_) => Err(FragmentError::BareAtom {
            node: f.to_string(),
        }),
    }
}

/// Check that `f` has the fragment shape and extract its summary.
///
/// The inner formula is either a Boolean combination of temporal
/// sub-formulae (each over a temporal-free body), or — the degenerate τ = 1
/// case — entirely temporal-free, in which case there are no sub-formulae.
pub fn validate_fragment(f: &Formula) -> Result<FragmentInfo, FragmentError> {
    let (outer, iv, inner) = match f {
        Formula::Globally(iv, inner) => (TemporalKind::Globally, iv, inner),
        Formula::Finally(iv, inner) => (TemporalKind::Finally, iv, inner),
        other => {
            return Err(FragmentError::OuterNotTemporal {
                node: other.to_string(),
            })
        }
    };
    if iv.start != 0 {
        return Err(FragmentError::OuterIntervalStart {
            start: iv.start,
            end: iv.end,
        });
    }
    let mut subs = Vec::new();
    if contains_temporal(inner) {
        collect_subs(inner, &mut subs)?;
    }
    let tau = inner.horizon() + 1;
    let flag_eligible = subs.iter().all(|s| s.window.end == tau - 1);
    Ok(FragmentInfo {
        outer,
        outer_end: iv.end,
        inner: (**inner).clone(),
        subs,
        tau,
        flag_eligible,
    })
}
