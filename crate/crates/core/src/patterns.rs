//! Behavior-pattern canonicalization, width computation, and
//! support-distribution analysis.
//!
//! A user's rounded-value sequence, considered up to an arbitrary relabeling
//! of the grid values, is their *behavior pattern*; the number of distinct
//! values in it is the pattern's *width* `w`. Two users sharing a pattern of
//! width `w` produce any given response sequence with probability ratio at
//! most `e^(w·ε)` — users blend within their pattern, and the guarantee
//! degrades only with the number of distinct behavior modes, not with the
//! collection horizon.
//!
//! The canonical representative used here relabels values by first
//! occurrence (first distinct value becomes 1, second becomes 2, …), so two
//! sequences are permutation-equivalent exactly when their canonical label
//! sequences are equal.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::memoization::GridValue;

/// A canonicalized rounded-value sequence. Labels form the contiguous range
/// `1..=width`, ordered by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BehaviorPattern {
    labels: Vec<u32>,
}

impl BehaviorPattern {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct rounded values in the sequence.
    pub fn width(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Canonicalize a rounded-value sequence by first-occurrence relabeling.
/// Two sequences map to the same pattern iff one is a bijective relabeling
/// of the other.
pub fn pattern_of(rounded: &[GridValue]) -> Result<BehaviorPattern> {
    if rounded.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut labels = Vec::with_capacity(rounded.len());
    let mut seen: HashMap<u64, u32> = HashMap::new();
    for g in rounded {
        let next = seen.len() as u32 + 1;
        labels.push(*seen.entry(g.get()).or_insert(next));
    }
    Ok(BehaviorPattern { labels })
}

/// A pattern together with the number of users whose sequences map to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSupport {
    pub pattern: BehaviorPattern,
    pub support: u64,
}

/// Pattern supports over a population, sorted by decreasing support (ties
/// broken by canonical sequence so the ordering is reproducible).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportDistribution {
    entries: Vec<PatternSupport>,
    user_count: u64,
}

impl SupportDistribution {
    pub fn entries(&self) -> &[PatternSupport] {
        &self.entries
    }

    pub fn user_count(&self) -> u64 {
        self.user_count
    }

    /// Cumulative fraction of users covered by the top-ranked patterns:
    /// entry `r` is the fraction of users in patterns with support at least
    /// that of rank `r`.
    pub fn cumulative_fractions(&self) -> Vec<f64> {
        let mut running = 0u64;
        self.entries
            .iter()
            .map(|e| {
                running += e.support;
                running as f64 / self.user_count as f64
            })
            .collect()
    }
}

/// Group a population's rounded sequences by behavior pattern and count
/// supports. All sequences must share one length.
pub fn support_distribution(sequences: &[Vec<GridValue>]) -> Result<SupportDistribution> {
    let mut counts: HashMap<BehaviorPattern, u64> = HashMap::new();
    let mut expected_len = None;
    for seq in sequences {
        match expected_len {
            None => expected_len = Some(seq.len()),
            Some(t) if t != seq.len() => {
                return Err(Error::LengthMismatch {
                    expected: t,
                    got: seq.len(),
                })
            }
            _ => {}
        }
        *counts.entry(pattern_of(seq)?).or_insert(0) += 1;
    }
    let mut entries: Vec<PatternSupport> = counts
        .into_iter()
        .map(|(pattern, support)| PatternSupport { pattern, support })
        .collect();
    entries.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    Ok(SupportDistribution {
        entries,
        user_count: sequences.len() as u64,
    })
}

/// Log-ratio bound for two users sharing a width-`w` pattern: `w·ε`.
pub fn pattern_ldp_exponent(width: u32, epsilon: f64) -> f64 {
    width as f64 * epsilon
}
