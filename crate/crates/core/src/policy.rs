//! Dense tabular policies `π(a|s)` and their plain-text persistence format.
//!
//! The text format is one line per state holding `|A|` probabilities written
//! with 17 significant digits, separated by single spaces. Lines starting with
//! `#` are comments. Every row must be a probability distribution.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdrpoError, Result};

/// Tolerance on `|Σ_a π(a|s) − 1|` accepted when loading a policy.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Per-state categorical distribution over actions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    /// Uniform distribution over actions in every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        assert!(
            n_states > 0 && n_actions > 0,
            "policy table must be non-empty"
        );
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Builds a policy from explicit rows, validating that each is a distribution.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        if n_states == 0 {
            return Err(OdrpoError::Empty("policy rows"));
        }
        let n_actions = rows[0].len();
        if n_actions == 0 {
            return Err(OdrpoError::Empty("policy actions"));
        }
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(OdrpoError::DimensionMismatch(format!(
                    "row {s} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            check_distribution(row)
                .map_err(|reason| OdrpoError::InvalidPolicy(format!("state {s}: {reason}")))?;
            probs.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Builds a policy from a flat row-major table without validation.
    pub(crate) fn from_flat_unchecked(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.n_actions;
        &self.probs[start..start + self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.n_actions)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Draws `a ~ π(·|state)`.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.row(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_positive = a;
                acc += p;
                if u < acc {
                    return a;
                }
            }
        }
        // Rounding left a sliver of mass uncovered.
        last_positive
    }

    /// Largest deviation of any row sum from one, or infinity if an entry is
    /// negative or non-finite.
    pub fn max_row_error(&self) -> f64 {
        self.rows()
            .map(|row| {
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    f64::INFINITY
                } else {
                    (row.iter().sum::<f64>() - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `max_{s,a} |π(a|s) − π'(a|s)|`.
    pub fn max_abs_diff(&self, other: &TabularPolicy) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len());
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Total-variation distance between the rows for `state`.
    pub fn total_variation(&self, other: &TabularPolicy, state: usize) -> f64 {
        0.5 * self
            .row(state)
            .iter()
            .zip(other.row(state))
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Serializes the table in the portable text format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.probs.len() * 24 + 64);
        let _ = writeln!(
            out,
            "# odrpo tabular policy: states={} actions={}",
            self.n_states, self.n_actions
        );
        for row in self.rows() {
            let mut first = true;
            for p in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{p:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the portable text format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| OdrpoError::Parse {
                        line: line_no,
                        reason: format!("`{tok}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(OdrpoError::Parse {
                        line: line_no,
                        reason: format!("expected {w} columns, found {}", row.len()),
                    })
                }
                Some(_) => {}
            }
            check_distribution(&row).map_err(|reason| OdrpoError::Parse {
                line: line_no,
                reason,
            })?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(OdrpoError::Parse {
                line: 0,
                reason: "no policy rows".into(),
            });
        }
        Self::from_rows(&rows)
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!(
            "probability {p} is not a finite non-negative number"
        ));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}, not 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_rows_are_stochastic() {
        let p = TabularPolicy::uniform(3, 4);
        assert_eq!(p.max_row_error(), 0.0);
        assert_eq!(p.prob(2, 3), 0.25);
    }

    #[test]
    fn from_rows_rejects_bad_rows() {
        assert!(TabularPolicy::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(TabularPolicy::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(TabularPolicy::from_rows(&[vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p =
            TabularPolicy::from_rows(&[vec![1.0 / 3.0, 2.0 / 3.0], vec![0.1, 0.9], vec![0.0, 1.0]])
                .unwrap();
        let back = TabularPolicy::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn text_parse_rejects_non_stochastic_row() {
        let err = TabularPolicy::from_text("0.5 0.5\n0.7 0.7\n").unwrap_err();
        assert!(matches!(err, OdrpoError::Parse { line: 2, .. }));
        assert!(TabularPolicy::from_text("0.5 0.5\n0.5\n").is_err());
        assert!(TabularPolicy::from_text("# nothing\n").is_err());
        assert!(TabularPolicy::from_text("0.5 abc\n").is_err());
    }

    #[test]
    fn sampling_respects_zero_mass() {
        let p = TabularPolicy::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(p.sample_action(0, &mut rng), 1);
        }
    }
}
