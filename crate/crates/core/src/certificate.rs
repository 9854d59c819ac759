//! Post-hoc `(ε, δ)` guarantee for the returned configuration.
//!
//! With `r` active instances at iteration `t`, the winner is `(ε, δ)`-optimal
//! with probability at least `1 - exp(-2λ)` whenever
//!
//! ```text
//! ε² · δ ≥ 72 · λ · log2(t · log2(1/δ)) / r
//! ```
//!
//! For `δ < 1/2` the left side grows with `δ` and the right side does not, so
//! the smallest admissible `δ` is found by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcb::MIN_ITERATION;

/// Relative width of the final bisection bracket.
pub const DELTA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub epsilon: f64,
    pub delta: f64,
    pub lambda: f64,
    /// `1 - exp(-2λ)`.
    pub confidence: f64,
    pub r_winner: u64,
    pub t: u64,
}

/// Whether `δ` satisfies the certificate inequality.
pub fn certificate_holds(r: u64, t: u64, epsilon: f64, lambda: f64, delta: f64) -> bool {
    let t = t.max(MIN_ITERATION) as f64;
    let inner = (1.0 / delta).log2().max(1.0);
    epsilon * epsilon * delta >= 72.0 * lambda * (t * inner).log2() / r as f64
}

/// Smallest `δ ∈ (0, 1/2]` for which the winner is certified, or `None` when
/// even `δ = 1/2` fails (always the case for `r = 0`).
pub fn certify_delta(r: u64, t: u64, epsilon: f64, lambda: f64) -> Result<Option<Certificate>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("must be positive (got {epsilon})")));
    }
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be at least 1 (got {lambda})")));
    }
    if r == 0 || !certificate_holds(r, t, epsilon, lambda, 0.5) {
        return Ok(None);
    }
    let holds = |d: f64| certificate_holds(r, t, epsilon, lambda, d);
    let mut hi = 0.5;
    let mut lo = 0.25;
    while holds(lo) {
        hi = lo;
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            break;
        }
    }
    while hi - lo > DELTA_TOLERANCE * hi {
        // Geometric midpoints while the bracket spans orders of magnitude.
        let mid = if hi > 2.0 * lo {
            (hi * lo).sqrt()
        } else {
            0.5 * (hi + lo)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(Certificate {
        epsilon,
        delta: hi,
        lambda,
        confidence: 1.0 - (-2.0 * lambda).exp(),
        r_winner: r,
        t,
    }))
}
