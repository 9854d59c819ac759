//! Lower confidence bound on a configuration's mean runtime.
//!
//! The bound is the expectation of the empirical survival function `1 - G(x)`
//! after each probability mass `p` has been shrunk to `β(p, r, t)`:
//!
//! ```text
//! ε(k, r, t) = sqrt(9 · 2^k · ln(k·t) / r)
//! β(p, r, t) = p / (1 + ε(k, r, t))   if ε(k, r, t) ≤ 1/2, k = ⌊log2(1/p)⌋
//!            = 0                      otherwise
//! L(G, r, t) = ∫ β(1 - G(x), r, t) dx
//! ```
//!
//! Because `G` is a step function over `r` sorted samples, the integral is a
//! finite sum. Segments that share a level `k` share a scaling factor, so the
//! sum is folded into a per-level [`LevelProfile`] once and can then be
//! re-evaluated for any iteration `t` in time proportional to the number of
//! levels.
//!
//! Two clamps keep the logarithms defined: the level is at least 1 (for
//! `p > 1/2`, `⌊log2(1/p)⌋ = 0`) and the iteration is at least 2. Both only
//! enlarge `ε`, so the result stays a lower bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest iteration index used inside the bound.
pub const MIN_ITERATION: u64 = 2;

/// `β` is zero for levels whose `ε` exceeds this.
pub const MAX_EPSILON: f64 = 0.5;

/// `ε(k, r, t)`. Errors when any argument is zero; callers clamp `t` first.
pub fn epsilon(level: u32, r: u64, t: u64) -> Result<f64> {
    if level == 0 || r == 0 || t == 0 {
        return Err(Error::Domain(format!(
            "epsilon requires k, r, t >= 1 (got k={level}, r={r}, t={t})"
        )));
    }
    Ok(epsilon_unchecked(level, r, t))
}

#[inline]
pub(crate) fn epsilon_unchecked(level: u32, r: u64, t: u64) -> f64 {
    let k = f64::from(level);
    (9.0 * 2f64.powi(level as i32) * (k * t as f64).ln() / r as f64).sqrt()
}

/// `⌊log2(1/p)⌋` clamped to at least 1, computed exactly for `0 < p ≤ 1`.
pub fn level_of_probability(p: f64) -> u32 {
    debug_assert!(p > 0.0 && p <= 1.0);
    let mut k = (1.0 / p).log2().floor().max(0.0) as i32;
    // log2 may be off by one near powers of two; scaling by 2^k is exact.
    while k > 0 && p * 2f64.powi(k) > 1.0 {
        k -= 1;
    }
    while p * 2f64.powi(k + 1) <= 1.0 {
        k += 1;
    }
    k.max(1) as u32
}

/// Level of the survival mass `count / r`.
#[inline]
fn level_of_count(count: u64, r: u64) -> u32 {
    (r / count).ilog2().max(1)
}

/// `β(p, r, t)` with the level and iteration clamps applied.
pub fn beta(p: f64, r: u64, t: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("beta requires 0 < p <= 1 (got {p})")));
    }
    if r == 0 {
        return Err(Error::Domain("beta requires r >= 1".into()));
    }
    let e = epsilon_unchecked(level_of_probability(p), r, t.max(MIN_ITERATION));
    Ok(if e <= MAX_EPSILON { p / (1.0 + e) } else { 0.0 })
}

/// Sorted multiset of capped runtimes for a configuration's active instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyCdf);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "runtimes must be finite and non-negative (got {bad})"
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of samples, `r`.
    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Empirical survival `1 - G(x)`: the fraction of values strictly above `x`.
    pub fn survival(&self, x: f64) -> f64 {
        let above = self.values.len() - self.values.partition_point(|v| *v <= x);
        above as f64 / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcbValue {
    /// Seconds; never below the `κ₀` floor.
    pub bound: f64,
    pub r: u64,
    /// Iteration index after clamping.
    pub t: u64,
}

/// `max(κ₀, L(G, r, t))` for the given CDF.
pub fn lcb(cdf: &EmpiricalCdf, t: u64, kappa0: f64) -> LcbValue {
    let profile = LevelProfile::from_sorted(cdf.values());
    LcbValue {
        bound: profile.bound(t, kappa0),
        r: cdf.len(),
        t: t.max(MIN_ITERATION),
    }
}

/// Arithmetic mean of the capped runtimes.
pub fn capped_mean(cdf: &EmpiricalCdf) -> f64 {
    cdf.values.iter().sum::<f64>() / cdf.values.len() as f64
}

/// Survival-weighted segment widths of an empirical CDF, grouped by level.
///
/// `mass[k - 1]` holds `Σ (v[m+1] - v[m]) · (r - m) / r` over the segments
/// whose survival probability falls in level `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelProfile {
    r: u64,
    mass: Vec<f64>,
}

impl LevelProfile {
    /// Builds the profile from ascending values in O(r).
    pub fn from_sorted(values: &[f64]) -> Self {
        let r = values.len() as u64;
        let mut mass: Vec<f64> = Vec::new();
        let mut prev = 0.0;
        for (m, &v) in values.iter().enumerate() {
            let width = v - prev;
            prev = v;
            if width <= 0.0 {
                continue;
            }
            let count = r - m as u64;
            let level = level_of_count(count, r) as usize;
            if mass.len() < level {
                mass.resize(level, 0.0);
            }
            mass[level - 1] += width * (count as f64 / r as f64);
        }
        Self { r, mass }
    }

    pub(crate) fn from_parts(r: u64, mass: Vec<f64>) -> Self {
        Self { r, mass }
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    /// Per-level mass, index `k - 1`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Unscaled integral, i.e. the empirical capped mean.
    pub fn unscaled(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `max(κ₀, L)` at iteration `t`.
    pub fn bound(&self, t: u64, kappa0: f64) -> f64 {
        if self.r == 0 {
            return kappa0;
        }
        let t = t.max(MIN_ITERATION);
        let mut sum = 0.0;
        for (idx, &w) in self.mass.iter().enumerate() {
            let e = epsilon_unchecked(idx as u32 + 1, self.r, t);
            // ε grows with k, so every deeper level is zeroed too.
            if e > MAX_EPSILON {
                break;
            }
            sum += w / (1.0 + e);
        }
        sum.max(kappa0)
    }
}
