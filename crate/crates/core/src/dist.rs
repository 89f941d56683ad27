//! Finite-support distribution arithmetic.
//!
//! [`DiscreteDist`] represents a nonnegative random variable with finitely
//! many atoms. It supports the operations the solvers are built on: moments,
//! the truncated/exceptional split at a threshold, effective sizes
//! `beta_k(X) = log_k E[k^X]`, and exact convolution of independent sums.
//!
//! Effective sizes are computed in log-space (log-sum-exp) so that large `k`
//! never overflows, and all natural logarithms are used so that the identity
//! `E[e^{(ln k) X}] = k^{beta_k(X)}` is exact.

use thiserror::Error;

/// Absolute distance under which two atom values are merged into one.
pub const MERGE_TOL: f64 = 1e-12;

/// Tolerance on the total probability mass at construction.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Default cap on the support size produced by a convolution.
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

/// Construction failed: the atom list does not describe a distribution.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistError {
    #[error("atom value {0} is not a finite nonnegative number")]
    BadValue(f64),
    #[error("atom probability {0} is not in [0, 1]")]
    BadProb(f64),
    #[error("probabilities sum to {0}, expected 1 within {PROB_SUM_TOL:e}")]
    ProbSum(f64),
    #[error("distribution has no atoms with positive probability")]
    Empty,
}

/// A convolution (or evaluator) would exceed the configured support cap.
///
/// Signals the caller to fall back to Monte Carlo estimation.
#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("support of size {required} exceeds cap {cap}")]
pub struct SupportOverflow {
    pub required: usize,
    pub cap: usize,
}

/// A finite-support nonnegative distribution.
///
/// Atoms are `(value, probability)` pairs, stored sorted by value with
/// distinct values (merged within [`MERGE_TOL`]) and probabilities summing
/// to one. Zero-probability atoms are dropped on construction. Values are
/// immutable after construction, so a `DiscreteDist` is safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDist {
    /// Builds a distribution from raw `(value, prob)` pairs.
    ///
    /// Pairs may be unsorted and may repeat values; mass on values within
    /// [`MERGE_TOL`] of each other is combined.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, DistError> {
        for &(v, p) in &pairs {
            if !v.is_finite() || v < 0.0 {
                return Err(DistError::BadValue(v));
            }
            if !p.is_finite() || p < 0.0 || p > 1.0 + PROB_SUM_TOL {
                return Err(DistError::BadProb(p));
            }
        }
        let d = Self::normalize(pairs);
        if d.atoms.is_empty() {
            return Err(DistError::Empty);
        }
        let total: f64 = d.atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(DistError::ProbSum(total));
        }
        Ok(d)
    }

    /// Sorts, merges values within [`MERGE_TOL`], and drops zero-mass atoms.
    /// Does not validate the total mass; internal operations preserve it.
    fn normalize(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(_, p)| p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match atoms.last_mut() {
                Some(last) if v - last.0 <= MERGE_TOL => last.1 += p,
                _ => atoms.push((v, p)),
            }
        }
        DiscreteDist { atoms }
    }

    /// Point mass at `value`.
    pub fn point_mass(value: f64) -> Self {
        Self::new(vec![(value, 1.0)]).expect("point mass is valid")
    }

    /// Takes value `size` with probability `prob`, and 0 otherwise.
    pub fn bernoulli(prob: f64, size: f64) -> Self {
        Self::new(vec![(0.0, 1.0 - prob), (size, prob)]).expect("bernoulli is valid")
    }

    /// Atoms as `(value, prob)` pairs, sorted ascending by value.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn support_len(&self) -> usize {
        self.atoms.len()
    }

    /// Largest atom value.
    pub fn max_value(&self) -> f64 {
        self.atoms.last().map(|&(v, _)| v).unwrap_or(0.0)
    }

    /// E[X].
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    /// E[X^q].
    pub fn moment_q(&self, q: f64) -> f64 {
        self.atoms.iter().map(|&(v, p)| v.powf(q) * p).sum()
    }

    /// Effective size `beta_k(X)`: `log_k E[k^X]` for `k >= 2`, `E[X]` for
    /// `k = 1`. Computed via log-sum-exp; always finite for finite support,
    /// and lies between `E[X]` and the maximum atom value.
    pub fn effective_size(&self, k: usize) -> f64 {
        if k <= 1 {
            return self.mean();
        }
        let ln_k = (k as f64).ln();
        let mut hi = f64::NEG_INFINITY;
        for &(v, p) in &self.atoms {
            hi = hi.max(p.ln() + ln_k * v);
        }
        let sum: f64 = self
            .atoms
            .iter()
            .map(|&(v, p)| (p.ln() + ln_k * v - hi).exp())
            .sum();
        (hi + sum.ln()) / ln_k
    }

    /// Splits into the truncated part `X * I(X <= threshold)` and the
    /// exceptional part `X * I(X > threshold)`.
    ///
    /// Both parts are full distributions: mass removed from one side shows
    /// up as mass at zero on the other, so the two are coupled copies that
    /// sum to `X` pointwise.
    pub fn truncate_split(&self, threshold: f64) -> (DiscreteDist, DiscreteDist) {
        let mut trunc = Vec::with_capacity(self.atoms.len() + 1);
        let mut exc = Vec::with_capacity(self.atoms.len() + 1);
        let mut trunc_zero = 0.0;
        let mut exc_zero = 0.0;
        for &(v, p) in &self.atoms {
            if v <= threshold {
                trunc.push((v, p));
                exc_zero += p;
            } else {
                exc.push((v, p));
                trunc_zero += p;
            }
        }
        if trunc_zero > 0.0 {
            trunc.push((0.0, trunc_zero));
        }
        if exc_zero > 0.0 {
            exc.push((0.0, exc_zero));
        }
        (Self::normalize(trunc), Self::normalize(exc))
    }

    /// Exact distribution of the sum of two independent variables.
    ///
    /// Fails with [`SupportOverflow`] when the product of the support sizes
    /// exceeds `cap`; callers then fall back to Monte Carlo.
    pub fn convolve_with_cap(
        &self,
        other: &DiscreteDist,
        cap: usize,
    ) -> Result<DiscreteDist, SupportOverflow> {
        let required = self.atoms.len() * other.atoms.len();
        if required > cap {
            return Err(SupportOverflow { required, cap });
        }
        let mut pairs = Vec::with_capacity(required);
        for &(va, pa) in &self.atoms {
            for &(vb, pb) in &other.atoms {
                pairs.push((va + vb, pa * pb));
            }
        }
        Ok(Self::normalize(pairs))
    }

    /// [`Self::convolve_with_cap`] with [`DEFAULT_SUPPORT_CAP`].
    pub fn convolve(&self, other: &DiscreteDist) -> Result<DiscreteDist, SupportOverflow> {
        self.convolve_with_cap(other, DEFAULT_SUPPORT_CAP)
    }

    /// Maps every atom value through a monotone nondecreasing function.
    pub fn map_values_monotone(&self, f: impl Fn(f64) -> f64) -> DiscreteDist {
        Self::normalize(self.atoms.iter().map(|&(v, p)| (f(v), p)).collect())
    }

    /// Inverse-CDF sample for a uniform draw `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.max_value()
    }

    /// `P[X <= t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|&&(v, _)| v <= t)
            .map(|&(_, p)| p)
            .sum()
    }
}
