//! Subsampling empirical root distribution and quantile confidence intervals.
//!
//! Roots are the centered, scaled subsample statistics
//! `tau_bl * (theta_sub - theta_full)`; their step CDF is the subsampling
//! distribution, and confidence intervals come from its exact order-statistic
//! quantiles with the percentile-t endpoint swap.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::subsample::SubsampleStatistics;

/// Sorted multiset of roots for one coordinate of the statistic.
#[derive(Debug, Clone)]
pub struct RootDistribution {
    roots: Vec<f64>,
    pub tau_full: f64,
    pub tau_sub: f64,
    pub center: f64,
}

impl RootDistribution {
    /// Center at the full-sample estimate and scale by tau_bl. `tau_full`
    /// is derived from the same rate applied to the full panel dimensions.
    pub fn build(stats: &SubsampleStatistics, full_estimate: f64, coordinate: usize) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::EmptyStatistics);
        }
        assert!(coordinate < stats.dim);
        let tau_sub = stats.plan.tau_sub();
        let tau_full = stats.plan.rate.tau(stats.n_units, stats.n_periods);
        let mut roots: Vec<f64> = stats
            .iter()
            .map(|v| tau_sub * (v[coordinate] - full_estimate))
            .collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { roots, tau_full, tau_sub, center: full_estimate })
    }

    /// Build directly from an externally computed root multiset.
    pub fn from_roots(mut roots: Vec<f64>, tau_full: f64, tau_sub: f64, center: f64) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::EmptyStatistics);
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { roots, tau_full, tau_sub, center })
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    /// Step CDF L(x) = (1/M) #{roots <= x}.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.roots.partition_point(|&r| r <= x);
        count as f64 / self.roots.len() as f64
    }

    /// Exact quantile: the ceil(p*M)-th smallest root, the inf over the
    /// step CDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        let m = self.roots.len();
        let rank = (p * m as f64).ceil() as usize;
        let rank = rank.clamp(1, m);
        Ok(self.roots[rank - 1])
    }

    /// Population variance of the root multiset (divides by M).
    pub fn variance(&self) -> f64 {
        let m = self.roots.len() as f64;
        let mean = self.roots.iter().sum::<f64>() / m;
        self.roots.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / m
    }
}

/// Interval side convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSide {
    OneSidedLower,
    OneSidedUpper,
    TwoSidedEqualTail,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub side: IntervalSide,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Quantile confidence interval with interchanged endpoints.
pub fn quantile_ci(dist: &RootDistribution, level: f64, side: IntervalSide) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let alpha = 1.0 - level;
    let (lower, upper) = match side {
        IntervalSide::OneSidedLower => {
            (dist.center - dist.quantile(1.0 - alpha)? / dist.tau_full, f64::INFINITY)
        }
        IntervalSide::OneSidedUpper => {
            (f64::NEG_INFINITY, dist.center - dist.quantile(alpha)? / dist.tau_full)
        }
        IntervalSide::TwoSidedEqualTail => (
            dist.center - dist.quantile(1.0 - alpha / 2.0)? / dist.tau_full,
            dist.center - dist.quantile(alpha / 2.0)? / dist.tau_full,
        ),
    };
    Ok(ConfidenceInterval { lower, upper, level, side })
}
