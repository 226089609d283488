//! Subsampling variance estimation and its bias-corrected variant.
//!
//! The uncorrected estimator is the (tau_bl^2-scaled) dispersion of the
//! subsample statistics around their grand mean; it targets
//! V = lim Var(tau_NT * theta_hat). The corrected form subtracts
//! D * (sigma2_small - sigma2) with D = l_small / (l - l_small) and may go
//! negative.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quantile::{ConfidenceInterval, IntervalSide};
use crate::subsample::SubsampleStatistics;

#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    /// d x d matrix; 1 x 1 for scalar statistics.
    pub value: DMatrix<f64>,
    pub b: usize,
    pub l: usize,
    pub corrected: bool,
    pub small_plan: Option<(usize, usize)>,
}

impl VarianceEstimate {
    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.value.nrows(), 1);
        self.value[(0, 0)]
    }

    pub fn diag(&self, j: usize) -> f64 {
        self.value[(j, j)]
    }
}

/// sigma2 = (tau_bl^2 / M) * sum (theta_sub - theta_bar) (theta_sub - theta_bar)'.
pub fn sigma_hat(stats: &SubsampleStatistics) -> Result<VarianceEstimate> {
    if stats.is_empty() {
        return Err(Error::EmptyStatistics);
    }
    let d = stats.dim;
    let mean = stats.mean();
    let mut acc = DMatrix::zeros(d, d);
    for v in stats.iter() {
        for r in 0..d {
            let dr = v[r] - mean[r];
            for c in 0..d {
                acc[(r, c)] += dr * (v[c] - mean[c]);
            }
        }
    }
    let tau2 = stats.plan.tau_sub().powi(2);
    let scale = tau2 / stats.len() as f64;
    Ok(VarianceEstimate {
        value: acc * scale,
        b: stats.plan.b,
        l: stats.plan.l,
        corrected: false,
        small_plan: None,
    })
}

/// Bias-corrected estimator: sigma2 - D * (sigma2_small - sigma2),
/// D = l_small / (l - l_small), applied entrywise.
pub fn sigma_hat_bc(stats: &SubsampleStatistics, small_stats: &SubsampleStatistics) -> Result<VarianceEstimate> {
    let l = stats.plan.l;
    let l_small = small_stats.plan.l;
    if l_small >= l {
        return Err(Error::DegenerateCorrection { l_small, l });
    }
    let base = sigma_hat(stats)?;
    let small = sigma_hat(small_stats)?;
    if base.value.nrows() != small.value.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "variance dims {} vs {}",
            base.value.nrows(),
            small.value.nrows()
        )));
    }
    let d_const = l_small as f64 / (l - l_small) as f64;
    let value = &base.value - (&small.value - &base.value) * d_const;
    Ok(VarianceEstimate {
        value,
        b: stats.plan.b,
        l,
        corrected: true,
        small_plan: Some((small_stats.plan.b, l_small)),
    })
}

/// Standard normal quantile z_{p}.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Normal-approximation interval theta_hat +/- z * sqrt(sigma2) / tau_NT.
///
/// A negative (bias-corrected) variance is clipped to zero when
/// `clip_negative` is set; the returned flag records the clipping.
pub fn normal_ci(
    estimate: f64,
    variance: f64,
    tau_full: f64,
    level: f64,
    clip_negative: bool,
) -> Result<(ConfidenceInterval, bool)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let (var, clipped) = if variance < 0.0 {
        if !clip_negative {
            return Err(Error::NegativeVariance(variance));
        }
        (0.0, true)
    } else {
        (variance, false)
    };
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let half = z * var.sqrt() / tau_full;
    Ok((
        ConfidenceInterval {
            lower: estimate - half,
            upper: estimate + half,
            level,
            side: IntervalSide::TwoSidedEqualTail,
        },
        clipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{PanelData, RateSpec, SubsamplePlan};
    use crate::subsample::{evaluate_subsamples, MeanStatistic, SubsampleStatistics};

    fn stats_from_values(values: Vec<f64>, b: usize, l: usize, rate: RateSpec) -> SubsampleStatistics {
        let m = values.len();
        SubsampleStatistics {
            plan: SubsamplePlan::new(b, l, rate, 0),
            n_units: b,
            n_periods: l,
            dim: 1,
            values,
            n_blocks: m,
            n_windows: 1,
        }
    }

    #[test]
    fn constant_panel_zero_variance() {
        let panel = PanelData::from_fn(4, 4, 1, |_, _| vec![1.0]).unwrap();
        let plan = SubsamplePlan::new(2, 2, RateSpec::sqrt_units(), 1);
        let stats = evaluate_subsamples(&panel, &plan, &MeanStatistic).unwrap();
        assert!(sigma_hat(&stats).unwrap().scalar().abs() < 1e-15);
    }

    #[test]
    fn two_point_example() {
        // Subsample means {0, 2}, tau_bl^2 = b = 2:
        // sigma2 = 2 * ((0-1)^2 + (2-1)^2) / 2 = 2.
        let stats = stats_from_values(vec![0.0, 2.0], 2, 1, RateSpec::sqrt_units());
        let est = sigma_hat(&stats).unwrap();
        assert!((est.scalar() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bc_arithmetic() {
        // l=9, l_small=3 -> D = 0.5; sigma2=4, sigma2_small=5 -> 3.5.
        let rate = RateSpec { unit_exponent: 0.0, period_exponent: 0.5 };
        // tau_bl^2 = l = 9: choose values with variance 4/9 so sigma2 = 4.
        let s = (4.0f64 / 9.0).sqrt();
        let stats = stats_from_values(vec![-s, s], 1, 9, rate);
        // tau^2 = 3, variance 5/3 -> sigma2_small = 5.
        let t = (5.0f64 / 3.0).sqrt();
        let small = stats_from_values(vec![-t, t], 1, 3, rate);
        let bc = sigma_hat_bc(&stats, &small).unwrap();
        assert!((bc.scalar() - 3.5).abs() < 1e-12);
        assert!(bc.corrected);
        assert_eq!(bc.small_plan, Some((1, 3)));
    }

    #[test]
    fn bc_equal_small_is_identity() {
        let rate = RateSpec::sqrt_units();
        let stats = stats_from_values(vec![0.0, 1.0, 2.0], 4, 9, rate);
        let mut small = stats_from_values(vec![0.0, 1.0, 2.0], 4, 3, rate);
        // Force identical sigma2 by matching tau^2 * variance: both use b=4.
        small.plan.b = 4;
        let base = sigma_hat(&stats).unwrap().scalar();
        let bc = sigma_hat_bc(&stats, &small).unwrap();
        assert!((bc.scalar() - base).abs() < 1e-12);
    }

    #[test]
    fn bc_rejects_degenerate_window() {
        let rate = RateSpec::sqrt_units();
        let stats = stats_from_values(vec![0.0, 1.0], 4, 3, rate);
        let small = stats_from_values(vec![0.0, 1.0], 2, 3, rate);
        assert!(matches!(
            sigma_hat_bc(&stats, &small),
            Err(Error::DegenerateCorrection { .. })
        ));
    }

    #[test]
    fn normal_ci_standard_quantile() {
        let (ci, clipped) = normal_ci(0.0, 1.0, 10.0, 0.95, true).unwrap();
        assert!(!clipped);
        assert!((ci.upper - 1.959964 / 10.0).abs() < 1e-5);
        assert!((ci.lower + 1.959964 / 10.0).abs() < 1e-5);
    }

    #[test]
    fn normal_ci_zero_variance_degenerate() {
        let (ci, _) = normal_ci(1.5, 0.0, 10.0, 0.95, true).unwrap();
        assert_eq!(ci.lower, 1.5);
        assert_eq!(ci.upper, 1.5);
    }

    #[test]
    fn normal_ci_negative_variance() {
        let (ci, clipped) = normal_ci(1.0, -0.2, 10.0, 0.95, true).unwrap();
        assert!(clipped);
        assert_eq!(ci.lower, 1.0);
        assert!(matches!(
            normal_ci(1.0, -0.2, 10.0, 0.95, false),
            Err(Error::NegativeVariance(_))
        ));
    }

    #[test]
    fn scale_and_shift_equivariance() {
        let panel = PanelData::from_fn(6, 6, 1, |n, t| vec![((n * 13 + 5 * t) % 7) as f64]).unwrap();
        let plan = SubsamplePlan::new(2, 3, RateSpec::sqrt_units(), 21);
        let base = sigma_hat(&evaluate_subsamples(&panel, &plan, &MeanStatistic).unwrap())
            .unwrap()
            .scalar();

        let scaled = PanelData::from_fn(6, 6, 1, |n, t| vec![3.0 * panel.value(n, t)]).unwrap();
        let s = sigma_hat(&evaluate_subsamples(&scaled, &plan, &MeanStatistic).unwrap())
            .unwrap()
            .scalar();
        assert!((s - 9.0 * base).abs() < 1e-10 * s.abs().max(1.0));

        let shifted = PanelData::from_fn(6, 6, 1, |n, t| vec![panel.value(n, t) + 42.0]).unwrap();
        let sh = sigma_hat(&evaluate_subsamples(&shifted, &plan, &MeanStatistic).unwrap())
            .unwrap()
            .scalar();
        assert!((sh - base).abs() < 1e-9);
    }
}
