//! Time-effect autocovariance estimation and the iterative plug-in selection
//! of the time-window length l, with the matched unit-block size b = (N/T)*l.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelData;

/// Estimated autocovariances R(0..max_lag) of the common time component,
/// extended to negative lags by symmetry.
#[derive(Debug, Clone)]
pub struct AutocovSeries {
    pub values: Vec<f64>,
    pub n_periods: usize,
    pub n_units: usize,
}

impl AutocovSeries {
    /// Symmetric accessor; zero beyond the stored lags.
    #[inline]
    pub fn at(&self, k: i64) -> f64 {
        let k = k.unsigned_abs() as usize;
        self.values.get(k).copied().unwrap_or(0.0)
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

/// Cross-unit autocovariance estimator:
/// R(k) = 1/(N(N-1)T) * sum_{n != m} sum_{t=1}^{T-k} X_nt X_{m,t+k},
/// with the coordinate centered by its grand mean first.
///
/// Computed through the identity
/// sum_{n != m} X_nt X_{m,t+k} = S_t S_{t+k} - sum_n X_nt X_{n,t+k}
/// where S_t = sum_n X_nt, which brings the cost down to O(NT) per lag set.
pub fn autocov_hat(panel: &PanelData, coordinate: usize, max_lag: usize) -> Result<AutocovSeries> {
    autocov_impl(panel, coordinate, max_lag, true)
}

/// Same estimator without the grand-mean centering, for statistics whose
/// target is already zero.
pub fn autocov_hat_uncentered(panel: &PanelData, coordinate: usize, max_lag: usize) -> Result<AutocovSeries> {
    autocov_impl(panel, coordinate, max_lag, false)
}

fn autocov_impl(panel: &PanelData, coordinate: usize, max_lag: usize, center: bool) -> Result<AutocovSeries> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    if n < 2 {
        return Err(Error::SingleUnit);
    }
    if max_lag >= t_len {
        return Err(Error::InvalidLag { max_lag, n_periods: t_len });
    }
    let mean = if center { panel.grand_mean(coordinate) } else { 0.0 };
    let centered: Vec<f64> = (0..n)
        .flat_map(|u| (0..t_len).map(move |t| panel.obs(u, t)[coordinate] - mean))
        .collect();
    let col_sum: Vec<f64> = (0..t_len)
        .map(|t| (0..n).map(|u| centered[u * t_len + t]).sum())
        .collect();
    let norm = (n * (n - 1)) as f64 * t_len as f64;
    let mut values = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut sum = 0.0;
        for t in 0..t_len - k {
            let cross: f64 = (0..n).map(|u| centered[u * t_len + t] * centered[u * t_len + t + k]).sum();
            sum += col_sum[t] * col_sum[t + k] - cross;
        }
        values.push(sum / norm);
    }
    Ok(AutocovSeries { values, n_periods: t_len, n_units: n })
}

/// Naive O(N^2 T) double sum, kept as an oracle for the fast path.
pub fn autocov_hat_naive(panel: &PanelData, coordinate: usize, max_lag: usize) -> Result<AutocovSeries> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    if n < 2 {
        return Err(Error::SingleUnit);
    }
    if max_lag >= t_len {
        return Err(Error::InvalidLag { max_lag, n_periods: t_len });
    }
    let mean = panel.grand_mean(coordinate);
    let norm = (n * (n - 1)) as f64 * t_len as f64;
    let mut values = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let mut sum = 0.0;
        for u in 0..n {
            for m in 0..n {
                if u == m {
                    continue;
                }
                for t in 0..t_len - k {
                    sum += (panel.obs(u, t)[coordinate] - mean) * (panel.obs(m, t + k)[coordinate] - mean);
                }
            }
        }
        values.push(sum / norm);
    }
    Ok(AutocovSeries { values, n_periods: t_len, n_units: n })
}

/// Lag windows used by the plug-in iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Bartlett,
    TukeyHanning,
    SplitCosine,
}

/// Evaluate a lag window at x; all three vanish for |x| > 1.
pub fn window_eval(kind: WindowKind, x: f64) -> f64 {
    let a = x.abs();
    match kind {
        WindowKind::Bartlett => (1.0 - a).max(0.0),
        WindowKind::TukeyHanning => {
            if a <= 1.0 {
                (1.0 + (std::f64::consts::PI * a).cos()) / 2.0
            } else {
                0.0
            }
        }
        WindowKind::SplitCosine => {
            // Flat top on [0, 4/5), cosine taper down to zero at 1.
            if a < 0.8 {
                1.0
            } else if a <= 1.0 {
                (1.0 + (std::f64::consts::PI * (5.0 * a - 4.0)).cos()) / 2.0
            } else {
                0.0
            }
        }
    }
}

/// Relative floor below which a denominator sum counts as degenerate.
const DEGENERATE_EPS: f64 = 1e-12;

/// Selected subsample sizes with the iteration trace for audit.
#[derive(Debug, Clone, Serialize)]
pub struct SizeSelection {
    /// Raw optimum, nearest integer to 1/w_opt.
    pub l_opt: usize,
    /// Effective window length after the floor and the l <= T-1 cap.
    pub l: usize,
    /// Matched block size, round((N/T) * l) clamped to [1, N-1].
    pub b: usize,
    pub w_opt: f64,
    pub w_trace: Vec<f64>,
    pub floor_applied: bool,
    pub degenerate: bool,
}

/// Iterative plug-in bandwidth selection.
///
/// Runs w_0 = 1/T, then for i = 1..L
///   w_i = [ sum_k R^2(k) / (6 sum_k W_SC^2(k w_{i-1} T^{4/21}) k^2 R^2(k)) ]^{1/3} T^{-1/3}
/// over k = -(T-1)..(T-1), followed by
///   w_opt = [ 2 (sum_k W_TH(k w_L T^{4/21}) R(k))^2
///           / (3 (sum_k W_SC(k w_L T^{4/21}) |k| R(k))^2) ]^{1/3} T^{-1/3}
/// and l_opt = nearest integer to 1/w_opt (ties to even).
///
/// A denominator underflowing below 1e-12 of its numerator short-circuits to
/// l_opt = 1 with the degenerate flag set (white-noise case).
pub fn buhlmann_l_opt(autocov: &AutocovSeries, n_iterations: usize) -> SizeSelection {
    assert!(n_iterations >= 4, "plug-in iteration needs L >= 4");
    let t_len = autocov.n_periods as f64;
    let inflate = t_len.powf(4.0 / 21.0);
    let k_max = autocov.max_lag() as i64;

    let degenerate = |w_trace: Vec<f64>| SizeSelection {
        l_opt: 1,
        l: 1,
        b: 1,
        w_opt: f64::INFINITY,
        w_trace,
        floor_applied: false,
        degenerate: true,
    };

    let mut w = 1.0 / t_len;
    let mut trace = vec![w];
    for _ in 0..n_iterations {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in -k_max..=k_max {
            let r2 = autocov.at(k).powi(2);
            num += r2;
            let wv = window_eval(WindowKind::SplitCosine, k as f64 * w * inflate);
            den += wv * wv * (k as f64).powi(2) * r2;
        }
        den *= 6.0;
        if den <= DEGENERATE_EPS * num {
            return degenerate(trace);
        }
        w = (num / den).cbrt() * t_len.powf(-1.0 / 3.0);
        trace.push(w);
    }

    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for k in -k_max..=k_max {
        let x = k as f64 * w * inflate;
        s0 += window_eval(WindowKind::TukeyHanning, x) * autocov.at(k);
        s1 += window_eval(WindowKind::SplitCosine, x) * (k as f64).abs() * autocov.at(k);
    }
    let num = 2.0 * s0 * s0;
    let den = 3.0 * s1 * s1;
    if den <= DEGENERATE_EPS * num {
        return degenerate(trace);
    }
    let w_opt = (num / den).cbrt() * t_len.powf(-1.0 / 3.0);
    let l_opt = ((1.0 / w_opt).round_ties_even() as usize).max(1);
    let ratio = autocov.n_units as f64 / autocov.n_periods as f64;
    let b = (((ratio * l_opt as f64).round_ties_even()) as usize).clamp(1, autocov.n_units);
    SizeSelection {
        l_opt,
        l: l_opt,
        b,
        w_opt,
        w_trace: trace,
        floor_applied: false,
        degenerate: false,
    }
}

/// Full data-driven selection for one panel coordinate: autocovariances, the
/// plug-in iteration, the floor l >= l_min, and the matched block size.
pub fn select_sizes(panel: &PanelData, coordinate: usize, l_min: usize) -> Result<SizeSelection> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    if n < 2 {
        return Err(Error::SingleUnit);
    }
    if t_len < 2 {
        return Err(Error::InvalidLag { max_lag: 0, n_periods: t_len });
    }
    let autocov = autocov_hat(panel, coordinate, t_len - 1)?;
    let mut sel = buhlmann_l_opt(&autocov, 20);
    apply_size_floors(&mut sel, n, t_len, l_min);
    Ok(sel)
}

/// Apply l = max(l_min, l_opt), the caps l <= T-1 and b <= N-1, and the
/// ratio-matched block size.
pub fn apply_size_floors(sel: &mut SizeSelection, n_units: usize, n_periods: usize, l_min: usize) {
    let mut l = sel.l_opt.max(l_min);
    sel.floor_applied = l > sel.l_opt;
    l = l.min(n_periods - 1).max(1);
    let ratio = n_units as f64 / n_periods as f64;
    let b_max = (n_units - 1).max(1);
    let b = ((ratio * l as f64).round_ties_even() as usize).clamp(1, b_max);
    sel.l = l;
    sel.b = b;
}
