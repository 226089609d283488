//! OLS estimation and score-subsampling sandwich variance.
//!
//! Rather than subsampling the coefficient estimator itself, the score panel
//! X_nt * U_nt (or its residual version) is subsampled as a mean-estimation
//! problem and the result is sandwiched with phi_hat^{-1}, which lets the
//! size-selection and bias-correction machinery apply unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{PanelData, SubsamplePlan};
use crate::seed::mix_seed;
use crate::subsample::{evaluate_subsamples, MeanStatistic, PanelStatistic};
use crate::variance::{sigma_hat, sigma_hat_bc, VarianceEstimate};

const MAX_CONDITION: f64 = 1e12;

/// Outcome, regressors, and (in simulation mode) the true errors.
#[derive(Debug, Clone)]
pub struct RegressionPanel {
    pub y: PanelData,
    pub x: PanelData,
    pub u: Option<PanelData>,
}

impl RegressionPanel {
    pub fn new(y: PanelData, x: PanelData, u: Option<PanelData>) -> Result<Self> {
        if y.dim() != 1 {
            return Err(Error::DimensionMismatch(format!("outcome dim {} != 1", y.dim())));
        }
        let same = |p: &PanelData| p.n_units() == y.n_units() && p.n_periods() == y.n_periods();
        if !same(&x) || u.as_ref().is_some_and(|u| !same(u) || u.dim() != 1) {
            return Err(Error::DimensionMismatch("y/x/u shapes differ".into()));
        }
        Ok(Self { y, x, u })
    }

    pub fn n_units(&self) -> usize {
        self.y.n_units()
    }

    pub fn n_periods(&self) -> usize {
        self.y.n_periods()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.dim()
    }

    /// Stack outcome and regressors into one panel (column 0 = y) so a
    /// per-subsample OLS statistic can see both.
    pub fn stacked(&self) -> PanelData {
        let p = self.x.dim();
        PanelData::from_fn(self.n_units(), self.n_periods(), 1 + p, |n, t| {
            let mut v = Vec::with_capacity(1 + p);
            v.push(self.y.value(n, t));
            v.extend_from_slice(self.x.obs(n, t));
            v
        })
        .expect("stacking finite panels")
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta_hat: DVector<f64>,
    /// (1/NT) sum X X'.
    pub phi_hat: DMatrix<f64>,
    pub residuals: PanelData,
}

fn solve_normal_equations(xtx: &DMatrix<f64>, xty: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = xtx.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularDesign { cond });
    }
    svd.solve(xty, 0.0).map_err(|_| Error::SingularDesign { cond })
}

/// Exact least squares with materialized residuals.
pub fn ols_fit(data: &RegressionPanel) -> Result<OlsFit> {
    let p = data.n_regressors();
    let cells = (data.n_units() * data.n_periods()) as f64;
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    for n in 0..data.n_units() {
        for t in 0..data.n_periods() {
            let x = data.x.obs(n, t);
            let y = data.y.value(n, t);
            for r in 0..p {
                for c in 0..p {
                    xtx[(r, c)] += x[r] * x[c];
                }
                xty[r] += x[r] * y;
            }
        }
    }
    xtx /= cells;
    xty /= cells;
    let beta_hat = solve_normal_equations(&xtx, &xty)?;
    let residuals = PanelData::from_fn(data.n_units(), data.n_periods(), 1, |n, t| {
        let x = data.x.obs(n, t);
        let fitted: f64 = x.iter().zip(beta_hat.iter()).map(|(a, b)| a * b).sum();
        vec![data.y.value(n, t) - fitted]
    })?;
    Ok(OlsFit { beta_hat, phi_hat: xtx, residuals })
}

/// Which error series multiplies the regressors in the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// True errors U_nt (simulation only).
    Infeasible,
    /// OLS residuals.
    Feasible,
}

/// Panel of scores X_nt * U_nt (or X_nt * Uhat_nt), one column per regressor.
pub fn score_panel(data: &RegressionPanel, fit: &OlsFit, mode: ScoreMode) -> Result<PanelData> {
    let errors: &PanelData = match mode {
        ScoreMode::Infeasible => data.u.as_ref().ok_or(Error::MissingTrueErrors)?,
        ScoreMode::Feasible => &fit.residuals,
    };
    let p = data.n_regressors();
    PanelData::from_fn(data.n_units(), data.n_periods(), p, |n, t| {
        let u = errors.value(n, t);
        data.x.obs(n, t).iter().map(|x| x * u).collect()
    })
}

/// Score-subsampling sandwich variance V = phi^{-1} Sigma phi^{-1}.
///
/// `bias_correct` applies the small-plan correction with
/// (b_small, l_small) = (floor sqrt b, floor sqrt l) entrywise before
/// sandwiching. The returned estimate carries a shape warning when
/// b > sqrt(N) or l > sqrt(T).
pub fn sandwich_variance(
    data: &RegressionPanel,
    fit: &OlsFit,
    plan: &SubsamplePlan,
    mode: ScoreMode,
    bias_correct: bool,
) -> Result<VarianceEstimate> {
    let scores = score_panel(data, fit, mode)?;
    let stats = evaluate_subsamples(&scores, plan, &MeanStatistic)?;
    let sigma = if bias_correct {
        let small = small_plan(plan)?;
        let small_stats = evaluate_subsamples(&scores, &small, &MeanStatistic)?;
        sigma_hat_bc(&stats, &small_stats)?
    } else {
        sigma_hat(&stats)?
    };
    sandwich(fit, sigma)
}

/// Derive the default correction plan (floor sqrt b, floor sqrt l).
pub fn small_plan(plan: &SubsamplePlan) -> Result<SubsamplePlan> {
    let b_small = ((plan.b as f64).sqrt().floor() as usize).max(1);
    let l_small = ((plan.l as f64).sqrt().floor() as usize).max(1);
    if l_small >= plan.l {
        return Err(Error::DegenerateCorrection { l_small, l: plan.l });
    }
    Ok(SubsamplePlan {
        b: b_small,
        l: l_small,
        rate: plan.rate,
        partition_seed: mix_seed(plan.partition_seed, 0x51ab),
        include_remainder_block: plan.include_remainder_block,
    })
}

fn sandwich(fit: &OlsFit, sigma: VarianceEstimate) -> Result<VarianceEstimate> {
    let p = fit.phi_hat.nrows();
    let svd = fit.phi_hat.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularDesign { cond });
    }
    let inv = svd
        .pseudo_inverse(0.0)
        .map_err(|_| Error::SingularDesign { cond })?;
    debug_assert_eq!(sigma.value.nrows(), p);
    let value = &inv * &sigma.value * &inv;
    Ok(VarianceEstimate { value, ..sigma })
}

/// Shape condition of the sandwich asymptotics: b = o(sqrt N), l = o(sqrt T).
pub fn shape_warning(plan: &SubsamplePlan, n_units: usize, n_periods: usize) -> bool {
    (plan.b as f64) > (n_units as f64).sqrt() || (plan.l as f64) > (n_periods as f64).sqrt()
}

/// t = sqrt(N) * (beta_j - null) / sqrt(V_jj).
pub fn t_statistic(
    fit: &OlsFit,
    variance: &VarianceEstimate,
    coordinate: usize,
    null_value: f64,
    n_units: usize,
) -> Result<f64> {
    let v = variance.diag(coordinate);
    if v <= 0.0 {
        return Err(Error::ZeroVariance { coordinate });
    }
    Ok((n_units as f64).sqrt() * (fit.beta_hat[coordinate] - null_value) / v.sqrt())
}

/// Per-subsample OLS coefficients, for quantile inference on regression
/// coefficients. Evaluates on the stacked (y | X) panel.
pub struct OlsCoefficients {
    pub n_regressors: usize,
}

impl PanelStatistic for OlsCoefficients {
    fn eval(&self, panel: &PanelData, units: &[usize], t_start: usize, t_len: usize) -> Vec<f64> {
        let p = self.n_regressors;
        debug_assert_eq!(panel.dim(), p + 1);
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        for &n in units {
            for t in t_start..t_start + t_len {
                let row = panel.obs(n, t);
                let (y, x) = (row[0], &row[1..]);
                for r in 0..p {
                    for c in 0..p {
                        xtx[(r, c)] += x[r] * x[c];
                    }
                    xty[r] += x[r] * y;
                }
            }
        }
        match solve_normal_equations(&xtx, &xty) {
            Ok(beta) => beta.iter().copied().collect(),
            Err(_) => vec![f64::NAN; p],
        }
    }
}
