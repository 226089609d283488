//! Data-generating processes and the Monte Carlo coverage harness.
//!
//! Repetition r of a study cell owns `SeedStream` index r, so results are
//! bit-identical across runs and across worker counts.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_sizes, SizeSelection};
use crate::error::{Error, Result};
use crate::panel::{PanelData, RateSpec, SubsamplePlan};
use crate::quantile::{quantile_ci, IntervalSide, RootDistribution};
use crate::regression::{ols_fit, sandwich_variance, score_panel, OlsCoefficients, RegressionPanel, ScoreMode};
use crate::seed::{mix_seed, SeedStream};
use crate::subsample::{evaluate_subsamples, MeanStatistic};
use crate::variance::{normal_ci, sigma_hat, sigma_hat_bc};

/// Strictly stationary AR(1) draw with unit marginal variance:
/// gamma_1 ~ N(0,1), innovations N(0, 1 - rho^2).
pub fn ar1_series(length: usize, rho: f64, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    let innov_sd = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(length);
    let mut g: f64 = rng.sample(StandardNormal);
    out.push(g);
    for _ in 1..length {
        let v: f64 = rng.sample::<f64, _>(StandardNormal) * innov_sd;
        g = rho * g + v;
        out.push(g);
    }
    Ok(out)
}

/// Simulated designs used in the coverage studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// Y = 1 + X + U with two-way-clustered X and U, AR(1) time effects.
    LinearRegression,
    /// X = 15 * alpha_n gamma_t + 0.1 * eps, degenerate non-Gaussian limit.
    Nonseparable,
    /// X = a_n + b_t + e_nt with configurable component scales.
    ProjectedMean,
}

/// Component loadings. Interpretation depends on the kind:
/// - linear_regression / projected_mean: (unit, time, idio) scales on
///   alpha_n, gamma_t, eps_nt;
/// - nonseparable: `unit` scales the alpha*gamma interaction, `idio` the
///   noise, `time` is unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub unit: f64,
    pub time: f64,
    pub idio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub rho: f64,
    pub n_units: usize,
    pub n_periods: usize,
    pub loadings: Loadings,
}

impl DgpSpec {
    pub fn linear_regression(rho: f64, n_units: usize, n_periods: usize) -> Self {
        Self {
            kind: DgpKind::LinearRegression,
            rho,
            n_units,
            n_periods,
            loadings: Loadings { unit: 0.3, time: 0.5, idio: 0.2 },
        }
    }

    pub fn nonseparable(rho: f64, n_units: usize, n_periods: usize) -> Self {
        Self {
            kind: DgpKind::Nonseparable,
            rho,
            n_units,
            n_periods,
            loadings: Loadings { unit: 15.0, time: 0.0, idio: 0.1 },
        }
    }

    pub fn projected_mean(rho: f64, n_units: usize, n_periods: usize, sigma_a: f64, sigma_b: f64, sigma_e: f64) -> Self {
        Self {
            kind: DgpKind::ProjectedMean,
            rho,
            n_units,
            n_periods,
            loadings: Loadings { unit: sigma_a, time: sigma_b, idio: sigma_e },
        }
    }

    /// Default rate for roots under this design.
    pub fn default_rate(&self) -> RateSpec {
        match self.kind {
            DgpKind::Nonseparable => RateSpec::sqrt_cells(),
            _ => RateSpec::sqrt_units(),
        }
    }

    /// The true value of the inference target (beta_1 or the mean).
    pub fn true_parameter(&self) -> f64 {
        match self.kind {
            DgpKind::LinearRegression => 1.0,
            _ => 0.0,
        }
    }
}

/// Output of `generate`: a regression triple or a scalar panel.
#[derive(Debug, Clone)]
pub enum GeneratedData {
    Regression(RegressionPanel),
    Scalar(PanelData),
}

fn component_panel(
    n: usize,
    t: usize,
    loadings: &Loadings,
    rho: f64,
    rng: &mut ChaCha12Rng,
) -> Result<PanelData> {
    let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let gamma = ar1_series(t, rho, rng)?;
    let mut values = Vec::with_capacity(n * t);
    for a in alpha.iter() {
        for g in gamma.iter() {
            let eps: f64 = rng.sample(StandardNormal);
            values.push(loadings.unit * a + loadings.time * g + loadings.idio * eps);
        }
    }
    PanelData::from_values(n, t, 1, values)
}

/// Draw one panel (or regression triple) from the design.
pub fn generate(spec: &DgpSpec, seed: SeedStream) -> Result<GeneratedData> {
    let mut rng = seed.rng();
    let (n, t) = (spec.n_units, spec.n_periods);
    match spec.kind {
        DgpKind::LinearRegression => {
            let x = component_panel(n, t, &spec.loadings, spec.rho, &mut rng)?;
            let u = component_panel(n, t, &spec.loadings, spec.rho, &mut rng)?;
            let regressors = PanelData::from_fn(n, t, 2, |i, s| vec![1.0, x.value(i, s)])?;
            let y = PanelData::from_fn(n, t, 1, |i, s| vec![1.0 + x.value(i, s) + u.value(i, s)])?;
            Ok(GeneratedData::Regression(RegressionPanel::new(y, regressors, Some(u))?))
        }
        DgpKind::Nonseparable => {
            let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let gamma = ar1_series(t, spec.rho, &mut rng)?;
            let mut values = Vec::with_capacity(n * t);
            for a in alpha.iter() {
                for g in gamma.iter() {
                    let eps: f64 = rng.sample(StandardNormal);
                    values.push(spec.loadings.unit * a * g + spec.loadings.idio * eps);
                }
            }
            Ok(GeneratedData::Scalar(PanelData::from_values(n, t, 1, values)?))
        }
        DgpKind::ProjectedMean => {
            Ok(GeneratedData::Scalar(component_panel(n, t, &spec.loadings, spec.rho, &mut rng)?))
        }
    }
}

/// Closed-form limit variance for the projected-mean design with an AR(1)
/// time effect: V = V_a + c * V_b * (1 + rho) / (1 - rho).
pub fn analytic_v(spec: &DgpSpec, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&spec.rho) {
        return Err(Error::InvalidRho(spec.rho));
    }
    let v_a = spec.loadings.unit * spec.loadings.unit;
    let v_b = spec.loadings.time * spec.loadings.time;
    Ok(v_a + c * v_b * (1.0 + spec.rho) / (1.0 - spec.rho))
}

/// Inference methods a study can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quantile,
    Variance,
    VarianceBc,
    FeasibleVariance,
    FeasibleVarianceBc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Quantile => "quantile",
            Method::Variance => "variance",
            Method::VarianceBc => "variance_bc",
            Method::FeasibleVariance => "feasible_variance",
            Method::FeasibleVarianceBc => "feasible_variance_bc",
        }
    }

    fn score_mode(&self) -> ScoreMode {
        match self {
            Method::FeasibleVariance | Method::FeasibleVarianceBc => ScoreMode::Feasible,
            _ => ScoreMode::Infeasible,
        }
    }

    fn bias_corrected(&self) -> bool {
        matches!(self, Method::VarianceBc | Method::FeasibleVarianceBc)
    }
}

/// Fixed sizes or the plug-in selection with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SizeRule {
    Fixed { b: usize, l: usize },
    DataDriven { l_min: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellConfig {
    pub rho: f64,
    pub n_units: usize,
    pub n_periods: usize,
    pub sizes: SizeRule,
    /// Root rate override; defaults per design kind.
    #[serde(default)]
    pub rate: Option<RateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: DgpKind,
    pub cells: Vec<CellConfig>,
    pub methods: Vec<Method>,
    pub n_reps: usize,
    pub master_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub dgp: String,
    pub rho: f64,
    pub n_units: usize,
    pub n_periods: usize,
    /// Fixed sizes, or the median selected sizes under the data-driven rule.
    pub b: usize,
    pub l: usize,
    pub method: String,
    pub n_reps: usize,
    pub n_failures: usize,
    pub coverage: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

struct RepOutcome {
    /// One entry per requested method; None marks a failed repetition.
    covers: Vec<Option<bool>>,
    /// Selected (b, l) when the data-driven rule ran.
    selected: Option<(usize, usize)>,
}

fn rep_regression(
    spec: &DgpSpec,
    cell: &CellConfig,
    methods: &[Method],
    level: f64,
    stream: SeedStream,
) -> RepOutcome {
    let rate = cell.rate.unwrap_or_else(|| spec.default_rate());
    let target = spec.true_parameter();
    let partition_seed = stream.derive_seed(0xa11);
    let data = match generate(spec, stream) {
        Ok(GeneratedData::Regression(d)) => d,
        _ => return RepOutcome { covers: vec![None; methods.len()], selected: None },
    };
    let fit = match ols_fit(&data) {
        Ok(f) => f,
        Err(_) => return RepOutcome { covers: vec![None; methods.len()], selected: None },
    };
    let n = data.n_units();
    let tau_full = rate.tau(n, data.n_periods());
    let mut covers = Vec::with_capacity(methods.len());
    let mut selected = None;

    for method in methods {
        let result: Result<bool> = (|| match method {
            Method::Quantile => {
                let SizeRule::Fixed { b, l } = cell.sizes else {
                    return Err(Error::DimensionMismatch(
                        "quantile method requires fixed subsample sizes".into(),
                    ));
                };
                let plan = SubsamplePlan::new(b, l, rate, partition_seed);
                let stacked = data.stacked();
                let stat = OlsCoefficients { n_regressors: data.n_regressors() };
                let stats = evaluate_subsamples(&stacked, &plan, &stat)?;
                let dist = RootDistribution::build(&stats, fit.beta_hat[1], 1)?;
                let ci = quantile_ci(&dist, level, IntervalSide::TwoSidedEqualTail)?;
                Ok(ci.contains(target))
            }
            _ => {
                let mode = method.score_mode();
                let (b, l) = match cell.sizes {
                    SizeRule::Fixed { b, l } => (b, l),
                    SizeRule::DataDriven { l_min } => {
                        let scores = score_panel(&data, &fit, mode)?;
                        let sel = select_scores(&scores, l_min)?;
                        (sel.b, sel.l)
                    }
                };
                selected = Some((b, l));
                let plan = SubsamplePlan::new(b, l, rate, partition_seed);
                let v = sandwich_variance(&data, &fit, &plan, mode, method.bias_corrected())?;
                let (ci, _clipped) = normal_ci(fit.beta_hat[1], v.diag(1), tau_full, level, true)?;
                Ok(ci.contains(target))
            }
        })();
        covers.push(result.ok());
    }
    RepOutcome { covers, selected }
}

/// Data-driven sizes for a multivariate score panel: run the selection per
/// coordinate and take the largest l (conservative), then re-match b.
pub fn select_scores(scores: &PanelData, l_min: usize) -> Result<SizeSelection> {
    let mut best: Option<SizeSelection> = None;
    for j in 0..scores.dim() {
        let sel = select_sizes(&scores.coordinate(j), 0, l_min)?;
        best = match best {
            Some(cur) if cur.l >= sel.l => Some(cur),
            _ => Some(sel),
        };
    }
    Ok(best.expect("at least one coordinate"))
}

fn rep_scalar(
    spec: &DgpSpec,
    cell: &CellConfig,
    methods: &[Method],
    level: f64,
    stream: SeedStream,
) -> RepOutcome {
    let rate = cell.rate.unwrap_or_else(|| spec.default_rate());
    let target = spec.true_parameter();
    let partition_seed = stream.derive_seed(0xa11);
    let panel = match generate(spec, stream) {
        Ok(GeneratedData::Scalar(p)) => p,
        _ => return RepOutcome { covers: vec![None; methods.len()], selected: None },
    };
    let estimate = panel.grand_mean(0);
    let tau_full = rate.tau(panel.n_units(), panel.n_periods());
    let mut covers = Vec::with_capacity(methods.len());
    let mut selected = None;

    for method in methods {
        let result: Result<bool> = (|| {
            let (b, l) = match cell.sizes {
                SizeRule::Fixed { b, l } => (b, l),
                SizeRule::DataDriven { l_min } => {
                    let sel = select_sizes(&panel, 0, l_min)?;
                    (sel.b, sel.l)
                }
            };
            selected = Some((b, l));
            let plan = SubsamplePlan::new(b, l, rate, partition_seed);
            let stats = evaluate_subsamples(&panel, &plan, &MeanStatistic)?;
            match method {
                Method::Quantile => {
                    let dist = RootDistribution::build(&stats, estimate, 0)?;
                    let ci = quantile_ci(&dist, level, IntervalSide::TwoSidedEqualTail)?;
                    Ok(ci.contains(target))
                }
                _ => {
                    let sigma = if method.bias_corrected() {
                        let small = crate::regression::small_plan(&plan)?;
                        let small_stats = evaluate_subsamples(&panel, &small, &MeanStatistic)?;
                        sigma_hat_bc(&stats, &small_stats)?
                    } else {
                        sigma_hat(&stats)?
                    };
                    let (ci, _clipped) = normal_ci(estimate, sigma.scalar(), tau_full, level, true)?;
                    Ok(ci.contains(target))
                }
            }
        })();
        covers.push(result.ok());
    }
    RepOutcome { covers, selected }
}

/// Run the full study grid. Repetitions are parallel; aggregation uses
/// integer counts only, so the report does not depend on worker count.
pub fn coverage_study(config: &StudyConfig) -> Result<CoverageReport> {
    let mut rows = Vec::new();
    for (cell_index, cell) in config.cells.iter().enumerate() {
        let start = Instant::now();
        let spec = match config.dgp {
            DgpKind::LinearRegression => DgpSpec::linear_regression(cell.rho, cell.n_units, cell.n_periods),
            DgpKind::Nonseparable => DgpSpec::nonseparable(cell.rho, cell.n_units, cell.n_periods),
            DgpKind::ProjectedMean => {
                DgpSpec::projected_mean(cell.rho, cell.n_units, cell.n_periods, 0.3, 0.5, 0.2)
            }
        };
        let cell_master = mix_seed(config.master_seed, cell_index as u64);
        let outcomes: Vec<RepOutcome> = (0..config.n_reps)
            .into_par_iter()
            .map(|r| {
                let stream = SeedStream::new(cell_master, r as u64);
                match spec.kind {
                    DgpKind::LinearRegression => rep_regression(&spec, cell, &config.methods, config.level, stream),
                    _ => rep_scalar(&spec, cell, &config.methods, config.level, stream),
                }
            })
            .collect();
        let wall = start.elapsed().as_secs_f64();

        let (rep_b, rep_l) = representative_sizes(cell, &outcomes);
        for (m_idx, method) in config.methods.iter().enumerate() {
            let mut hits = 0usize;
            let mut ok = 0usize;
            for o in &outcomes {
                match o.covers[m_idx] {
                    Some(true) => {
                        hits += 1;
                        ok += 1;
                    }
                    Some(false) => ok += 1,
                    None => {}
                }
            }
            let (coverage, se) = if ok > 0 {
                let c = hits as f64 / ok as f64;
                (Some(c), Some((c * (1.0 - c) / ok as f64).sqrt()))
            } else {
                (None, None)
            };
            rows.push(CoverageRow {
                dgp: format!("{:?}", config.dgp),
                rho: cell.rho,
                n_units: cell.n_units,
                n_periods: cell.n_periods,
                b: rep_b,
                l: rep_l,
                method: method.label().to_string(),
                n_reps: config.n_reps,
                n_failures: config.n_reps - ok,
                coverage,
                mc_std_error: se,
                wall_time_secs: wall,
            });
        }
    }
    Ok(CoverageReport { rows })
}

fn representative_sizes(cell: &CellConfig, outcomes: &[RepOutcome]) -> (usize, usize) {
    match cell.sizes {
        SizeRule::Fixed { b, l } => (b, l),
        SizeRule::DataDriven { .. } => {
            let mut bs: Vec<usize> = outcomes.iter().filter_map(|o| o.selected.map(|s| s.0)).collect();
            let mut ls: Vec<usize> = outcomes.iter().filter_map(|o| o.selected.map(|s| s.1)).collect();
            if bs.is_empty() {
                return (0, 0);
            }
            bs.sort_unstable();
            ls.sort_unstable();
            (bs[bs.len() / 2], ls[ls.len() / 2])
        }
    }
}
