//! `panelsub`: subsampling inference for two-way clustered panels.
//!
//! Subcommands: `infer` (confidence intervals on one panel), `bandwidth`
//! (data-driven subsample-size selection audit), `simulate` (Monte Carlo
//! coverage study). Exit codes: 0 success, 1 usage error, 2 data error.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use panelsub::bandwidth::select_sizes;
use panelsub::quantile::{quantile_ci, IntervalSide, RootDistribution};
use panelsub::regression::{
    ols_fit, sandwich_variance, t_statistic, OlsCoefficients, RegressionPanel, ScoreMode,
};
use panelsub::sim::{coverage_study, select_scores, StudyConfig};
use panelsub::variance::{normal_ci, sigma_hat, sigma_hat_bc};
use panelsub::{
    evaluate_subsamples, read_panel_csv_path, MeanStatistic, PanelData, RateSpec, SubsamplePlan,
};

/// Default master seed; fixed so every published number is reproducible
/// without passing --seed.
const DEFAULT_SEED: u64 = 20_240_817;

#[derive(Parser)]
#[command(name = "panelsub", version, about = "Subsampling inference for two-way clustered panel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Confidence intervals for a statistic of one panel.
    Infer(InferArgs),
    /// Data-driven subsample-size selection with the iteration trace.
    Bandwidth(BandwidthArgs),
    /// Monte Carlo coverage study from a JSON study configuration.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Quantile,
    Variance,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Ols,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    /// tau = sqrt(N), the mean / regression default.
    SqrtN,
    /// tau = sqrt(N*T), the degenerate fast-rate case.
    SqrtNt,
}

impl RateArg {
    fn spec(self) -> RateSpec {
        match self {
            RateArg::SqrtN => RateSpec::sqrt_units(),
            RateArg::SqrtNt => RateSpec::sqrt_cells(),
        }
    }
}

#[derive(Args)]
struct InferArgs {
    /// Long-format CSV with header unit,time,v1[,v2,...].
    #[arg(long)]
    panel: PathBuf,
    /// Statistic of the panel (scalar mode).
    #[arg(long, value_enum, default_value = "mean", conflicts_with = "model")]
    statistic: StatisticArg,
    /// Fit a regression instead of a scalar statistic (column 0 of the CSV
    /// values is the outcome, the rest are regressors).
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Coefficient index for regression inference (0 = first regressor).
    #[arg(long, requires = "model")]
    target: Option<usize>,
    #[arg(long, value_enum, default_value = "quantile")]
    method: MethodArg,
    /// Apply the small-subsample bias correction (variance method only).
    #[arg(long)]
    bias_correct: bool,
    /// Unit block size; selected from the data when omitted.
    #[arg(long)]
    b: Option<usize>,
    /// Time window length; selected from the data when omitted.
    #[arg(long)]
    l: Option<usize>,
    /// Floor for the data-driven window length.
    #[arg(long, default_value_t = 4)]
    l_min: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value = "sqrt-n")]
    rate: RateArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct BandwidthArgs {
    /// Long-format CSV with header unit,time,v1[,v2,...].
    #[arg(long)]
    panel: PathBuf,
    /// Coordinate of the observation vector to analyze.
    #[arg(long, default_value_t = 0)]
    target: usize,
    /// Floor for the selected window length.
    #[arg(long, default_value_t = 4)]
    l_min: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON study configuration (design, cells, methods, reps, seed).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured repetition count.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker thread count; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Data or validation failure; maps to exit code 2.
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Infer(args) => run_infer(args),
        Command::Bandwidth(args) => run_bandwidth(args),
        Command::Simulate(args) => run_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(DataError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(value: &impl Serialize) -> Result<(), DataError> {
    let out = serde_json::to_string_pretty(value)?;
    println!("{out}");
    Ok(())
}

fn choose_sizes(
    args_b: Option<usize>,
    args_l: Option<usize>,
    panel: &PanelData,
    coordinate: usize,
    l_min: usize,
) -> Result<(usize, usize), DataError> {
    match (args_b, args_l) {
        (Some(b), Some(l)) => Ok((b, l)),
        _ => {
            let sel = select_sizes(panel, coordinate, l_min)?;
            Ok((args_b.unwrap_or(sel.b), args_l.unwrap_or(sel.l)))
        }
    }
}

fn run_infer(args: InferArgs) -> Result<(), DataError> {
    let panel = read_panel_csv_path(&args.panel)?;
    match args.model {
        None => infer_mean(&args, &panel),
        Some(ModelArg::Ols) => infer_ols(&args, &panel),
    }
}

fn infer_mean(args: &InferArgs, panel: &PanelData) -> Result<(), DataError> {
    if panel.dim() != 1 {
        return Err(DataError(format!(
            "statistic mean expects a single value column, got {}",
            panel.dim()
        )));
    }
    let (b, l) = choose_sizes(args.b, args.l, panel, 0, args.l_min)?;
    let rate = args.rate.spec();
    let plan = SubsamplePlan::new(b, l, rate, args.seed);
    let stats = evaluate_subsamples(panel, &plan, &MeanStatistic)?;
    let estimate = panel.grand_mean(0);
    match args.method {
        MethodArg::Quantile => {
            let dist = RootDistribution::build(&stats, estimate, 0)?;
            let ci = quantile_ci(&dist, args.level, IntervalSide::TwoSidedEqualTail)?;
            emit(&json!({
                "estimate": estimate,
                "lower": ci.lower,
                "upper": ci.upper,
                "level": args.level,
                "method": "quantile",
                "b": b,
                "l": l,
            }))
        }
        MethodArg::Variance => {
            let sigma = if args.bias_correct {
                let small = panelsub::regression::small_plan(&plan)?;
                let small_stats = evaluate_subsamples(panel, &small, &MeanStatistic)?;
                sigma_hat_bc(&stats, &small_stats)?
            } else {
                sigma_hat(&stats)?
            };
            let tau_full = rate.tau(panel.n_units(), panel.n_periods());
            let (ci, clipped) = normal_ci(estimate, sigma.scalar(), tau_full, args.level, true)?;
            emit(&json!({
                "estimate": estimate,
                "variance": sigma.scalar(),
                "lower": ci.lower,
                "upper": ci.upper,
                "level": args.level,
                "method": "variance",
                "b": b,
                "l": l,
                "b_small": sigma.small_plan.map(|p| p.0),
                "l_small": sigma.small_plan.map(|p| p.1),
                "clipped": clipped,
            }))
        }
    }
}

fn infer_ols(args: &InferArgs, panel: &PanelData) -> Result<(), DataError> {
    if panel.dim() < 2 {
        return Err(DataError(
            "model ols expects at least two value columns (outcome then regressors)".into(),
        ));
    }
    let target = args.target.unwrap_or(0);
    let p = panel.dim() - 1;
    if target >= p {
        return Err(DataError(format!("target {target} out of range for {p} regressors")));
    }
    let y = panel.coordinate(0);
    let x = PanelData::from_fn(panel.n_units(), panel.n_periods(), p, |n, t| {
        panel.obs(n, t)[1..].to_vec()
    })?;
    let data = RegressionPanel::new(y, x, None)?;
    let fit = ols_fit(&data)?;
    let rate = args.rate.spec();
    let beta: Vec<f64> = fit.beta_hat.iter().copied().collect();
    match args.method {
        MethodArg::Quantile => {
            let stacked = data.stacked();
            let (b, l) = choose_sizes(args.b, args.l, &stacked, 1 + target, args.l_min)?;
            let plan = SubsamplePlan::new(b, l, rate, args.seed);
            let stat = OlsCoefficients { n_regressors: p };
            let stats = evaluate_subsamples(&stacked, &plan, &stat)?;
            let dist = RootDistribution::build(&stats, beta[target], target)?;
            let ci = quantile_ci(&dist, args.level, IntervalSide::TwoSidedEqualTail)?;
            emit(&json!({
                "estimate": beta[target],
                "lower": ci.lower,
                "upper": ci.upper,
                "level": args.level,
                "method": "quantile",
                "model": "ols",
                "target": target,
                "beta_hat": beta,
                "b": b,
                "l": l,
            }))
        }
        MethodArg::Variance => {
            let scores = panelsub::regression::score_panel(&data, &fit, ScoreMode::Feasible)?;
            let (b, l) = match (args.b, args.l) {
                (Some(b), Some(l)) => (b, l),
                _ => {
                    let sel = select_scores(&scores, args.l_min)?;
                    (args.b.unwrap_or(sel.b), args.l.unwrap_or(sel.l))
                }
            };
            let plan = SubsamplePlan::new(b, l, rate, args.seed);
            let v = sandwich_variance(&data, &fit, &plan, ScoreMode::Feasible, args.bias_correct)?;
            let tau_full = rate.tau(data.n_units(), data.n_periods());
            let mut intervals = Vec::with_capacity(p);
            let mut t_stats = Vec::with_capacity(p);
            let mut clipped_any = false;
            for j in 0..p {
                let (ci, clipped) = normal_ci(beta[j], v.diag(j), tau_full, args.level, true)?;
                clipped_any |= clipped;
                intervals.push(json!({"coordinate": j, "lower": ci.lower, "upper": ci.upper}));
                t_stats.push(t_statistic(&fit, &v, j, 0.0, data.n_units()).ok());
            }
            let matrix: Vec<Vec<f64>> =
                (0..p).map(|r| (0..p).map(|c| v.value[(r, c)]).collect()).collect();
            emit(&json!({
                "estimate": beta[target],
                "variance": v.diag(target),
                "lower": intervals[target]["lower"],
                "upper": intervals[target]["upper"],
                "level": args.level,
                "method": "variance",
                "model": "ols",
                "target": target,
                "beta_hat": beta,
                "v_matrix": matrix,
                "intervals": intervals,
                "t_statistics": t_stats,
                "b": b,
                "l": l,
                "b_small": v.small_plan.map(|s| s.0),
                "l_small": v.small_plan.map(|s| s.1),
                "clipped": clipped_any,
            }))
        }
    }
}

fn run_bandwidth(args: BandwidthArgs) -> Result<(), DataError> {
    let panel = read_panel_csv_path(&args.panel)?;
    if args.target >= panel.dim() {
        return Err(DataError(format!(
            "target {} out of range for {} value columns",
            args.target,
            panel.dim()
        )));
    }
    let sel = select_sizes(&panel, args.target, args.l_min)?;
    emit(&json!({
        "l_opt": sel.l_opt,
        "l": sel.l,
        "b": sel.b,
        "w_opt": sel.w_opt,
        "iterations": sel.w_trace,
        "floor_applied": sel.floor_applied,
        "degenerate": sel.degenerate,
    }))
}

fn run_simulate(args: SimulateArgs) -> Result<(), DataError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: StudyConfig = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        config.n_reps = reps;
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| DataError(e.to_string()))?;
    }
    let report = coverage_study(&config)?;

    // Human-readable table on the diagnostic stream, CSV on stdout (or the
    // requested file) so the machine output stays pipeable.
    eprintln!(
        "{:<18} {:>5} {:>5} {:>5} {:>4} {:>4} {:>21} {:>6} {:>9} {:>8}",
        "dgp", "rho", "N", "T", "b", "l", "method", "reps", "coverage", "se"
    );
    for row in &report.rows {
        eprintln!(
            "{:<18} {:>5} {:>5} {:>5} {:>4} {:>4} {:>21} {:>6} {:>9} {:>8}",
            row.dgp,
            row.rho,
            row.n_units,
            row.n_periods,
            row.b,
            row.l,
            row.method,
            row.n_reps,
            row.coverage.map_or("n/a".into(), |c| format!("{c:.3}")),
            row.mc_std_error.map_or("n/a".into(), |s| format!("{s:.4}")),
        );
    }

    let sink: Box<dyn std::io::Write> = match &args.csv {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    for row in &report.rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    std::io::stdout().flush()?;
    Ok(())
}
