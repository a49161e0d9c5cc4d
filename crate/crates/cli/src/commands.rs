//! One function per command. Each returns a typed result; [`run`] wraps it in
//! a [`Record`] and renders tables.

use std::time::Instant;

use permcac::bw::{reduction_demo, RationalComplexMatrix, ReductionOutcome};
use permcac::cac::{approx_permanent_shifted, schedule};
use permcac::curve::{
    auto_plan, build_family_with, plan_for_curve, select_curve, FamilyOptions, InterpolationPlan, PiecewiseCurve,
};
use permcac::permanent::{ln_abs_diagnostic, permanent_ryser};
use permcac::poly::{coeffs_via_ryser, factorial, find_roots, ln_factorial};
use permcac::serde_complex;
use permcac::stats::{
    jensen_check, mean_shift_samples, root_count_samples, second_moment_samples, tail_bound_check, MeanShiftReport,
    RootCountReport, SecondMomentReport, TailReport, TrialAggregate,
};
use permcac::verify::{self, CriterionResult, Level};
use permcac::{affine_combine, sample, Complex64, EnsembleSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CommandKind, GridAxis, Params, RunConfig, SCHEMA_VERSION};
use crate::{Artifacts, CliError, Record};

type Res<T> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub n: usize,
    pub trial: u64,
    #[serde(with = "serde_complex")]
    pub value: Complex64,
    pub ln_abs: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffsResult {
    pub n: usize,
    pub trial: u64,
    /// `c_k` for `k = 0..n`.
    #[serde(with = "serde_complex::vec")]
    pub coeffs: Vec<Complex64>,
    /// `c_k / n!`.
    #[serde(with = "serde_complex::vec")]
    pub normalized: Vec<Complex64>,
    pub ln_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootsResult {
    pub n: usize,
    pub trials: usize,
    /// Trials whose root finder did not converge.
    pub excluded: usize,
    pub rows: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacResult {
    #[serde(with = "serde_complex")]
    pub f_hat: Complex64,
    #[serde(with = "serde_complex")]
    pub g_hat: Complex64,
    #[serde(with = "serde_complex::option")]
    pub exact: Option<Complex64>,
    pub rel_err: Option<f64>,
    pub s_trace: Vec<usize>,
    pub err_budget: Option<f64>,
    pub ln_err_budget: Option<f64>,
    pub curve_id: String,
    pub clear: bool,
    pub t: usize,
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub j: i64,
    #[serde(with = "serde_complex::vec")]
    pub vertices: Vec<Complex64>,
    pub width: f64,
    pub clearance: Option<f64>,
    #[serde(with = "serde_complex::option")]
    pub violating_root: Option<Complex64>,
    pub family_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenSummary {
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    /// Trials with a root too close to the contour, or no converged roots.
    pub excluded: usize,
    pub max_gap: f64,
    pub gap: TrialAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: usize,
    pub failed_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    pub level: Level,
    pub passed: bool,
    pub failed: Vec<String>,
    pub results: Vec<CriterionResult>,
}

impl VerifyResult {
    pub fn from_results(level: Level, results: Vec<CriterionResult>) -> Self {
        let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.clone()).collect();
        Self { level, passed: failed.is_empty(), failed, results }
    }
}

/// A path read from `json:<file>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    #[serde(with = "serde_complex::vec")]
    pub vertices: Vec<Complex64>,
    /// Tube width; steps are at most `width / beta` long.
    pub width: f64,
}

fn csv_table<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

fn rel_err(est: Complex64, exact: Complex64) -> Option<f64> {
    let scale = exact.norm();
    (scale > 0.0).then(|| (est - exact).norm() / scale)
}

pub fn exact(ens: &EnsembleSpec, p: &Params) -> Res<ExactResult> {
    let a = sample(ens, p.trial);
    let start = Instant::now();
    let value = permanent_ryser(&a)?;
    Ok(ExactResult {
        n: ens.n,
        trial: p.trial,
        value,
        ln_abs: ln_abs_diagnostic(value),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn coeffs(ens: &EnsembleSpec, p: &Params) -> Res<CoeffsResult> {
    let poly = coeffs_via_ryser(&sample(ens, p.trial))?;
    Ok(CoeffsResult {
        n: ens.n,
        trial: p.trial,
        coeffs: poly.coeffs(),
        normalized: poly.normalized().to_vec(),
        ln_scale: poly.ln_scale(),
    })
}

#[derive(Serialize)]
struct RootRow {
    trial: u64,
    j: usize,
    re: f64,
    im: f64,
    abs: f64,
    residual: f64,
}

pub fn roots(ens: &EnsembleSpec, p: &Params) -> Res<(RootsResult, String)> {
    let per_trial: Vec<Option<permcac::poly::RootSet>> = (0..p.trials as u64)
        .into_par_iter()
        .map(|t| Ok(find_roots(&coeffs_via_ryser(&sample(ens, t))?).ok()))
        .collect::<Res<_>>()?;
    let mut rows = Vec::new();
    for (t, set) in per_trial.iter().enumerate() {
        if let Some(set) = set {
            for (j, (z, res)) in set.roots.iter().zip(&set.residuals).enumerate() {
                rows.push(RootRow { trial: t as u64, j, re: z.re, im: z.im, abs: z.norm(), residual: *res });
            }
        }
    }
    let result = RootsResult {
        n: ens.n,
        trials: p.trials,
        excluded: per_trial.iter().filter(|s| s.is_none()).count(),
        rows: rows.len(),
        max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
    };
    Ok((result, csv_table(rows)?))
}

fn build_plan(p: &Params, a_prime: &permcac::ComplexMatrix) -> Res<InterpolationPlan> {
    let cfg = &p.cac;
    cfg.validate()?;
    if p.path == "straight" {
        let sched = schedule(cfg, p.b.abs() / p.steps as f64, p.steps)?;
        let mut plan = InterpolationPlan::straight(p.b, p.steps, sched);
        plan.beta = cfg.beta;
        return Ok(plan);
    }
    let roots = find_roots(&coeffs_via_ryser(a_prime)?)?;
    if let Some(file) = p.path.strip_prefix("json:") {
        let text = std::fs::read_to_string(file).map_err(|e| CliError::Config(format!("{file}: {e}")))?;
        let path: PathFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{file}: {e}")))?;
        let curve = PiecewiseCurve::custom(path.vertices, path.width)?;
        return Ok(plan_for_curve(&curve, Some(&roots), cfg)?);
    }
    Ok(auto_plan(&roots, p.b, cfg)?)
}

/// Estimates `Per(J + b A')` for trial `p.trial` and compares with Ryser.
pub fn cac(ens: &EnsembleSpec, p: &Params) -> Res<CacResult> {
    let a = sample(ens, p.trial);
    let one = Complex64::new(1.0, 0.0);
    let exact = if p.exact {
        Some(permanent_ryser(&affine_combine(one, &a, Complex64::new(p.b, 0.0)))?)
    } else {
        None
    };
    if p.b == 0.0 {
        // Per(J) = n!, no continuation needed
        p.cac.validate()?;
        let g_hat = Complex64::new(factorial(ens.n), 0.0);
        return Ok(CacResult {
            f_hat: Complex64::new(ln_factorial(ens.n), 0.0),
            g_hat,
            exact,
            rel_err: exact.and_then(|x| rel_err(g_hat, x)),
            s_trace: Vec::new(),
            err_budget: None,
            ln_err_budget: None,
            curve_id: "none".into(),
            clear: true,
            t: 0,
            min_ratio: None,
        });
    }
    let plan = build_plan(p, &a)?;
    let est = approx_permanent_shifted(&a, p.b, &plan, &p.cac)?;
    let out = est.outcome.expect("nonzero endpoint runs the continuation");
    Ok(CacResult {
        f_hat: out.f_hat,
        g_hat: out.g_hat,
        exact,
        rel_err: exact.and_then(|x| rel_err(out.g_hat, x)),
        s_trace: out.s_trace,
        err_budget: out.err_budget,
        ln_err_budget: out.ln_err_budget,
        curve_id: plan.curve_id.clone(),
        clear: plan.clear,
        t: plan.t(),
        min_ratio: plan.min_ratio,
    })
}

pub fn curve(ens: &EnsembleSpec, p: &Params) -> Res<CurveResult> {
    let poly = coeffs_via_ryser(&sample(ens, p.trial))?;
    let opts = FamilyOptions { allow_wide_epsilon: p.wide_epsilon, ..Default::default() };
    let family = build_family_with(p.epsilon, opts)?;
    let sel = select_curve(&poly, &family, p.strategy, ens.seed)?;
    Ok(CurveResult {
        j: sel.curve.family_index,
        vertices: sel.curve.vertices.clone(),
        width: sel.curve.width,
        clearance: sel.clearance.as_ref().map(|c| c.min_distance),
        violating_root: sel.clearance.and_then(|c| c.violating_root),
        family_size: family.len(),
    })
}

#[derive(Serialize)]
struct MomentRow {
    trial: usize,
    radial: f64,
    angular: f64,
}

pub fn stats_moment(ens: &EnsembleSpec, p: &Params, per_trial: Option<&str>) -> Res<(SecondMomentReport, String)> {
    let samples = second_moment_samples(ens, p.r, p.trials)?;
    let mut report = SecondMomentReport::from_samples(ens, p.r, &samples);
    report.radial.per_trial_path = per_trial.map(String::from);
    report.angular.per_trial_path = per_trial.map(String::from);
    let table = csv_table(samples.iter().enumerate().map(|(trial, s)| MomentRow {
        trial,
        radial: s.radial,
        angular: s.angular,
    }))?;
    Ok((report, table))
}

#[derive(Serialize)]
struct CountRow {
    trial: usize,
    r: f64,
    count: usize,
}

pub fn stats_rootcount(ens: &EnsembleSpec, p: &Params, per_trial: Option<&str>) -> Res<(RootCountReport, String)> {
    let samples = root_count_samples(ens, &p.radii, p.trials)?;
    let mut report = RootCountReport::from_samples(ens, &p.radii, &samples);
    for stat in &mut report.radii {
        stat.count.per_trial_path = per_trial.map(String::from);
        stat.any_root.per_trial_path = per_trial.map(String::from);
    }
    let rows = samples.iter().enumerate().flat_map(|(trial, counts)| {
        counts.iter().flat_map(move |c| {
            c.iter().zip(&p.radii).map(move |(&count, &r)| CountRow { trial, r, count })
        })
    });
    Ok((report, csv_table(rows)?))
}

#[derive(Serialize)]
struct JensenRow {
    trial: usize,
    lhs: f64,
    rhs: f64,
    gap: f64,
    points: usize,
}

pub fn stats_jensen(ens: &EnsembleSpec, p: &Params, per_trial: Option<&str>) -> Res<(JensenSummary, String)> {
    if !(p.r > 0.0) {
        return Err(CliError::Config(format!("radius must be positive, got {}", p.r)));
    }
    let reports: Vec<Option<permcac::stats::JensenReport>> = (0..p.trials as u64)
        .into_par_iter()
        .map(|t| {
            let poly = coeffs_via_ryser(&sample(ens, t))?;
            match jensen_check(&poly, p.r, p.quad_points) {
                Ok(r) => Ok(Some(r)),
                Err(permcac::Error::RootOnContour { .. } | permcac::Error::NoConvergence { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Res<_>>()?;
    let gaps: Vec<f64> = reports.iter().flatten().map(|r| r.gap).collect();
    let excluded = reports.len() - gaps.len();
    let mut gap = TrialAggregate::from_samples(&gaps, ens.seed);
    gap.excluded = excluded;
    gap.per_trial_path = per_trial.map(String::from);
    let summary = JensenSummary {
        n: ens.n,
        r: p.r,
        trials: p.trials,
        excluded,
        max_gap: gaps.iter().copied().fold(0.0, f64::max),
        gap,
    };
    let rows = reports.iter().enumerate().filter_map(|(trial, r)| {
        r.as_ref().map(|r| JensenRow { trial, lhs: r.lhs, rhs: r.rhs, gap: r.gap, points: r.points })
    });
    Ok((summary, csv_table(rows)?))
}

#[derive(Serialize)]
struct ValueRow {
    trial: usize,
    value: f64,
}

pub fn stats_meanshift(ens: &EnsembleSpec, p: &Params, per_trial: Option<&str>) -> Res<(MeanShiftReport, String)> {
    let samples = mean_shift_samples(ens.n, ens.mu, p.trials, ens.seed)?;
    let mut report = MeanShiftReport::from_samples(ens.n, ens.mu, ens.seed, &samples);
    report.aggregate.per_trial_path = per_trial.map(String::from);
    let table = csv_table(samples.iter().enumerate().map(|(trial, &value)| ValueRow { trial, value }))?;
    Ok((report, table))
}

pub fn stats_tail(p: &Params) -> Res<TailReport> {
    Ok(tail_bound_check(p.cac.m, p.l, p.cac.beta)?)
}

pub fn bw_demo(ens: &EnsembleSpec, p: &Params) -> Res<ReductionOutcome> {
    let a = RationalComplexMatrix::random(ens.n, ens.seed);
    Ok(reduction_demo(&a, p.points, p.rate, ens.seed)?)
}

/// One grid point with its values applied to the ensemble and parameters.
fn apply_grid(ens: &EnsembleSpec, p: &Params, keys: &[GridAxis], values: &[f64]) -> (EnsembleSpec, Params) {
    let (mut ens, mut p) = (*ens, p.clone());
    for (axis, &v) in keys.iter().zip(values) {
        match axis.key.as_str() {
            "m" => p.cac.m = v as usize,
            "b" => p.b = v,
            "beta" => p.cac.beta = v,
            "n" => ens.n = v as usize,
            _ => unreachable!("grid keys are validated"),
        }
    }
    (ens, p)
}

fn grid_points(axes: &[GridAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

pub fn sweep(ens: &EnsembleSpec, p: &Params) -> Res<(SweepResult, String)> {
    let jobs: Vec<(Vec<f64>, u64)> = grid_points(&p.grid)
        .into_iter()
        .flat_map(|point| (0..p.repeat as u64).map(move |t| (point.clone(), t)))
        .collect();
    let outcomes: Vec<Res<CacResult>> = jobs
        .par_iter()
        .map(|(point, t)| {
            let (ens, mut p) = apply_grid(ens, p, &p.grid, point);
            p.trial = *t;
            cac(&ens, &p)
        })
        .collect();
    let mut header: Vec<String> = p.grid.iter().map(|a| a.key.clone()).collect();
    header.extend(
        [
            "trial", "f_hat_re", "f_hat_im", "g_hat_re", "g_hat_im", "exact_re", "exact_im", "rel_err", "clear", "t",
            "error",
        ]
        .map(String::from),
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut failed = 0;
    for ((point, t), out) in jobs.iter().zip(&outcomes) {
        let mut row: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        row.push(t.to_string());
        match out {
            Ok(r) => row.extend([
                r.f_hat.re.to_string(),
                r.f_hat.im.to_string(),
                r.g_hat.re.to_string(),
                r.g_hat.im.to_string(),
                opt(r.exact.map(|z| z.re)),
                opt(r.exact.map(|z| z.im)),
                opt(r.rel_err),
                r.clear.to_string(),
                r.t.to_string(),
                String::new(),
            ]),
            Err(e) => {
                failed += 1;
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(e.code().to_string());
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let table = String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    Ok((SweepResult { rows: jobs.len(), failed_rows: failed }, table))
}

pub fn verify_suite(level: Level) -> VerifyResult {
    VerifyResult::from_results(level, verify::run(level))
}

fn record<T: Serialize>(cfg: &RunConfig, result: T) -> Res<String> {
    let rec = Record { schema_version: SCHEMA_VERSION.to_string(), config: cfg.clone(), result };
    serde_json::to_string_pretty(&rec).map_err(|e| CliError::Io(e.to_string()))
}

fn done<T: Serialize>(cfg: &RunConfig, result: T, table: Option<String>) -> Res<Artifacts> {
    Ok(Artifacts { record: record(cfg, result)?, table, exit_code: 0 })
}

/// Runs the configured command.
pub fn run(cfg: &RunConfig) -> Res<Artifacts> {
    cfg.validate()?;
    let (ens, p) = (&cfg.ensemble, &cfg.params);
    let per = cfg.per_trial.as_deref();
    let keep = |table: String| per.map(|_| table);
    match cfg.command {
        CommandKind::Exact => done(cfg, exact(ens, p)?, None),
        CommandKind::Coeffs => done(cfg, coeffs(ens, p)?, None),
        CommandKind::Roots => {
            let (r, t) = roots(ens, p)?;
            done(cfg, r, Some(t))
        }
        CommandKind::Cac => done(cfg, cac(ens, p)?, None),
        CommandKind::Curve => done(cfg, curve(ens, p)?, None),
        CommandKind::StatsMoment => {
            let (r, t) = stats_moment(ens, p, per)?;
            done(cfg, r, keep(t))
        }
        CommandKind::StatsRootcount => {
            let (r, t) = stats_rootcount(ens, p, per)?;
            done(cfg, r, keep(t))
        }
        CommandKind::StatsJensen => {
            let (r, t) = stats_jensen(ens, p, per)?;
            done(cfg, r, keep(t))
        }
        CommandKind::StatsMeanshift => {
            let (r, t) = stats_meanshift(ens, p, per)?;
            done(cfg, r, keep(t))
        }
        CommandKind::StatsTail => done(cfg, stats_tail(p)?, None),
        CommandKind::BwDemo => done(cfg, bw_demo(ens, p)?, None),
        CommandKind::Sweep => {
            let (r, t) = sweep(ens, p)?;
            done(cfg, r, Some(t))
        }
        CommandKind::Verify => {
            let v = verify_suite(p.level);
            let code = if v.passed { 0 } else { 1 };
            Ok(Artifacts { record: record(cfg, v)?, table: None, exit_code: code })
        }
    }
}
