//! Computational analytic continuation of `f = ln g` along a discretized
//! curve, carrying a shrinking table of Taylor coefficients `f^{(k)}/k!`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curve::InterpolationPlan;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::poly::{coeffs_via_ryser, factorial, find_roots, InterpPolynomial, RootSet};

pub const DEFAULT_SCHEDULE_FLOOR: usize = 4;
const FEASIBILITY_SEARCH_LIMIT: usize = 1 << 22;

/// Taylor coefficients `phis[k] = f^{(k)}(base_point) / k!` of `f = ln g_norm`,
/// where `g = g_norm * exp(ln_offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTaylorTable {
    #[serde(with = "crate::serde_complex")]
    pub base_point: Complex64,
    #[serde(with = "crate::serde_complex::vec")]
    pub phis: Vec<Complex64>,
    pub step_index: usize,
    pub ln_offset: f64,
}

impl LogTaylorTable {
    pub fn s(&self) -> usize {
        self.phis.len() - 1
    }

    /// `f_hat` at the base point with the offset re-applied.
    pub fn f_value(&self) -> Complex64 {
        self.phis[0] + self.ln_offset
    }

    /// Truncated series `sum_k phis[k] z^k` (offset excluded).
    pub fn series(&self, z: Complex64) -> Complex64 {
        crate::poly::horner(&self.phis, z)
    }
}

/// `beta` written as e to five decimals (2.71828) still counts as e.
pub const BETA_ROUNDING: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacConfig {
    pub beta: f64,
    pub delta: f64,
    pub m: usize,
    pub schedule_floor: usize,
    /// Permits `1 < beta < e`, outside the range the error analysis covers.
    pub allow_small_beta: bool,
}

impl Default for CacConfig {
    fn default() -> Self {
        Self {
            beta: std::f64::consts::E,
            delta: 1e-3,
            m: 60,
            schedule_floor: DEFAULT_SCHEDULE_FLOOR,
            allow_small_beta: false,
        }
    }
}

impl CacConfig {
    pub fn with_m(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(Error::InvalidConfig(format!("beta must exceed 1, got {}", self.beta)));
        }
        if self.beta < std::f64::consts::E - BETA_ROUNDING && !self.allow_small_beta {
            return Err(Error::InvalidConfig(format!(
                "beta = {} is below e; set allow_small_beta to run anyway",
                self.beta
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        if self.schedule_floor == 0 || self.m < 2 * self.schedule_floor {
            return Err(Error::InvalidConfig(format!(
                "m = {} must be at least twice the schedule floor {}",
                self.m, self.schedule_floor
            )));
        }
        Ok(())
    }
}

/// Table at the origin from the full coefficient vector.
pub fn log_taylor_from_coeffs(p: &InterpPolynomial, m: usize) -> Result<LogTaylorTable> {
    log_taylor_from_prefix(p.normalized(), p.degree(), p.ln_scale(), m)
}

/// Table at the origin from the leading coefficients `c_0..c_K` of a degree-`n`
/// polynomial (normalized by `exp(ln_offset)`). Needs `K >= min(m, n)`.
///
/// With `u_k = c_k / c_0` the log series obeys
/// `phi_k = u_k - (1/k) sum_{j=1}^{k-1} j phi_j u_{k-j}`, and `u_k = 0` beyond `n`.
pub fn log_taylor_from_prefix(prefix: &[Complex64], n: usize, ln_offset: f64, m: usize) -> Result<LogTaylorTable> {
    let needed = m.min(n);
    if prefix.len() <= needed {
        return Err(Error::InsufficientDerivatives {
            requested: needed,
            available: prefix.len().saturating_sub(1),
        });
    }
    let c0 = prefix[0];
    if c0.norm() == 0.0 {
        return Err(Error::ZeroConstantTerm);
    }
    let u: Vec<Complex64> = prefix[..=needed].iter().map(|c| c / c0).collect();
    let mut phis = Vec::with_capacity(m + 1);
    phis.push(c0.ln());
    for k in 1..=m {
        let mut acc = if k <= needed { u[k] } else { Complex64::new(0.0, 0.0) };
        let lo = if k > needed { k - needed } else { 1 };
        let mut inner = Complex64::new(0.0, 0.0);
        for j in lo..k {
            inner += phis[j] * u[k - j] * j as f64;
        }
        acc -= inner / k as f64;
        if !acc.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        phis.push(acc);
    }
    Ok(LogTaylorTable {
        base_point: Complex64::new(0.0, 0.0),
        phis,
        step_index: 0,
        ln_offset,
    })
}

/// Raw schedule values `s_0 = m`, `s_{i+1} = floor((ln beta / 2) s_i / ln(2 s_i / delta_min))`,
/// each capped at its predecessor.
pub fn schedule_values(m: usize, beta: f64, delta_min: f64, t: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(t + 1);
    out.push(m as i64);
    for _ in 0..t {
        let s = *out.last().unwrap();
        out.push(next_count(s, beta, delta_min));
    }
    out
}

fn next_count(s: i64, beta: f64, delta_min: f64) -> i64 {
    if s <= 0 {
        return s;
    }
    let denom = (2.0 * s as f64 / delta_min).ln();
    if denom <= 0.0 {
        return s;
    }
    let next = (beta.ln() / 2.0 * s as f64 / denom).floor();
    (next as i64).min(s)
}

/// Smallest `m >= 2 floor` whose schedule keeps every count at or above `floor`.
pub fn min_feasible_m(beta: f64, delta_min: f64, t: usize, floor: usize) -> Option<usize> {
    // find any feasible m by doubling, then scan up to it
    let mut hi = 2 * floor;
    while !is_feasible(hi, beta, delta_min, t, floor) {
        hi *= 2;
        if hi > FEASIBILITY_SEARCH_LIMIT {
            return None;
        }
    }
    (2 * floor..=hi).find(|&m| is_feasible(m, beta, delta_min, t, floor))
}

/// Whether the schedule from `m` keeps all `t + 1` counts at or above `floor`.
pub fn is_feasible(m: usize, beta: f64, delta_min: f64, t: usize, floor: usize) -> bool {
    let mut s = m as i64;
    for _ in 0..t {
        if s < floor as i64 {
            return false;
        }
        s = next_count(s, beta, delta_min);
    }
    s >= floor as i64
}

/// Largest `t` for which the schedule from `m` stays at or above `floor`.
pub fn max_feasible_t(m: usize, beta: f64, delta_min: f64, floor: usize) -> usize {
    let mut s = m as i64;
    let mut t = 0;
    loop {
        let next = next_count(s, beta, delta_min);
        if next < floor as i64 || t > 10_000 {
            return t;
        }
        if next == s && s >= floor as i64 {
            // a fixed point never underflows
            return usize::MAX;
        }
        s = next;
        t += 1;
    }
}

pub fn schedule(cfg: &CacConfig, delta_min: f64, t: usize) -> Result<Vec<usize>> {
    if !(delta_min > 0.0) {
        return Err(Error::InvalidConfig(format!("delta_min must be positive, got {delta_min}")));
    }
    let values = schedule_values(cfg.m, cfg.beta, delta_min, t);
    if let Some(step) = values.iter().position(|&s| s < cfg.schedule_floor as i64) {
        return Err(Error::ScheduleUnderflow {
            step,
            value: values[step],
            floor: cfg.schedule_floor,
            max_feasible_t: max_feasible_t(cfg.m, cfg.beta, delta_min, cfg.schedule_floor),
            min_feasible_m: min_feasible_m(cfg.beta, delta_min, t, cfg.schedule_floor),
        });
    }
    Ok(values.into_iter().map(|s| s as usize).collect())
}

/// Re-expands the table around `base_point + delta`, keeping `s_next + 1` terms:
/// `phi'_k = sum_{p=0}^{s-k} C(k+p, p) phi_{k+p} delta^p`.
pub fn taylor_shift(tab: &LogTaylorTable, delta: Complex64, s_next: usize) -> Result<LogTaylorTable> {
    let s = tab.s();
    if s_next > s {
        return Err(Error::InsufficientDerivatives { requested: s_next, available: s });
    }
    let step = tab.step_index + 1;
    let mut phis = Vec::with_capacity(s_next + 1);
    for k in 0..=s_next {
        let mut acc = Complex64::new(0.0, 0.0);
        // weight = C(k+p, p) delta^p
        let mut weight = Complex64::new(1.0, 0.0);
        for p in 0..=s - k {
            acc += tab.phis[k + p] * weight;
            weight *= delta * ((k + p + 1) as f64 / (p + 1) as f64);
        }
        if !acc.is_finite() {
            return Err(Error::NonFinite { step });
        }
        phis.push(acc);
    }
    Ok(LogTaylorTable {
        base_point: tab.base_point + delta,
        phis,
        step_index: step,
        ln_offset: tab.ln_offset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacOutcome {
    /// Estimate of `ln g(y_t)`, normalization offset included.
    #[serde(with = "crate::serde_complex")]
    pub f_hat: Complex64,
    #[serde(with = "crate::serde_complex")]
    pub g_hat: Complex64,
    #[serde(with = "crate::serde_complex")]
    pub endpoint: Complex64,
    pub s_trace: Vec<usize>,
    /// `sum_i kappa_i exp(sigma_t - sigma_i)` with measured root distances;
    /// absent when roots are unavailable or the sum overflows.
    pub err_budget: Option<f64>,
    pub ln_err_budget: Option<f64>,
}

/// Continues from the origin with the schedule implied by `cfg` and the
/// shortest step.
pub fn cac_run(p: &InterpPolynomial, steps: &[Complex64], cfg: &CacConfig) -> Result<CacOutcome> {
    cfg.validate()?;
    let sched = if steps.is_empty() {
        vec![cfg.m]
    } else {
        let delta_min = steps.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        schedule(cfg, delta_min, steps.len())?
    };
    cac_run_with_schedule(p, steps, &sched)
}

/// Continues from the origin with an explicit schedule `s_0..s_t`.
pub fn cac_run_with_schedule(p: &InterpPolynomial, steps: &[Complex64], sched: &[usize]) -> Result<CacOutcome> {
    let table = log_taylor_from_coeffs(p, sched[0])?;
    let mut out = continue_table(table, steps, sched)?;
    if let Ok(roots) = find_roots(p) {
        let budget = error_budget(&roots, steps, sched, p.degree());
        out.ln_err_budget = Some(budget.ln_total);
        out.err_budget = Some(budget.total).filter(|b| b.is_finite());
    }
    Ok(out)
}

/// Walks `steps` starting from an already-built table.
pub fn continue_table(table: LogTaylorTable, steps: &[Complex64], sched: &[usize]) -> Result<CacOutcome> {
    if sched.len() != steps.len() + 1 {
        return Err(Error::InvalidConfig(format!(
            "schedule has {} entries for {} steps",
            sched.len(),
            steps.len()
        )));
    }
    if table.s() < sched[0] {
        return Err(Error::InsufficientDerivatives { requested: sched[0], available: table.s() });
    }
    let mut table = table;
    for (i, &d) in steps.iter().enumerate() {
        table = taylor_shift(&table, d, sched[i + 1])?;
    }
    let f_hat = table.f_value();
    Ok(CacOutcome {
        f_hat,
        g_hat: f_hat.exp(),
        endpoint: table.base_point,
        s_trace: sched.to_vec(),
        err_budget: None,
        ln_err_budget: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// `ln kappa_i + sigma_t - sigma_i` per step.
    pub ln_terms: Vec<f64>,
    /// Measured ratio `dist(y_{i-1}, roots) / |Delta_i|` per step.
    pub ratios: Vec<f64>,
    pub ln_total: f64,
    pub total: f64,
}

/// `kappa_i = 3n (2 s_{i-1} / |Delta_i|)^{s_i} beta_i^{-s_{i-1}}` with
/// `beta_i` the measured ratio, accumulated as `sum_i kappa_i exp(sigma_t - sigma_i)`.
pub fn error_budget(roots: &RootSet, steps: &[Complex64], sched: &[usize], n: usize) -> ErrorBudget {
    let sigma_t: f64 = steps.iter().map(|d| d.norm()).sum();
    let mut sigma = 0.0;
    let mut y = Complex64::new(0.0, 0.0);
    let mut ln_terms = Vec::with_capacity(steps.len());
    let mut ratios = Vec::with_capacity(steps.len());
    for (i, &d) in steps.iter().enumerate() {
        let len = d.norm();
        let ratio = roots.distance_to(y) / len;
        sigma += len;
        let s_prev = sched[i] as f64;
        let s_cur = sched[i + 1] as f64;
        let ln_kappa = (3.0 * n.max(1) as f64).ln() + s_cur * (2.0 * s_prev / len).ln() - s_prev * ratio.ln();
        ln_terms.push(ln_kappa + sigma_t - sigma);
        ratios.push(ratio);
        y += d;
    }
    let ln_total = log_sum_exp(&ln_terms);
    ErrorBudget {
        total: ln_total.exp(),
        ln_terms,
        ratios,
        ln_total,
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedEstimate {
    /// Estimate of `Per(J + b A')`.
    #[serde(with = "crate::serde_complex")]
    pub estimate: Complex64,
    /// `b^{-n}` times the estimate: `Per` of the matrix with mean `1/b`.
    #[serde(with = "crate::serde_complex::option")]
    pub rescaled: Option<Complex64>,
    pub outcome: Option<CacOutcome>,
}

/// Estimates `Per(J + b A')` by continuing along `plan`, whose endpoint must be `b`.
pub fn approx_permanent_shifted(
    a_prime: &ComplexMatrix,
    b: f64,
    plan: &InterpolationPlan,
    cfg: &CacConfig,
) -> Result<ShiftedEstimate> {
    cfg.validate()?;
    let n = a_prime.dim();
    if b == 0.0 {
        return Ok(ShiftedEstimate {
            estimate: Complex64::new(factorial(n), 0.0),
            rescaled: None,
            outcome: None,
        });
    }
    let end: Complex64 = plan.steps.deltas.iter().sum();
    if (end - b).norm() > 1e-12 * (1.0 + b.abs()) {
        return Err(Error::InvalidConfig(format!("plan ends at {end}, expected {b}")));
    }
    let p = coeffs_via_ryser(a_prime)?;
    let outcome = cac_run_with_schedule(&p, &plan.steps.deltas, &plan.schedule)?;
    let estimate = outcome.g_hat;
    let rescaled = (outcome.f_hat - n as f64 * b.abs().ln()).exp() * if b < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    Ok(ShiftedEstimate {
        estimate,
        rescaled: Some(rescaled),
        outcome: Some(outcome),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{sample, EnsembleSpec};
    use crate::poly::eval;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn linear(a: Complex64) -> InterpPolynomial {
        InterpPolynomial::from_normalized(vec![c(1.0, 0.0), a])
    }

    #[test]
    fn log_series_of_linear_factor() {
        let a = c(0.6, -0.3);
        let tab = log_taylor_from_coeffs(&linear(a), 30).unwrap();
        assert_eq!(tab.phis[0], c(0.0, 0.0));
        for k in 1..=30 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let expected = a.powi(k as i32) * (sign / k as f64);
            assert!(rel(tab.phis[k], expected) < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn constant_polynomial_has_flat_log() {
        let p = InterpPolynomial::from_normalized(vec![c(2.0, 0.0)]);
        let tab = log_taylor_from_coeffs(&p, 5).unwrap();
        assert!((tab.phis[0] - c(2f64.ln(), 0.0)).norm() < 1e-15);
        assert!(tab.phis[1..].iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn zero_constant_term_is_rejected() {
        let p = InterpPolynomial::from_normalized(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(log_taylor_from_coeffs(&p, 3), Err(Error::ZeroConstantTerm)));
    }

    #[test]
    fn truncated_log_series_reproduces_polynomial() {
        let p = coeffs_via_ryser(&sample(&EnsembleSpec::gaussian(6, 0.0, 31), 0)).unwrap();
        let rho = find_roots(&p).unwrap().distance_to(c(0.0, 0.0));
        let tab = log_taylor_from_coeffs(&p, 12).unwrap();
        for k in 0..8 {
            let z = Complex64::from_polar(0.1 * rho, k as f64);
            let approx = tab.series(z).exp();
            let exact = p.eval_normalized(z) / p.normalized()[0];
            assert!(rel(approx, exact) < 1e-9, "z = {z}");
        }
    }

    #[test]
    fn prefix_must_cover_requested_order() {
        let prefix = [c(1.0, 0.0), c(0.5, 0.0)];
        assert!(matches!(
            log_taylor_from_prefix(&prefix, 10, 0.0, 4),
            Err(Error::InsufficientDerivatives { requested: 4, available: 1 })
        ));
    }

    #[test]
    fn schedule_zero_steps() {
        assert_eq!(schedule(&CacConfig::with_m(60), 0.1, 0).unwrap(), vec![60]);
    }

    #[test]
    fn schedule_first_step_matches_formula() {
        let cfg = CacConfig::with_m(200);
        let s = schedule(&cfg, 0.1, 1).unwrap();
        let expected = (0.5 * 200.0 / (4000f64).ln()).floor() as usize;
        assert_eq!(s, vec![200, expected]);
        assert_eq!(expected, 12);
    }

    #[test]
    fn schedule_underflow_boundary() {
        let cfg = CacConfig::default();
        let m = min_feasible_m(cfg.beta, 0.1, 2, cfg.schedule_floor).unwrap();
        assert!(schedule(&CacConfig::with_m(m), 0.1, 2).is_ok());
        match schedule(&CacConfig::with_m(m - 1), 0.1, 2) {
            Err(Error::ScheduleUnderflow { min_feasible_m, floor, .. }) => {
                assert_eq!(min_feasible_m, Some(m));
                assert_eq!(floor, 4);
            }
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn max_feasible_t_is_consistent() {
        let t = max_feasible_t(5000, std::f64::consts::E, 0.5, 4);
        assert!(schedule(&CacConfig::with_m(5000), 0.5, t).is_ok());
        assert!(schedule(&CacConfig::with_m(5000), 0.5, t + 1).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = CacConfig { beta: 2.0, ..CacConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.allow_small_beta = true;
        assert!(cfg.validate().is_ok());
        assert!(CacConfig::with_m(7).validate().is_err());
    }

    #[test]
    fn zero_shift_truncates() {
        let tab = log_taylor_from_coeffs(&linear(c(0.3, 0.1)), 20).unwrap();
        let moved = taylor_shift(&tab, c(0.0, 0.0), 7).unwrap();
        assert_eq!(moved.phis, tab.phis[..=7].to_vec());
        assert_eq!(moved.step_index, 1);
    }

    #[test]
    fn shift_of_linear_log_matches_closed_form() {
        let a = c(0.5, 0.2);
        let d = c(0.3, -0.2);
        assert!((a * d).norm() <= 0.2);
        let tab = log_taylor_from_coeffs(&linear(a), 60).unwrap();
        let moved = taylor_shift(&tab, d, 10).unwrap();
        assert!(rel(moved.phis[1], a / (1.0 + a * d)) < 1e-9);
        assert!(rel(moved.phis[0].exp(), 1.0 + a * d) < 1e-12);
        assert_eq!(moved.base_point, d);
    }

    #[test]
    fn shift_rejects_growing_table() {
        let tab = log_taylor_from_coeffs(&linear(c(0.3, 0.1)), 5).unwrap();
        assert!(matches!(
            taylor_shift(&tab, c(0.1, 0.0), 6),
            Err(Error::InsufficientDerivatives { .. })
        ));
    }

    #[test]
    fn empty_path_returns_factorial() {
        let p = coeffs_via_ryser(&sample(&EnsembleSpec::gaussian(5, 0.0, 1), 0)).unwrap();
        let out = cac_run(&p, &[], &CacConfig::default()).unwrap();
        assert!((out.g_hat - c(120.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_half_steps_match_one_step() {
        // roots of 1 + a z at -1/a, far from the path
        let p = InterpPolynomial::from_roots(&[c(-4.0, 1.0), c(3.0, 5.0), c(-1.0, -6.0)], c(1.0, 0.0));
        let d = c(0.5, 0.25);
        let one = cac_run_with_schedule(&p, &[d], &[80, 40]).unwrap();
        let two = cac_run_with_schedule(&p, &[d / 2.0, d / 2.0], &[80, 40, 20]).unwrap();
        let exact = eval(&p, d);
        assert!(rel(one.g_hat, exact) < 1e-12);
        assert!(rel(two.g_hat, exact) < 1e-12);
        let budget = two.err_budget.unwrap();
        assert!((two.g_hat - one.g_hat).norm() / exact.norm() <= budget.max(1e-14));
    }

    #[test]
    fn scaled_coefficients_shift_log_exactly() {
        let p = coeffs_via_ryser(&sample(&EnsembleSpec::gaussian(8, 0.0, 3), 0)).unwrap();
        let steps = [c(0.05, 0.0); 2];
        let base = cac_run_with_schedule(&p, &steps, &[40, 20, 10]).unwrap();
        for scale in [1e50, 1e-50] {
            let q = p.scaled(c(scale, 0.0));
            let out = cac_run_with_schedule(&q, &steps, &[40, 20, 10]).unwrap();
            assert!((out.f_hat - base.f_hat - scale.ln()).norm() < 1e-12);
        }
    }

    #[test]
    fn rescaled_estimate_is_definitional() {
        let a = sample(&EnsembleSpec::gaussian(4, 0.0, 2), 0);
        let plan = InterpolationPlan::straight(0.05, 1, vec![30, 15]);
        let est = approx_permanent_shifted(&a, 0.05, &plan, &CacConfig::default()).unwrap();
        let r = est.rescaled.unwrap();
        assert!(rel(r, est.estimate * 0.05f64.powi(-4)) < 1e-12);
        let zero = approx_permanent_shifted(&a, 0.0, &plan, &CacConfig::default()).unwrap();
        assert_eq!(zero.estimate, c(24.0, 0.0));
        assert!(zero.rescaled.is_none());
    }
}
