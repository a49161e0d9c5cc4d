//! Monte-Carlo estimators for the random-polynomial bounds, with
//! deterministic index-ordered reduction.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sample, EnsembleKind, EnsembleSpec};
use crate::permanent::permanent_ryser;
use crate::poly::{coeffs_via_ryser, count_roots_in_disk, factorial, find_roots, InterpPolynomial};

pub const MOMENT_ANGLES: usize = 8;
pub const MEAN_SHIFT_CAP: usize = 12;
const JENSEN_CONTOUR_GUARD: f64 = 1e-6;
const JENSEN_MAX_REFINEMENT: usize = 256;
const JENSEN_TOL: f64 = 1e-12;

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sample_variance() / self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
    pub quantiles: Option<Quantiles>,
    pub seed: u64,
    /// Trials dropped because a per-trial computation failed.
    pub excluded: usize,
    pub per_trial_path: Option<String>,
}

impl TrialAggregate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let mut w = Welford::default();
        for &x in samples {
            w.push(x);
        }
        let quantiles = (!samples.is_empty()).then(|| {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            Quantiles {
                median: quantile(&sorted, 0.5),
                p90: quantile(&sorted, 0.9),
                p99: quantile(&sorted, 0.99),
            }
        });
        Self {
            trials: samples.len(),
            mean: w.mean(),
            std_error: w.std_error(),
            quantiles,
            seed,
            excluded: 0,
            per_trial_path: None,
        }
    }

    /// `|mean - target| <= k SE`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }

    /// `mean <= bound + k SE`.
    pub fn below(&self, bound: f64, k: f64) -> bool {
        self.mean <= bound + k * self.std_error
    }
}

fn require_zero_mean(spec: &EnsembleSpec) -> Result<()> {
    if spec.mu != 0.0 || spec.kind != EnsembleKind::GaussianComplex {
        return Err(Error::ParameterViolation(
            "moment statistics use the zero-mean complex Gaussian ensemble".into(),
        ));
    }
    Ok(())
}

fn polynomials(spec: &EnsembleSpec, trials: usize) -> Vec<Result<InterpPolynomial>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| coeffs_via_ryser(&sample(spec, t)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSample {
    /// `|g(r)|^2 / (n!)^2`.
    pub radial: f64,
    /// Mean over equally spaced angles of `|g(r e^{i theta})|^2 / (n!)^2`.
    pub angular: f64,
}

pub fn second_moment_samples(spec: &EnsembleSpec, r: f64, trials: usize) -> Result<Vec<MomentSample>> {
    require_zero_mean(spec)?;
    if !(r >= 0.0) {
        return Err(Error::ParameterViolation(format!("radius must be nonnegative, got {r}")));
    }
    polynomials(spec, trials)
        .into_iter()
        .map(|p| {
            let p = p?;
            let radial = p.eval_normalized(Complex64::new(r, 0.0)).norm_sqr();
            let angular = (0..MOMENT_ANGLES)
                .map(|k| {
                    let z = Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / MOMENT_ANGLES as f64);
                    p.eval_normalized(z).norm_sqr()
                })
                .sum::<f64>()
                / MOMENT_ANGLES as f64;
            Ok(MomentSample { radial, angular })
        })
        .collect()
}

/// `sum_{k=0}^n r^{2k} / k!`: the exact value of `E |g(r)|^2 / (n!)^2`.
pub fn moment_closed_form(n: usize, r: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=n {
        term *= r * r / k as f64;
        sum += term;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentReport {
    pub n: usize,
    pub r: f64,
    pub radial: TrialAggregate,
    pub angular: TrialAggregate,
    pub closed_form: f64,
    /// `e^{r^2}`, the bound on the angle-averaged quantity.
    pub bound: f64,
    /// Whether the fixed-angle estimate also sits under the bound (reported, not required).
    pub radial_within_bound: bool,
}

impl SecondMomentReport {
    pub fn from_samples(spec: &EnsembleSpec, r: f64, samples: &[MomentSample]) -> Self {
        let radial: Vec<f64> = samples.iter().map(|s| s.radial).collect();
        let angular: Vec<f64> = samples.iter().map(|s| s.angular).collect();
        let radial = TrialAggregate::from_samples(&radial, spec.seed);
        let bound = (r * r).exp();
        Self {
            n: spec.n,
            r,
            radial_within_bound: radial.below(bound, 3.0),
            radial,
            angular: TrialAggregate::from_samples(&angular, spec.seed),
            closed_form: moment_closed_form(spec.n, r),
            bound,
        }
    }
}

pub fn second_moment(spec: &EnsembleSpec, r: f64, trials: usize) -> Result<SecondMomentReport> {
    let samples = second_moment_samples(spec, r, trials)?;
    Ok(SecondMomentReport::from_samples(spec, r, &samples))
}

/// Root counts per radius for each trial; `None` marks a root-finder failure.
pub fn root_count_samples(spec: &EnsembleSpec, radii: &[f64], trials: usize) -> Result<Vec<Option<Vec<usize>>>> {
    require_zero_mean(spec)?;
    polynomials(spec, trials)
        .into_par_iter()
        .map(|p| {
            let p = p?;
            Ok(find_roots(&p)
                .ok()
                .map(|rs| radii.iter().map(|&r| count_roots_in_disk(&rs, r)).collect()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusStat {
    pub r: f64,
    pub count: TrialAggregate,
    /// Indicator of at least one root in the disk.
    pub any_root: TrialAggregate,
    /// `4 r^2`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCountReport {
    pub n: usize,
    pub trials: usize,
    pub excluded: usize,
    pub radii: Vec<RadiusStat>,
}

impl RootCountReport {
    pub fn from_samples(spec: &EnsembleSpec, radii: &[f64], samples: &[Option<Vec<usize>>]) -> Self {
        let kept: Vec<&Vec<usize>> = samples.iter().flatten().collect();
        let excluded = samples.len() - kept.len();
        let radii = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let counts: Vec<f64> = kept.iter().map(|c| c[i] as f64).collect();
                let any: Vec<f64> = kept.iter().map(|c| if c[i] > 0 { 1.0 } else { 0.0 }).collect();
                let mut count = TrialAggregate::from_samples(&counts, spec.seed);
                count.excluded = excluded;
                let mut any_root = TrialAggregate::from_samples(&any, spec.seed);
                any_root.excluded = excluded;
                RadiusStat { r, count, any_root, bound: 4.0 * r * r }
            })
            .collect();
        Self {
            n: spec.n,
            trials: samples.len(),
            excluded,
            radii,
        }
    }
}

pub fn root_count_stats(spec: &EnsembleSpec, radii: &[f64], trials: usize) -> Result<RootCountReport> {
    let samples = root_count_samples(spec, radii, trials)?;
    Ok(RootCountReport::from_samples(spec, radii, &samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Quadrature points after refinement.
    pub points: usize,
}

/// Trapezoid rule for `(1/2pi) int ln|g(r e^{i theta})| d theta - ln|g(0)|` with `points` nodes.
pub fn jensen_trapezoid(p: &InterpPolynomial, r: f64, points: usize) -> f64 {
    let g0 = p.eval_normalized(Complex64::new(0.0, 0.0)).norm().ln();
    let sum: f64 = (0..points)
        .map(|k| {
            let z = Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / points as f64);
            p.eval_normalized(z).norm().ln()
        })
        .sum();
    sum / points as f64 - g0
}

/// Both sides of Jensen's formula on `|z| = r`. The quadrature starts at
/// `quad_points` nodes and doubles until successive values agree.
pub fn jensen_check(p: &InterpPolynomial, r: f64, quad_points: usize) -> Result<JensenReport> {
    if p.normalized()[0].norm() == 0.0 {
        return Err(Error::ZeroConstantTerm);
    }
    let roots = find_roots(p)?;
    if let Some(z) = roots
        .roots
        .iter()
        .find(|z| (z.norm() - r).abs() <= JENSEN_CONTOUR_GUARD)
    {
        return Err(Error::RootOnContour { radius: r, distance: (z.norm() - r).abs() });
    }
    let rhs: f64 = roots
        .roots
        .iter()
        .filter(|z| z.norm() <= r)
        .map(|z| (r / z.norm()).ln())
        .sum();
    let mut points = quad_points.max(4);
    let mut lhs = jensen_trapezoid(p, r, points);
    while points < quad_points.max(4) * JENSEN_MAX_REFINEMENT {
        let finer = jensen_trapezoid(p, r, 2 * points);
        points *= 2;
        let settled = (finer - lhs).abs() <= JENSEN_TOL * (1.0 + finer.abs());
        lhs = finer;
        if settled {
            break;
        }
    }
    Ok(JensenReport { lhs, rhs, gap: (lhs - rhs).abs(), points })
}

/// `(n!)^2 sum_{k=1}^n mu^{2k} / (n-k)!`.
pub fn mean_shift_closed_form(n: usize, mu: f64) -> f64 {
    let nf = factorial(n);
    (1..=n).map(|k| mu.powi(2 * k as i32) / factorial(n - k)).sum::<f64>() * nf * nf
}

/// `|Per(A + mu J) - Per(A)|^2` per trial.
pub fn mean_shift_samples(n: usize, mu: f64, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if n > MEAN_SHIFT_CAP {
        return Err(Error::DimensionTooLarge { n, cap: MEAN_SHIFT_CAP });
    }
    let spec = EnsembleSpec::gaussian(n, 0.0, seed);
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let a = sample(&spec, t);
            let shifted = a.map(|x| x + mu)?;
            Ok((permanent_ryser(&shifted)? - permanent_ryser(&a)?).norm_sqr())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftReport {
    pub n: usize,
    pub mu: f64,
    pub aggregate: TrialAggregate,
    pub closed_form: f64,
    /// `n! n^2 mu^2`.
    pub bound: f64,
    /// Whether `mu < 1/sqrt(n-1)`, where the bound is claimed.
    pub bound_applies: bool,
}

impl MeanShiftReport {
    pub fn from_samples(n: usize, mu: f64, seed: u64, samples: &[f64]) -> Self {
        Self {
            n,
            mu,
            aggregate: TrialAggregate::from_samples(samples, seed),
            closed_form: mean_shift_closed_form(n, mu),
            bound: factorial(n) * (n * n) as f64 * mu * mu,
            bound_applies: n <= 1 || mu < 1.0 / ((n - 1) as f64).sqrt(),
        }
    }
}

pub fn mean_shift_sensitivity(n: usize, mu: f64, trials: usize, seed: u64) -> Result<MeanShiftReport> {
    let samples = mean_shift_samples(n, mu, trials, seed)?;
    Ok(MeanShiftReport::from_samples(n, mu, seed, &samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub m: usize,
    pub l: usize,
    pub beta: f64,
    pub partial_sum: f64,
    pub bound: f64,
    pub holds: bool,
    pub terms: usize,
}

/// `sum_{k >= m} beta^{-k} k^l` against `3 beta^{-m} m^l`.
///
/// Summed relative to the leading term, `sum_j beta^{-j} (1 + j/m)^l`, so the
/// comparison is against 3 and no tiny powers are formed until the end.
pub fn tail_bound_check(m: usize, l: usize, beta: f64) -> Result<TailReport> {
    if m < 2 * l || m == 0 {
        return Err(Error::ParameterViolation(format!("need m >= 2l and m > 0, got m = {m}, l = {l}")));
    }
    if beta < std::f64::consts::E {
        return Err(Error::ParameterViolation(format!("need beta >= e, got {beta}")));
    }
    let mut scaled = 0.0;
    let mut terms = 0;
    loop {
        let j = terms as f64;
        let term = (-j * beta.ln()).exp() * (1.0 + j / m as f64).powi(l as i32);
        if terms > 0 && term < 1e-18 * scaled {
            break;
        }
        scaled += term;
        terms += 1;
    }
    let lead = (-(m as f64) * beta.ln() + l as f64 * (m as f64).ln()).exp();
    Ok(TailReport {
        m,
        l,
        beta,
        partial_sum: scaled * lead,
        bound: 3.0 * lead,
        holds: scaled <= 3.0,
        terms,
    })
}
