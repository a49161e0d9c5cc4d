//! Root-avoiding piecewise-linear curves from the origin to a real endpoint:
//! the two-segment family indexed by angle, its discretization into steps,
//! exact clearance against a known root set, and a desk-scale planner.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cac::{is_feasible, schedule, CacConfig};
use crate::error::{Error, Result};
use crate::matrix::{trial_rng, unit_f64};
use crate::poly::{find_roots, InterpPolynomial, RootSet};

pub const BEST_CLEARANCE_SAMPLES: usize = 256;
const MAX_STEPS_PER_SEGMENT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCurve {
    #[serde(with = "crate::serde_complex::vec")]
    pub vertices: Vec<Complex64>,
    /// Index in the family, or -1 for curves built by hand.
    pub family_index: i64,
    pub epsilon: f64,
    pub width: f64,
    /// Endpoint before clamping into the family's target interval.
    pub unclamped_endpoint: Option<f64>,
}

impl PiecewiseCurve {
    pub fn custom(vertices: Vec<Complex64>, width: f64) -> Result<Self> {
        if vertices.len() < 2 || vertices[0] != Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidConfig("a curve starts at 0 and has at least two vertices".into()));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("consecutive vertices must differ".into()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("vertices must be finite".into()));
        }
        Ok(Self {
            vertices,
            family_index: -1,
            epsilon: 0.0,
            width,
            unclamped_endpoint: None,
        })
    }

    pub fn endpoint(&self) -> Complex64 {
        *self.vertices.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Distance from `z` to the polyline.
    pub fn distance_to(&self, z: Complex64) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| point_segment_distance(z, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a) * d.conj()).re / len2;
    (z - (a + d * t.clamp(0.0, 1.0))).norm()
}

/// How the family's vertices are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// First vertex `2 eps e^{i theta}`; endpoint `tan(theta)/eps` clamped into `[1/eps, 1/eps + 2 eps]`.
    #[default]
    Box,
    /// First vertex `2 eps (1 + i tan theta)`; endpoint `tan(theta)/eps` unclamped.
    Formula,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub parameterization: Parameterization,
    /// Accepts `0.1 <= eps < 0.5` for desk-scale experiments.
    pub allow_wide_epsilon: bool,
}

/// The family of curves indexed by `j`, generated on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    pub epsilon: f64,
    /// Angular resolution `M = 32 / eps^5`.
    pub resolution: f64,
    pub width: f64,
    pub j_min: u64,
    pub j_max: u64,
    pub parameterization: Parameterization,
}

pub fn build_family(epsilon: f64) -> Result<CurveFamily> {
    build_family_with(epsilon, FamilyOptions::default())
}

pub fn build_family_with(epsilon: f64, opts: FamilyOptions) -> Result<CurveFamily> {
    let upper = if opts.allow_wide_epsilon { 0.5 } else { 0.1 };
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    let resolution = 32.0 / epsilon.powi(5);
    Ok(CurveFamily {
        epsilon,
        resolution,
        width: std::f64::consts::PI * epsilon.powi(6),
        j_min: snap(resolution / 8.0).ceil() as u64,
        j_max: snap(resolution / 8.0 + epsilon * resolution).floor() as u64,
        parameterization: opts.parameterization,
    })
}

/// Rounds values within relative 1e-12 of an integer onto it, so range
/// endpoints do not depend on the last bit of `32 / eps^5`.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

impl CurveFamily {
    pub fn len(&self) -> u64 {
        self.j_max - self.j_min + 1
    }

    pub fn is_empty(&self) -> bool {
        self.j_max < self.j_min
    }

    pub fn contains(&self, j: u64) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    pub fn angle(&self, j: u64) -> f64 {
        std::f64::consts::TAU * j as f64 / self.resolution
    }

    pub fn curve(&self, j: u64) -> Result<PiecewiseCurve> {
        if !self.contains(j) {
            return Err(Error::InvalidConfig(format!(
                "index {j} outside {}..={}",
                self.j_min, self.j_max
            )));
        }
        let eps = self.epsilon;
        let theta = self.angle(j);
        let raw_end = theta.tan() / eps;
        let (a, b) = match self.parameterization {
            Parameterization::Box => (
                Complex64::from_polar(2.0 * eps, theta),
                raw_end.clamp(1.0 / eps, 1.0 / eps + 2.0 * eps),
            ),
            Parameterization::Formula => (Complex64::new(2.0 * eps, 2.0 * eps * theta.tan()), raw_end),
        };
        Ok(PiecewiseCurve {
            vertices: vec![Complex64::new(0.0, 0.0), a, Complex64::new(b, 0.0)],
            family_index: j as i64,
            epsilon: eps,
            width: self.width,
            unclamped_endpoint: Some(raw_end),
        })
    }

    /// `count` indices spread evenly over the range, one per stratum midpoint.
    pub fn stratified(&self, count: usize) -> Vec<u64> {
        let len = self.len();
        let count = (count as u64).min(len);
        (0..count)
            .map(|k| self.j_min + ((2 * k + 1) * len) / (2 * count))
            .collect()
    }
}

/// Minimum distance between two tubes' center lines, restricted to points
/// at distance at least `exclude_radius` from the origin, by dense sampling
/// of `a` and exact distance to `b`.
pub fn center_line_separation(a: &PiecewiseCurve, b: &PiecewiseCurve, exclude_radius: f64, samples: usize) -> f64 {
    let mut best = f64::INFINITY;
    for w in a.vertices.windows(2) {
        for k in 0..=samples {
            let z = w[0] + (w[1] - w[0]) * (k as f64 / samples as f64);
            if z.norm() >= exclude_radius {
                best = best.min(b.distance_to(z));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    #[serde(with = "crate::serde_complex::vec")]
    pub deltas: Vec<Complex64>,
    pub delta_min: f64,
    pub total_length: f64,
}

impl StepPlan {
    pub fn from_deltas(deltas: Vec<Complex64>) -> Self {
        let delta_min = deltas.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        let total_length = deltas.iter().map(|d| d.norm()).sum();
        Self { deltas, delta_min, total_length }
    }

    pub fn t(&self) -> usize {
        self.deltas.len()
    }

    /// Interpolation points `y_0 = 0, ..., y_t`.
    pub fn points(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.deltas.len() + 1);
        let mut y = Complex64::new(0.0, 0.0);
        out.push(y);
        for d in &self.deltas {
            y += d;
            out.push(y);
        }
        out
    }
}

fn segment_steps(len: f64, max_step: f64) -> usize {
    ((len / max_step) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Splits each segment into equal steps no longer than `max_step`.
pub fn discretize(curve: &PiecewiseCurve, max_step: f64) -> StepPlan {
    let counts: Vec<usize> = curve
        .vertices
        .windows(2)
        .map(|w| segment_steps((w[1] - w[0]).norm(), max_step))
        .collect();
    discretize_counts(curve, &counts)
}

/// Splits segment `i` into `counts[i]` equal steps; the final step absorbs rounding.
pub fn discretize_counts(curve: &PiecewiseCurve, counts: &[usize]) -> StepPlan {
    let mut deltas = Vec::with_capacity(counts.iter().sum());
    for (w, &k) in curve.vertices.windows(2).zip(counts) {
        let d = (w[1] - w[0]) / k as f64;
        deltas.extend(std::iter::repeat(d).take(k));
    }
    let before: Complex64 = deltas[..deltas.len() - 1].iter().sum();
    *deltas.last_mut().unwrap() = curve.endpoint() - before;
    StepPlan::from_deltas(deltas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clearance {
    pub min_distance: f64,
    /// Nearest root, reported when it lies inside the tube.
    #[serde(with = "crate::serde_complex::option")]
    pub violating_root: Option<Complex64>,
}

impl Clearance {
    pub fn root_free(&self, width: f64) -> bool {
        self.min_distance > width
    }
}

pub fn tube_clearance(curve: &PiecewiseCurve, roots: &RootSet) -> Clearance {
    let mut best = (f64::INFINITY, None);
    for &r in &roots.roots {
        let d = curve.distance_to(r);
        if d < best.0 {
            best = (d, Some(r));
        }
    }
    Clearance {
        min_distance: best.0,
        violating_root: if best.0 > curve.width { None } else { best.1 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FirstClear,
    BestClearance,
    PaperRandom,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_clear" => Ok(Self::FirstClear),
            "best_clearance" => Ok(Self::BestClearance),
            "paper_random" => Ok(Self::PaperRandom),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub curve: PiecewiseCurve,
    /// Absent for `paper_random`, which uses no root knowledge.
    pub clearance: Option<Clearance>,
}

pub fn select_curve(p: &InterpPolynomial, family: &CurveFamily, strategy: Strategy, seed: u64) -> Result<Selection> {
    if strategy == Strategy::PaperRandom {
        return select_with_roots(None, family, strategy, seed);
    }
    let roots = find_roots(p)?;
    select_with_roots(Some(&roots), family, strategy, seed)
}

pub fn select_with_roots(
    roots: Option<&RootSet>,
    family: &CurveFamily,
    strategy: Strategy,
    seed: u64,
) -> Result<Selection> {
    let clearance_of = |j: u64| -> Result<(PiecewiseCurve, Clearance)> {
        let curve = family.curve(j)?;
        let clr = tube_clearance(&curve, roots.expect("root-aware strategy"));
        Ok((curve, clr))
    };
    match strategy {
        Strategy::PaperRandom => {
            let mut rng = trial_rng(seed, 0);
            let offset = ((unit_f64(&mut rng) * family.len() as f64) as u64).min(family.len() - 1);
            let curve = family.curve(family.j_min + offset)?;
            let clearance = roots.map(|r| tube_clearance(&curve, r));
            Ok(Selection { curve, clearance })
        }
        Strategy::FirstClear => {
            let mut best = 0.0f64;
            for j in family.j_min..=family.j_max {
                let (curve, clr) = clearance_of(j)?;
                if clr.root_free(family.width) {
                    return Ok(Selection { curve, clearance: Some(clr) });
                }
                best = best.max(clr.min_distance);
            }
            Err(Error::NoClearCurve { best_clearance: best, width: family.width })
        }
        Strategy::BestClearance => {
            let scored: Vec<(u64, f64)> = family
                .stratified(BEST_CLEARANCE_SAMPLES)
                .into_par_iter()
                .map(|j| clearance_of(j).map(|(_, c)| (j, c.min_distance)))
                .collect::<Result<_>>()?;
            // ties go to the smaller index
            let (j, best) = scored
                .iter()
                .copied()
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= family.width {
                return Err(Error::NoClearCurve { best_clearance: best, width: family.width });
            }
            let (curve, clr) = clearance_of(j)?;
            Ok(Selection { curve, clearance: Some(clr) })
        }
    }
}

/// A curve, its discretization and the derivative schedule to run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPlan {
    pub curve_id: String,
    pub curve: PiecewiseCurve,
    pub steps: StepPlan,
    pub schedule: Vec<usize>,
    pub beta: f64,
    /// Distance from the curve to the nearest root, when roots are known.
    pub clearance: Option<f64>,
    /// Smallest `dist(y_{i-1}, roots) / |Delta_i|` over the steps.
    pub min_ratio: Option<f64>,
    /// True when every step meets the ratio `beta` and the schedule is feasible.
    pub clear: bool,
}

impl InterpolationPlan {
    /// `t` equal steps along `[0, b]` with a given schedule; no root information.
    pub fn straight(b: f64, t: usize, schedule: Vec<usize>) -> Self {
        let curve = PiecewiseCurve::custom(vec![Complex64::new(0.0, 0.0), Complex64::new(b, 0.0)], 0.0)
            .expect("nonzero endpoint");
        let steps = discretize_counts(&curve, &[t]);
        Self {
            curve_id: "straight".into(),
            curve,
            steps,
            schedule,
            beta: std::f64::consts::E,
            clearance: None,
            min_ratio: None,
            clear: false,
        }
    }

    pub fn t(&self) -> usize {
        self.steps.t()
    }
}

/// Smallest `dist(y_{i-1}, roots) / |Delta_i|` along a step plan.
pub fn min_step_ratio(steps: &StepPlan, roots: &RootSet) -> f64 {
    let pts = steps.points();
    steps
        .deltas
        .iter()
        .zip(&pts)
        .map(|(d, y)| roots.distance_to(*y) / d.norm())
        .fold(f64::INFINITY, f64::min)
}

/// Plan for an arbitrary curve with step `width / beta`; fails when the
/// schedule cannot support the resulting number of steps.
pub fn plan_for_curve(curve: &PiecewiseCurve, roots: Option<&RootSet>, cfg: &CacConfig) -> Result<InterpolationPlan> {
    let steps = discretize(curve, curve.width / cfg.beta);
    let sched = schedule(cfg, steps.delta_min, steps.t())?;
    let clearance = roots.map(|r| tube_clearance(curve, r).min_distance);
    let min_ratio = roots.map(|r| min_step_ratio(&steps, r));
    Ok(InterpolationPlan {
        curve_id: curve_label(curve),
        clear: min_ratio.is_some_and(|q| q >= cfg.beta),
        curve: curve.clone(),
        steps,
        schedule: sched,
        beta: cfg.beta,
        clearance,
        min_ratio,
    })
}

fn curve_label(curve: &PiecewiseCurve) -> String {
    if curve.family_index >= 0 {
        format!("family:{}", curve.family_index)
    } else if curve.vertices.len() == 2 {
        "straight".into()
    } else {
        "custom".into()
    }
}

/// Desk-scale candidates to the real endpoint `b`: the segment `[0, b]` and
/// two-segment detours through `b/2 + i h`.
pub fn candidate_curves(b: f64) -> Vec<(String, PiecewiseCurve)> {
    let zero = Complex64::new(0.0, 0.0);
    let end = Complex64::new(b, 0.0);
    let mut out = vec![("straight".to_string(), PiecewiseCurve::custom(vec![zero, end], 0.0).unwrap())];
    let unit = b.abs().max(1.0);
    for h in [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0] {
        for sign in [1.0, -1.0] {
            let mid = Complex64::new(b / 2.0, sign * h * unit);
            let id = format!("bent:{:+.2}", sign * h * unit);
            out.push((id, PiecewiseCurve::custom(vec![zero, mid, end], 0.0).unwrap()));
        }
    }
    out
}

/// Fewest equal steps on segment `[a, b]` such that every step start stays
/// `beta` step lengths away from all roots. Gives up once the schedule could
/// not support that many steps of that length even on their own.
fn fewest_steps(a: Complex64, b: Complex64, roots: &RootSet, cfg: &CacConfig) -> Option<usize> {
    let d = b - a;
    for k in 1..=MAX_STEPS_PER_SEGMENT {
        let step = d / k as f64;
        if !is_feasible(cfg.m, cfg.beta, step.norm(), k, cfg.schedule_floor) {
            return None;
        }
        if (0..k).all(|i| roots.distance_to(a + step * i as f64) >= cfg.beta * step.norm()) {
            return Some(k);
        }
    }
    None
}

/// Plan along `curve` with the fewest steps meeting the ratio `beta`, if the
/// schedule from `cfg.m` supports it.
pub fn clear_plan_for(id: &str, curve: &PiecewiseCurve, roots: &RootSet, cfg: &CacConfig) -> Option<InterpolationPlan> {
    let counts: Option<Vec<usize>> = curve
        .vertices
        .windows(2)
        .map(|w| fewest_steps(w[0], w[1], roots, cfg))
        .collect();
    let steps = discretize_counts(curve, &counts?);
    if !is_feasible(cfg.m, cfg.beta, steps.delta_min, steps.t(), cfg.schedule_floor) {
        return None;
    }
    let sched = schedule(cfg, steps.delta_min, steps.t()).ok()?;
    let ratio = min_step_ratio(&steps, roots);
    if ratio < cfg.beta {
        return None;
    }
    let clearance = tube_clearance(curve, roots).min_distance;
    let mut curve = curve.clone();
    curve.width = clearance;
    Some(InterpolationPlan {
        curve_id: id.to_string(),
        curve,
        steps,
        schedule: sched,
        beta: cfg.beta,
        clearance: Some(clearance),
        min_ratio: Some(ratio),
        clear: true,
    })
}

/// Every clear plan among the desk-scale candidates, fewest steps first.
pub fn clear_plans(roots: &RootSet, b: f64, cfg: &CacConfig) -> Vec<InterpolationPlan> {
    let mut plans: Vec<InterpolationPlan> = candidate_curves(b)
        .iter()
        .filter_map(|(id, c)| clear_plan_for(id, c, roots, cfg))
        .collect();
    plans.sort_by(|x, y| {
        x.t().cmp(&y.t())
            .then(y.min_ratio.unwrap().total_cmp(&x.min_ratio.unwrap()))
    });
    plans
}

/// The clear plan with the fewest steps; otherwise the straight segment with
/// the most steps the schedule allows, flagged as not clear.
pub fn auto_plan(roots: &RootSet, b: f64, cfg: &CacConfig) -> Result<InterpolationPlan> {
    cfg.validate()?;
    if let Some(plan) = clear_plans(roots, b, cfg).into_iter().next() {
        return Ok(plan);
    }
    let t_max = (1..=MAX_STEPS_PER_SEGMENT)
        .take_while(|&t| is_feasible(cfg.m, cfg.beta, b.abs() / t as f64, t, cfg.schedule_floor))
        .last()
        .unwrap_or(1);
    let sched = schedule(cfg, b.abs() / t_max as f64, t_max)?;
    let mut plan = InterpolationPlan::straight(b, t_max, sched);
    plan.beta = cfg.beta;
    plan.clearance = Some(tube_clearance(&plan.curve, roots).min_distance);
    plan.min_ratio = Some(min_step_ratio(&plan.steps, roots));
    Ok(plan)
}
