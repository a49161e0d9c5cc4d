//! Curve selection and clearance against brute-force oracles.

use permcac::curve::{
    build_family_with, discretize, select_curve, select_with_roots, tube_clearance, FamilyOptions, Strategy,
};
use permcac::poly::{coeffs_via_ryser, find_roots, InterpPolynomial};
use permcac::stats::root_count_samples;
use permcac::{sample, Complex64, EnsembleSpec};

fn wide(epsilon: f64) -> permcac::curve::CurveFamily {
    build_family_with(epsilon, FamilyOptions { allow_wide_epsilon: true, ..Default::default() }).unwrap()
}

#[test]
fn roots_on_a_curve_push_selection_elsewhere() {
    let fam = wide(0.35);
    let target = fam.curve(fam.j_min).unwrap();
    // roots spread along both segments, away from the origin
    let mut roots = Vec::new();
    for w in target.vertices.windows(2) {
        for k in 1..6 {
            roots.push(w[0] + (w[1] - w[0]) * (k as f64 / 6.0));
        }
    }
    roots.retain(|z| z.norm() > fam.epsilon);
    let p = InterpPolynomial::from_roots(&roots, Complex64::new(1.0, 0.0));
    let sel = select_curve(&p, &fam, Strategy::FirstClear, 0).unwrap();
    assert_ne!(sel.curve.family_index, fam.j_min as i64);
    let first = sel.clearance.unwrap().min_distance;
    assert!(first > fam.width);
    let best = select_curve(&p, &fam, Strategy::BestClearance, 0).unwrap();
    assert!(best.clearance.unwrap().min_distance > fam.width);
}

#[test]
fn random_curves_are_mostly_clear() {
    // a random curve should be clear for all but a 4 epsilon fraction of matrices
    let fam = wide(0.35);
    let trials = 200;
    let spec = EnsembleSpec::gaussian(12, 0.0, 77);
    let mut blocked = 0;
    for t in 0..trials {
        let roots = find_roots(&coeffs_via_ryser(&sample(&spec, t)).unwrap()).unwrap();
        let sel = select_with_roots(Some(&roots), &fam, Strategy::PaperRandom, t).unwrap();
        if !sel.clearance.unwrap().root_free(fam.width) {
            blocked += 1;
        }
    }
    let frac = blocked as f64 / trials as f64;
    let se = (frac * (1.0 - frac) / trials as f64).sqrt();
    println!("blocked fraction {frac} (se {se:.3})");
    assert!(frac <= 4.0 * fam.epsilon + 3.0 * se);
}

#[test]
fn clearance_agrees_with_dense_sampling() {
    let fam = wide(0.3);
    let spec = EnsembleSpec::gaussian(10, 0.0, 5);
    let mut compared = 0;
    for t in 0..20 {
        let roots = find_roots(&coeffs_via_ryser(&sample(&spec, t)).unwrap()).unwrap();
        for j in fam.stratified(5) {
            let curve = fam.curve(j).unwrap();
            let clr = tube_clearance(&curve, &roots);
            // 10^4 points on the boundary of the tube: both sides of every segment
            let per_side = 10_000 / (2 * (curve.vertices.len() - 1));
            let mut boundary = Vec::new();
            for w in curve.vertices.windows(2) {
                let dir = (w[1] - w[0]) / (w[1] - w[0]).norm();
                let normal = dir * Complex64::new(0.0, 1.0) * curve.width;
                for k in 0..per_side {
                    let z = w[0] + (w[1] - w[0]) * (k as f64 / (per_side - 1) as f64);
                    boundary.push(z + normal);
                    boundary.push(z - normal);
                }
            }
            let spacing = curve.length() / per_side as f64;
            // a root is inside the tube iff it is closer to the centre line than the boundary offset
            let dense = roots
                .roots
                .iter()
                .map(|r| {
                    let to_boundary = boundary.iter().map(|b| (b - r).norm()).fold(f64::INFINITY, f64::min);
                    let on_curve = boundary
                        .chunks(2)
                        .map(|pair| ((pair[0] + pair[1]) / 2.0 - r).norm())
                        .fold(f64::INFINITY, f64::min);
                    (to_boundary, on_curve)
                })
                .fold((f64::INFINITY, f64::INFINITY), |acc, x| (acc.0.min(x.0), acc.1.min(x.1)));
            if (clr.min_distance - curve.width).abs() <= 2.0 * spacing {
                continue; // too close to call at this resolution
            }
            compared += 1;
            assert!((dense.1 - clr.min_distance).abs() <= spacing, "centre-line distance {} vs {}", dense.1, clr.min_distance);
            assert_eq!(clr.root_free(curve.width), dense.1 > curve.width);
            assert!(dense.0 >= clr.min_distance - curve.width - spacing);
        }
    }
    assert!(compared >= 90, "only {compared} unambiguous cases");
}

#[test]
fn wide_family_steps_fit_the_width() {
    let fam = wide(0.3);
    let cap = std::f64::consts::PI * 0.3f64.powi(6) / std::f64::consts::E;
    assert!((fam.width / std::f64::consts::E - cap).abs() < 1e-15);
    for j in fam.stratified(7) {
        let plan = discretize(&fam.curve(j).unwrap(), cap);
        assert!(plan.deltas.iter().all(|d| d.norm() <= cap * (1.0 + 1e-12)));
        assert!(plan.delta_min > 0.0);
    }
}

#[test]
fn root_finder_rarely_gives_up() {
    let spec = EnsembleSpec::gaussian(10, 0.0, 3);
    let samples = root_count_samples(&spec, &[1.0], 2000).unwrap();
    let excluded = samples.iter().filter(|s| s.is_none()).count();
    assert!(excluded <= 2, "{excluded} of 2000 excluded");
}
