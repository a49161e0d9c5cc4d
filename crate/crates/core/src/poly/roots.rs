//! Simultaneous root finding by Aberth-Ehrlich iteration.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::InterpPolynomial;
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 500;
const STEP_TOL: f64 = 1e-13;
const START_ANGLE: f64 = 0.37;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    #[serde(with = "crate::serde_complex::vec")]
    pub roots: Vec<Complex64>,
    /// `|g(z)| / sum_k |c_k| |z|^k` at each root.
    pub residuals: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl RootSet {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Distance from `z` to the nearest root, or infinity for a constant.
    pub fn distance_to(&self, z: Complex64) -> f64 {
        self.roots.iter().map(|r| (r - z).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Value and derivative at `z` by a combined Horner pass.
fn horner_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn relative_residual(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let (p, _) = horner_with_derivative(coeffs, z);
    let scale = coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm());
    if scale == 0.0 {
        0.0
    } else {
        p.norm() / scale
    }
}

/// All `n` roots of `p`, sorted by modulus and then argument.
pub fn find_roots(p: &InterpPolynomial) -> Result<RootSet> {
    let all = p.normalized();
    let lead = all[all.len() - 1].norm();
    if !(lead > 1e-300 * p.scale_hint().max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateLeadingCoefficient { magnitude: lead });
    }
    // zero roots from vanishing low-order coefficients
    let zeros = all.iter().take_while(|c| c.norm() == 0.0).count();
    let coeffs = &all[zeros..];
    let n = coeffs.len() - 1;

    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let mut sweeps = 0;
    let mut converged = true;
    if n == 1 {
        roots.push(-coeffs[0] / coeffs[1]);
    } else if n > 1 {
        let radius = 1.1 * (coeffs[0].norm() / coeffs[n].norm()).powf(1.0 / n as f64);
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64 + START_ANGLE))
            .collect();
        let mut done = vec![false; n];
        converged = false;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            for j in 0..n {
                if done[j] {
                    continue;
                }
                let (v, dv) = horner_with_derivative(coeffs, z[j]);
                if v.norm() == 0.0 {
                    done[j] = true;
                    continue;
                }
                let w = v / dv;
                let repulsion: Complex64 = (0..n).filter(|&k| k != j).map(|k| (z[j] - z[k]).inv()).sum();
                let step = w / (1.0 - w * repulsion);
                if !step.is_finite() {
                    continue;
                }
                z[j] -= step;
                if step.norm() < STEP_TOL * (1.0 + z[j].norm()) {
                    done[j] = true;
                }
            }
            if done.iter().all(|&d| d) {
                converged = true;
                break;
            }
        }
        roots.extend(z);
    }

    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
    let residuals = roots.iter().map(|&r| relative_residual(all, r)).collect();
    let set = RootSet { roots, residuals, sweeps, converged };
    if converged {
        Ok(set)
    } else {
        Err(Error::NoConvergence { sweeps, best: Box::new(set) })
    }
}

/// Number of roots with `|z| <= r`.
pub fn count_roots_in_disk(roots: &RootSet, r: f64) -> usize {
    roots.roots.iter().filter(|z| z.norm() <= r).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{sample, EnsembleSpec};
    use crate::poly::{coeffs_via_ryser, eval};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn recovers_planted_roots() {
        let planted = [c(1.0, 0.0), c(-2.0, 0.5), c(0.0, 3.0), c(0.1, -0.2), c(-4.0, -4.0)];
        let p = InterpPolynomial::from_roots(&planted, c(0.5, 0.25));
        let set = find_roots(&p).unwrap();
        assert!(set.converged);
        for r in planted {
            assert!(set.distance_to(r) < 1e-10, "missing {r}");
        }
        assert!(set.max_residual() < 1e-13);
    }

    #[test]
    fn sorted_by_modulus() {
        let p = InterpPolynomial::from_roots(&[c(3.0, 0.0), c(0.0, 1.0), c(-2.0, 0.0)], c(1.0, 0.0));
        let set = find_roots(&p).unwrap();
        let mods: Vec<f64> = set.roots.iter().map(|z| z.norm()).collect();
        assert!(mods.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_roots_are_split_off() {
        let p = InterpPolynomial::from_roots(&[c(0.0, 0.0), c(0.0, 0.0), c(2.0, 1.0)], c(1.0, 0.0));
        let set = find_roots(&p).unwrap();
        assert_eq!(set.roots[0], c(0.0, 0.0));
        assert_eq!(set.roots[1], c(0.0, 0.0));
        assert!((set.roots[2] - c(2.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_leading_coefficient() {
        let p = InterpPolynomial::from_normalized(vec![c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(find_roots(&p), Err(Error::DegenerateLeadingCoefficient { .. })));
    }

    #[test]
    fn roots_of_interpolating_polynomials_have_small_residuals() {
        let spec = EnsembleSpec::gaussian(12, 0.0, 11);
        for t in 0..10 {
            let p = coeffs_via_ryser(&sample(&spec, t)).unwrap();
            let set = find_roots(&p).unwrap();
            assert_eq!(set.roots.len(), 12);
            assert!(set.max_residual() < 1e-12, "trial {t}: {}", set.max_residual());
            // product of roots equals (-1)^n c_0 / c_n
            let prod: Complex64 = set.roots.iter().product();
            let expected = p.normalized()[0] / p.normalized()[12];
            assert!((prod - expected).norm() < 1e-8 * expected.norm());
            for &r in &set.roots {
                let scale: f64 = p.coeffs().iter().enumerate().map(|(k, c)| c.norm() * r.norm().powi(k as i32)).sum();
                assert!(eval(&p, r).norm() < 1e-11 * scale);
            }
        }
    }

    #[test]
    fn disk_counts() {
        let p = InterpPolynomial::from_roots(&[c(0.5, 0.0), c(0.0, 1.5), c(3.0, 0.0)], c(1.0, 0.0));
        let set = find_roots(&p).unwrap();
        assert_eq!(count_roots_in_disk(&set, 0.1), 0);
        assert_eq!(count_roots_in_disk(&set, 1.0), 1);
        assert_eq!(count_roots_in_disk(&set, 2.0), 2);
        assert_eq!(count_roots_in_disk(&set, 10.0), 3);
    }
}
