//! The interpolating polynomial `g_A(z) = Per(J + zA)`.
//!
//! Coefficients are stored normalized, `c_k / n!`, with `ln n!` kept as a
//! separate real offset; every consumer in the crate works with the
//! normalized form so that `n` up to 22 never overflows intermediate products.

mod roots;

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::permanent::{gray, gray_step, permanent_ryser, subset_chunks, KahanSum};

pub use roots::{count_roots_in_disk, find_roots, RootSet};

pub const COEFFS_RYSER_CAP: usize = 22;
pub const DEFAULT_SUBMATRIX_BUDGET: f64 = 1e9;

const PARALLEL_FROM: usize = 14;

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn factorial(n: usize) -> f64 {
    (2..=n).map(|k| k as f64).product()
}

/// Polynomial of degree `n` held as `c_k = normalized[k] * exp(ln_scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpPolynomial {
    normalized: Vec<Complex64>,
    ln_scale: f64,
    scale_hint: f64,
}

impl InterpPolynomial {
    /// From normalized coefficients `c_k / n!`.
    pub fn from_normalized(normalized: Vec<Complex64>) -> Self {
        assert!(!normalized.is_empty(), "a polynomial needs at least one coefficient");
        let n = normalized.len() - 1;
        let scale_hint = normalized.iter().map(|c| c.norm()).fold(0.0, f64::max);
        Self {
            normalized,
            ln_scale: ln_factorial(n),
            scale_hint,
        }
    }

    /// From raw coefficients `c_0..c_n`.
    pub fn from_coeffs(coeffs: &[Complex64]) -> Self {
        let nf = factorial(coeffs.len() - 1);
        Self::from_normalized(coeffs.iter().map(|c| c / nf).collect())
    }

    /// Raw polynomial `leading * prod (z - r_j)`.
    pub fn from_roots(roots: &[Complex64], leading: Complex64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); roots.len() + 1];
        coeffs[0] = leading;
        for (deg, &r) in roots.iter().enumerate() {
            // multiply the current degree-`deg` polynomial by (z - r)
            for k in (1..=deg + 1).rev() {
                coeffs[k] = coeffs[k - 1] - r * coeffs[k];
            }
            coeffs[0] = -r * coeffs[0];
        }
        Self::from_coeffs(&coeffs)
    }

    pub fn degree(&self) -> usize {
        self.normalized.len() - 1
    }

    pub fn normalized(&self) -> &[Complex64] {
        &self.normalized
    }

    /// `ln` of the factor separating normalized and raw coefficients (`ln n!`).
    pub fn ln_scale(&self) -> f64 {
        self.ln_scale
    }

    /// `max_k |c_k / n!|`.
    pub fn scale_hint(&self) -> f64 {
        self.scale_hint
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.normalized[k] * self.ln_scale.exp()
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        let s = self.ln_scale.exp();
        self.normalized.iter().map(|c| c * s).collect()
    }

    /// Same polynomial multiplied by a nonzero constant.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let normalized: Vec<Complex64> = self.normalized.iter().map(|c| c * factor).collect();
        Self {
            scale_hint: self.scale_hint * factor.norm(),
            normalized,
            ln_scale: self.ln_scale,
        }
    }

    pub fn eval_normalized(&self, z: Complex64) -> Complex64 {
        horner(&self.normalized, z)
    }

    pub fn ln_eval(&self, z: Complex64) -> Complex64 {
        self.eval_normalized(z).ln() + self.ln_scale
    }
}

pub(crate) fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// `sum c_k z^k` by Horner's rule, in raw (unnormalized) units.
pub fn eval(p: &InterpPolynomial, z: Complex64) -> Complex64 {
    p.eval_normalized(z) * p.ln_scale.exp()
}

/// All coefficients of `Per(J + zA)` from one Ryser walk in which every row
/// sum is a linear polynomial in `z`.
///
/// Uses the same centred (Nijenhuis-Wilf) form as
/// [`crate::permanent::permanent_ryser`]: for a column subset `S` of the first
/// `n - 1` columns each row sum is `alpha_S + z b_i(S)` with the common
/// constant `alpha_S = |S| + 1 - n/2`, so the product over rows expands as
/// `sum_k alpha_S^{n-k} e_k(b) z^k`.
pub fn coeffs_via_ryser(a: &ComplexMatrix) -> Result<InterpPolynomial> {
    let n = a.dim();
    if n > COEFFS_RYSER_CAP {
        return Err(Error::DimensionTooLarge { n, cap: COEFFS_RYSER_CAP });
    }
    let offsets: Vec<Complex64> = (0..n)
        .map(|i| {
            let row = a.row(i);
            row[n - 1] - row.iter().sum::<Complex64>() * 0.5
        })
        .collect();
    let total = 1u64 << (n - 1);
    let chunks = subset_chunks(total, n >= PARALLEL_FROM);
    let partials: Vec<Vec<Complex64>> = if chunks.len() > 1 {
        chunks.par_iter().map(|&(s, e)| poly_ryser_chunk(a, &offsets, s, e)).collect()
    } else {
        chunks.iter().map(|&(s, e)| poly_ryser_chunk(a, &offsets, s, e)).collect()
    };

    let mut acc = vec![KahanSum::new(); n + 1];
    for part in &partials {
        for (slot, &v) in acc.iter_mut().zip(part) {
            slot.add(v);
        }
    }
    let sign = if (n - 1) % 2 == 0 { 2.0 } else { -2.0 };
    let nf = factorial(n);
    let mut normalized: Vec<Complex64> = acc.iter().map(|s| s.value() * (sign / nf)).collect();
    // Per(J) = n! is an identity; pin it rather than carry round-off
    normalized[0] = Complex64::new(1.0, 0.0);
    Ok(InterpPolynomial::from_normalized(normalized))
}

fn poly_ryser_chunk(a: &ComplexMatrix, offsets: &[Complex64], start: u64, end: u64) -> Vec<Complex64> {
    let n = a.dim();
    let mut slopes = offsets.to_vec();
    let code = gray(start);
    let mut size = code.count_ones() as i64;
    for col in 0..n - 1 {
        if (code >> col) & 1 == 1 {
            for (i, s) in slopes.iter_mut().enumerate() {
                *s += a[(i, col)];
            }
        }
    }
    let mut acc = vec![KahanSum::new(); n + 1];
    let mut elem = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut alpha_pow = vec![0.0f64; n + 1];

    let mut add_term = |slopes: &[Complex64], size: i64, acc: &mut [KahanSum]| {
        let alpha = size as f64 + 1.0 - n as f64 / 2.0;
        let sign = if size % 2 == 0 { 1.0 } else { -1.0 };
        elementary_symmetric(slopes, &mut elem);
        alpha_pow[0] = 1.0;
        for k in 1..=n {
            alpha_pow[k] = alpha_pow[k - 1] * alpha;
        }
        for k in 0..=n {
            acc[k].add(elem[k] * (sign * alpha_pow[n - k]));
        }
    };

    add_term(&slopes, size, &mut acc);
    for k in start + 1..end {
        let step = gray_step(k);
        for (i, s) in slopes.iter_mut().enumerate() {
            if step.added {
                *s += a[(i, step.col)];
            } else {
                *s -= a[(i, step.col)];
            }
        }
        size += if step.added { 1 } else { -1 };
        add_term(&slopes, size, &mut acc);
    }
    acc.iter().map(|s| s.value()).collect()
}

/// `out[k] = e_k(values)`.
fn elementary_symmetric(values: &[Complex64], out: &mut [Complex64]) {
    out.fill(Complex64::new(0.0, 0.0));
    out[0] = Complex64::new(1.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            out[k] = out[k] + v * out[k - 1];
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Operation-count estimate for [`coeffs_via_submatrices`].
pub fn submatrix_cost(n: usize, k_max: usize) -> f64 {
    (0..=k_max.min(n))
        .map(|k| binomial(n, k).powi(2) * (1.0 + k as f64 * (1u64 << k.saturating_sub(1)) as f64))
        .sum()
}

/// Normalized coefficients `c_k / n!` for `k = 0..=k_max` from
/// `c_k = (n-k)! * sum_{|S|=|T|=k} Per(A[S,T])`.
///
/// Unlike [`coeffs_via_ryser`] this only touches order-`k` minors, so low
/// coefficients of large matrices stay reachable.
pub fn coeffs_via_submatrices(a: &ComplexMatrix, k_max: usize, budget: f64) -> Result<Vec<Complex64>> {
    let n = a.dim();
    let k_max = k_max.min(n);
    let estimate = submatrix_cost(n, k_max);
    if estimate > budget {
        return Err(Error::BudgetExceeded { estimate, budget });
    }
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(Complex64::new(1.0, 0.0));
    for k in 1..=k_max {
        let subsets: Vec<Vec<usize>> = (0..n).combinations(k).collect();
        let mut acc = KahanSum::new();
        for rows in &subsets {
            for cols in &subsets {
                let minor = ComplexMatrix::from_entries(k, a.submatrix(rows, cols))?;
                acc.add(permanent_ryser(&minor)?);
            }
        }
        // (n-k)! / n! = 1 / (n (n-1) ... (n-k+1))
        let falling: f64 = (n - k + 1..=n).map(|x| x as f64).product();
        out.push(acc.value() / falling);
    }
    Ok(out)
}
