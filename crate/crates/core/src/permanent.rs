//! Exact permanents: the permutation-sum definition and Ryser's
//! inclusion-exclusion formula walked in Gray-code order.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

pub const NAIVE_CAP: usize = 10;
pub const DEFAULT_RYSER_CAP: usize = 30;

/// Above this size the subset walk is split into a fixed number of chunks and
/// run in parallel. The chunking depends only on `n`, so results do not depend
/// on the number of worker threads.
const PARALLEL_FROM: usize = 14;
const CHUNK_BITS: u32 = 6;

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: Complex64,
    comp: Complex64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: Complex64) {
        self.sum.re = neumaier(self.sum.re, x.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, x.im, &mut self.comp.im);
    }

    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier(sum: f64, x: f64, comp: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

/// Sum over all permutations, visited in lexicographic order.
pub fn permanent_naive(a: &ComplexMatrix) -> Result<Complex64> {
    let n = a.dim();
    if n > NAIVE_CAP {
        return Err(Error::DimensionTooLarge { n, cap: NAIVE_CAP });
    }
    let mut acc = KahanSum::new();
    let mut used = vec![false; n];
    naive_recurse(a, 0, Complex64::new(1.0, 0.0), &mut used, &mut acc);
    Ok(acc.value())
}

fn naive_recurse(a: &ComplexMatrix, row: usize, prod: Complex64, used: &mut [bool], acc: &mut KahanSum) {
    let n = a.dim();
    if row == n {
        acc.add(prod);
        return;
    }
    for col in 0..n {
        if !used[col] {
            used[col] = true;
            naive_recurse(a, row + 1, prod * a[(row, col)], used, acc);
            used[col] = false;
        }
    }
}

/// One step of the reflected Gray code over `bits`-bit subsets: walking
/// `k = 1, 2, ...` toggles column `k.trailing_zeros()`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrayStep {
    pub col: usize,
    pub added: bool,
    /// `(-1)^{|S|}` for the subset after the toggle.
    pub sign: f64,
}

#[inline]
pub(crate) fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}

#[inline]
pub(crate) fn gray_step(k: u64) -> GrayStep {
    let col = k.trailing_zeros() as usize;
    let code = gray(k);
    GrayStep {
        col,
        added: (code >> col) & 1 == 1,
        sign: if code.count_ones() % 2 == 0 { 1.0 } else { -1.0 },
    }
}

/// Splits `0..total` into contiguous chunks whose number depends only on `total`.
pub(crate) fn subset_chunks(total: u64, parallel: bool) -> Vec<(u64, u64)> {
    let chunks = if parallel { (1u64 << CHUNK_BITS).min(total) } else { 1 };
    let size = total / chunks;
    (0..chunks)
        .map(|c| {
            let start = c * size;
            let end = if c + 1 == chunks { total } else { start + size };
            (start, end)
        })
        .collect()
}

pub fn permanent_ryser(a: &ComplexMatrix) -> Result<Complex64> {
    permanent_ryser_capped(a, DEFAULT_RYSER_CAP)
}

/// Ryser's formula in the Nijenhuis-Wilf form: the last column is folded into
/// a half-row-sum offset, so only subsets of the first `n - 1` columns are
/// visited and the alternating terms are centred, which halves both the work
/// and the cancellation.
pub fn permanent_ryser_capped(a: &ComplexMatrix, cap: usize) -> Result<Complex64> {
    let n = a.dim();
    if n > cap || n > 62 {
        return Err(Error::DimensionTooLarge { n, cap: cap.min(62) });
    }
    let offsets: Vec<Complex64> = (0..n)
        .map(|i| {
            let row = a.row(i);
            row[n - 1] - row.iter().sum::<Complex64>() * 0.5
        })
        .collect();
    let total = 1u64 << (n - 1);
    let chunks = subset_chunks(total, n >= PARALLEL_FROM);

    let partials: Vec<Complex64> = if chunks.len() > 1 {
        chunks.par_iter().map(|&(s, e)| ryser_chunk(a, &offsets, s, e)).collect()
    } else {
        chunks.iter().map(|&(s, e)| ryser_chunk(a, &offsets, s, e)).collect()
    };
    let mut acc = KahanSum::new();
    for p in partials {
        acc.add(p);
    }
    let sign = if (n - 1) % 2 == 0 { 2.0 } else { -2.0 };
    Ok(acc.value() * sign)
}

fn ryser_chunk(a: &ComplexMatrix, offsets: &[Complex64], start: u64, end: u64) -> Complex64 {
    let n = a.dim();
    let mut sums = offsets.to_vec();
    let code = gray(start);
    for col in 0..n - 1 {
        if (code >> col) & 1 == 1 {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += a[(i, col)];
            }
        }
    }
    let mut acc = KahanSum::new();
    let sign = if code.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    acc.add(sums.iter().product::<Complex64>() * sign);
    for k in start + 1..end {
        let step = gray_step(k);
        for (i, s) in sums.iter_mut().enumerate() {
            if step.added {
                *s += a[(i, step.col)];
            } else {
                *s -= a[(i, step.col)];
            }
        }
        acc.add(sums.iter().product::<Complex64>() * step.sign);
    }
    acc.value()
}

/// `ln |value|` when the magnitude is large enough that downstream products
/// risk overflow.
pub fn ln_abs_diagnostic(value: Complex64) -> Option<f64> {
    let (hi, lo) = if value.re.abs() >= value.im.abs() {
        (value.re.abs(), value.im.abs())
    } else {
        (value.im.abs(), value.re.abs())
    };
    if value.norm() <= 1e250 {
        return None;
    }
    Some(hi.ln() + 0.5 * (1.0 + (lo / hi).powi(2)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{all_ones, sample, EnsembleSpec};

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn small_known_values() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(permanent_naive(&a).unwrap(), Complex64::new(10.0, 0.0));
        assert!(rel(permanent_ryser(&a).unwrap(), Complex64::new(10.0, 0.0)) < 1e-15);

        assert_eq!(permanent_naive(&ComplexMatrix::identity(3)).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(permanent_naive(&all_ones(3)).unwrap(), Complex64::new(6.0, 0.0));
        assert!(rel(permanent_ryser(&ComplexMatrix::identity(4)).unwrap(), Complex64::new(1.0, 0.0)) < 1e-15);
        assert!(rel(permanent_ryser(&all_ones(5)).unwrap(), Complex64::new(120.0, 0.0)) < 1e-15);
    }

    #[test]
    fn one_by_one() {
        let a = ComplexMatrix::from_entries(1, vec![Complex64::new(2.5, -1.0)]).unwrap();
        assert_eq!(permanent_ryser(&a).unwrap(), Complex64::new(2.5, -1.0));
        assert_eq!(permanent_naive(&a).unwrap(), Complex64::new(2.5, -1.0));
    }

    #[test]
    fn ryser_matches_naive_on_gaussian_7x7() {
        let spec = EnsembleSpec::gaussian(7, 0.0, 42);
        for t in 0..100 {
            let a = sample(&spec, t);
            let naive = permanent_naive(&a).unwrap();
            let ryser = permanent_ryser(&a).unwrap();
            assert!(rel(ryser, naive) < 1e-10, "trial {t}: {ryser} vs {naive}");
        }
    }

    #[test]
    fn factorial_of_ones_up_to_18() {
        // exercises the chunked parallel path
        let mut fact = 1.0;
        for n in 1..=18 {
            fact *= n as f64;
            let got = permanent_ryser(&all_ones(n)).unwrap();
            assert!(rel(got, Complex64::new(fact, 0.0)) < 1e-12, "n = {n}: {got}");
        }
    }

    #[test]
    fn parallel_path_is_consistent_with_sequential_chunking() {
        let a = sample(&EnsembleSpec::gaussian(15, 0.0, 5), 0);
        let first = permanent_ryser(&a).unwrap();
        let second = permanent_ryser(&a).unwrap();
        assert_eq!(first, second);
        let offsets: Vec<Complex64> =
            (0..15).map(|i| a.row(i)[14] - a.row(i).iter().sum::<Complex64>() * 0.5).collect();
        // n - 1 = 14 is even, so the overall factor is +2
        let sequential = ryser_chunk(&a, &offsets, 0, 1 << 14) * 2.0;
        assert!(rel(first, sequential) < 1e-10);
    }

    #[test]
    fn caps_are_enforced() {
        assert!(matches!(
            permanent_naive(&all_ones(11)),
            Err(Error::DimensionTooLarge { n: 11, cap: 10 })
        ));
        assert!(matches!(
            permanent_ryser_capped(&all_ones(9), 8),
            Err(Error::DimensionTooLarge { n: 9, .. })
        ));
    }

    #[test]
    fn diagnostic_only_for_huge_values() {
        assert_eq!(ln_abs_diagnostic(Complex64::new(1e10, 0.0)), None);
        let d = ln_abs_diagnostic(Complex64::new(1e300, 1e300)).unwrap();
        assert!((d - (1e300f64.ln() + 0.5 * 2f64.ln())).abs() < 1e-9);
    }
}
