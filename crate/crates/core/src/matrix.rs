//! Dense complex matrices and the seeded random ensembles they are drawn from.
//!
//! Sampling is counter based: the ChaCha stream for a matrix is selected by
//! `(seed, trial_index)` and entries consume a fixed number of words each in
//! row-major order, so any trial can be regenerated in isolation and on any
//! worker.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Index;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `n x n` complex matrix. Immutable after construction.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn from_entries(n: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        if entries.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("entries must be finite".into()));
        }
        Ok(Self { n, entries })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self::from_entries(n, entries)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("rows must all have length n".into()));
        }
        Self::from_fn(n, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .expect("identity is well formed")
    }

    pub fn diagonal(d: &[Complex64]) -> Result<Self> {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { Complex64::new(0.0, 0.0) })
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_fn(n, |_, _| Complex64::new(0.0, 0.0)).expect("zero matrix is well formed")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Applies `f` entrywise, keeping the shape.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::from_entries(self.n, self.entries.iter().map(|&z| f(z)).collect())
    }

    /// Rows reordered by `rows` and columns by `cols`: entry `(i, j)` is `self[(rows[i], cols[j])]`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self[(rows[i], cols[j])]).expect("permutation preserves shape")
    }

    /// Copy with row `r` replaced.
    pub fn with_row(&self, r: usize, values: &[Complex64]) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries[r * self.n..(r + 1) * self.n].copy_from_slice(values);
        Self::from_entries(self.n, entries)
    }

    /// Square submatrix on the given row and column index sets.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.n + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|z| format!("{:.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// Complex Gaussian with mean `mu` and `E|X - mu|^2 = 1`.
    #[serde(rename = "gaussian")]
    GaussianComplex,
    /// `-1 + mu` or `1`, each with probability 1/2.
    #[serde(rename = "bernoulli")]
    BernoulliBiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub mu: f64,
    pub n: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn gaussian(n: usize, mu: f64, seed: u64) -> Self {
        Self { kind: EnsembleKind::GaussianComplex, mu, n, seed }
    }

    pub fn bernoulli(n: usize, mu: f64, seed: u64) -> Self {
        Self { kind: EnsembleKind::BernoulliBiased, mu, n, seed }
    }
}

/// Random stream for one trial. Streams for different trials never overlap.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One standard complex normal (`E|Z|^2 = 1`) from a single Box-Muller pair.
pub(crate) fn complex_normal(rng: &mut impl RngCore) -> Complex64 {
    let u1 = 1.0 - unit_f64(rng); // (0, 1]
    let u2 = unit_f64(rng);
    // radius sqrt(-2 ln u) * sqrt(1/2): each component gets variance 1/2
    let radius = (-u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    Complex64::new(radius * c, radius * s)
}

/// Draws the matrix for `trial_index`; a pure function of `(spec, trial_index)`.
pub fn sample(spec: &EnsembleSpec, trial_index: u64) -> ComplexMatrix {
    assert!(spec.n >= 1, "ensemble dimension must be positive");
    let mut rng = trial_rng(spec.seed, trial_index);
    let entries = (0..spec.n * spec.n)
        .map(|_| match spec.kind {
            EnsembleKind::GaussianComplex => complex_normal(&mut rng) + spec.mu,
            EnsembleKind::BernoulliBiased => {
                if rng.next_u64() & 1 == 0 {
                    Complex64::new(-1.0 + spec.mu, 0.0)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            }
        })
        .collect();
    ComplexMatrix { n: spec.n, entries }
}

pub fn all_ones(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, |_, _| Complex64::new(1.0, 0.0)).expect("n must be positive")
}

/// Entrywise `j_scale * J + z * A`.
pub fn affine_combine(j_scale: Complex64, a: &ComplexMatrix, z: Complex64) -> ComplexMatrix {
    ComplexMatrix {
        n: a.n,
        entries: a.entries.iter().map(|&x| j_scale + z * x).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = EnsembleSpec::gaussian(2, 0.0, 7);
        assert_eq!(sample(&spec, 0), sample(&spec, 0));
        assert_ne!(sample(&spec, 0), sample(&spec, 1));
        let other_seed = EnsembleSpec { seed: 8, ..spec };
        assert_ne!(sample(&spec, 0), sample(&other_seed, 0));
    }

    #[test]
    fn trial_order_does_not_matter() {
        let spec = EnsembleSpec::gaussian(4, 0.1, 3);
        let forward: Vec<_> = (0..5).map(|t| sample(&spec, t)).collect();
        let backward: Vec<_> = (0..5).rev().map(|t| sample(&spec, t)).collect();
        for (t, m) in backward.iter().rev().enumerate() {
            assert_eq!(&forward[t], m);
        }
    }

    #[test]
    fn bernoulli_support() {
        for n in [1, 3, 6] {
            let spec = EnsembleSpec::bernoulli(n, 0.5, 11);
            for t in 0..20 {
                for z in sample(&spec, t).entries() {
                    assert!(*z == c(-0.5) || *z == c(1.0), "unexpected entry {z}");
                }
            }
        }
    }

    /// Moment checks: mean and E|X - mu|^2 within 5 standard errors.
    #[test]
    fn gaussian_moments() {
        let spec = EnsembleSpec::gaussian(8, 0.3, 2024);
        let draws: Vec<Complex64> = (0..1563).flat_map(|t| sample(&spec, t).entries().to_vec()).collect();
        let count = draws.len() as f64;
        assert!(count >= 1e5);

        let mean_re = draws.iter().map(|z| z.re).sum::<f64>() / count;
        let mean_im = draws.iter().map(|z| z.im).sum::<f64>() / count;
        // each component has variance 1/2
        let se_component = (0.5 / count).sqrt();
        assert!((mean_re - 0.3).abs() < 5.0 * se_component, "mean re {mean_re}");
        assert!(mean_im.abs() < 5.0 * se_component, "mean im {mean_im}");

        let sq: Vec<f64> = draws.iter().map(|z| (z - 0.3).norm_sqr()).collect();
        let m2 = sq.iter().sum::<f64>() / count;
        let var_sq = sq.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / (count - 1.0);
        assert!((m2 - 1.0).abs() < 5.0 * (var_sq / count).sqrt(), "E|X-mu|^2 = {m2}");

        let var_re = draws.iter().map(|z| (z.re - 0.3).powi(2)).sum::<f64>() / count;
        let var_im = draws.iter().map(|z| z.im.powi(2)).sum::<f64>() / count;
        // Var of a squared N(0, 1/2) sample is 2 * (1/2)^2 = 1/2
        let se_var = (0.5 / count).sqrt();
        assert!((var_re - 0.5).abs() < 5.0 * se_var, "var re {var_re}");
        assert!((var_im - 0.5).abs() < 5.0 * se_var, "var im {var_im}");
    }

    #[test]
    fn bernoulli_mean_is_half_mu() {
        let mu = 0.4;
        let spec = EnsembleSpec::bernoulli(10, mu, 99);
        let draws: Vec<f64> = (0..1000).flat_map(|t| sample(&spec, t).entries().iter().map(|z| z.re).collect::<Vec<_>>()).collect();
        let count = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / count;
        // the two atoms are 2 - mu apart, so the standard deviation is (2 - mu) / 2
        let se = (2.0 - mu) / 2.0 / count.sqrt();
        assert!((mean - mu / 2.0).abs() < 5.0 * se, "mean {mean}");
    }

    #[test]
    fn all_ones_and_affine_combine() {
        assert_eq!(all_ones(1).entries(), &[c(1.0)]);
        assert!(all_ones(3).entries().iter().all(|z| *z == c(1.0)));

        let a = sample(&EnsembleSpec::gaussian(3, 0.0, 1), 0);
        assert_eq!(affine_combine(c(1.0), &a, c(0.0)), all_ones(3));
        assert_eq!(affine_combine(c(0.0), &a, c(1.0)), a);

        let combined = affine_combine(c(1.0), &ComplexMatrix::identity(2), c(2.0));
        assert_eq!(combined, ComplexMatrix::from_real_rows(&[&[3.0, 1.0], &[1.0, 3.0]]).unwrap());
    }

    #[test]
    fn rejects_malformed_matrices() {
        assert!(ComplexMatrix::from_entries(2, vec![c(1.0); 3]).is_err());
        assert!(ComplexMatrix::from_entries(0, vec![]).is_err());
        assert!(ComplexMatrix::from_entries(1, vec![Complex64::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn ensemble_spec_json_shape() {
        let spec = EnsembleSpec::gaussian(4, 0.25, 17);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"gaussian","mu":0.25,"n":4,"seed":17}"#);
        let back: EnsembleSpec = serde_json::from_str(r#"{"kind":"bernoulli","mu":0.5,"n":3,"seed":1}"#).unwrap();
        assert_eq!(back, EnsembleSpec::bernoulli(3, 0.5, 1));
        assert!(serde_json::from_str::<EnsembleSpec>(r#"{"kind":"gaussian","mu":0,"n":3,"seed":1,"sigma":2}"#).is_err());
    }
}
