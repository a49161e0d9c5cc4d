use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::matrix::{trial_rng, ComplexMatrix};

pub const EXACT_CAP: usize = 8;

/// `p/q + (r/s) i` with arbitrary-precision parts.
pub type GaussRational = Complex<BigRational>;

pub fn gr(re: (i64, i64), im: (i64, i64)) -> GaussRational {
    Complex::new(ratio(re.0, re.1), ratio(im.0, im.1))
}

pub fn gr_int(re: i64, im: i64) -> GaussRational {
    gr((re, 1), (im, 1))
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_complex64(z: &GaussRational) -> Complex64 {
    Complex64::new(z.re.to_f64().unwrap_or(f64::NAN), z.im.to_f64().unwrap_or(f64::NAN))
}

/// `"3/2+5i"`-style rendering.
pub fn format_gr(z: &GaussRational) -> String {
    let sign = if z.im.is_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

/// Small random Gaussian rational with numerators in `[-span, span]` and
/// denominators in `[1, span]`.
pub fn random_gr(rng: &mut impl RngCore, span: i64) -> GaussRational {
    let mut part = || {
        let p = (rng.next_u64() % (2 * span as u64 + 1)) as i64 - span;
        let q = (rng.next_u64() % span as u64) as i64 + 1;
        ratio(p, q)
    };
    let re = part();
    Complex::new(re, part())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalComplexMatrix {
    n: usize,
    entries: Vec<GaussRational>,
}

impl RationalComplexMatrix {
    pub fn from_entries(n: usize, entries: Vec<GaussRational>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::InvalidMatrix(format!("expected {} entries for n = {n}", n * n)));
        }
        Ok(Self { n, entries })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> GaussRational) -> Result<Self> {
        let entries = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self::from_entries(n, entries)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { GaussRational::one() } else { GaussRational::zero() }).unwrap()
    }

    pub fn ones(n: usize) -> Self {
        Self::from_fn(n, |_, _| GaussRational::one()).unwrap()
    }

    /// Entries with small random numerators and denominators.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = trial_rng(seed, 0);
        Self::from_fn(n, |_, _| random_gr(&mut rng, 5)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &GaussRational {
        &self.entries[i * self.n + j]
    }

    /// `A + mu J`.
    pub fn shifted(&self, mu: &GaussRational) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|a| a + mu).collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_entries(self.n, self.entries.iter().map(to_complex64).collect())
            .expect("finite conversion")
    }
}

/// Ryser's formula over exact Gaussian rationals.
pub fn permanent_exact_rational(a: &RationalComplexMatrix) -> Result<GaussRational> {
    let n = a.dim();
    if n > EXACT_CAP {
        return Err(Error::DimensionTooLarge { n, cap: EXACT_CAP });
    }
    let mut total = GaussRational::zero();
    for subset in 1u32..(1 << n) {
        let mut prod = GaussRational::one();
        for i in 0..n {
            let mut row = GaussRational::zero();
            for j in (0..n).filter(|j| (subset >> j) & 1 == 1) {
                row = row + a.get(i, j);
            }
            prod = prod * row;
            if prod.is_zero() {
                break;
            }
        }
        if (n - subset.count_ones() as usize) % 2 == 0 {
            total = total + prod;
        } else {
            total = total - prod;
        }
    }
    Ok(total)
}

/// `Per(A + mu J)`.
pub fn q_poly_eval(a: &RationalComplexMatrix, mu: &BigRational) -> Result<GaussRational> {
    permanent_exact_rational(&a.shifted(&Complex::new(mu.clone(), BigRational::zero())))
}
