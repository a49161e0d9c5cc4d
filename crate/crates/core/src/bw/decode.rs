use std::collections::BTreeSet;

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::rational::{random_gr, GaussRational};
use crate::error::{Error, Result};
use crate::matrix::{trial_rng, unit_f64};

/// Oracle answers `(mu_i, y_i)` together with which ones were corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTranscript {
    pub points: Vec<(BigRational, GaussRational)>,
    pub corrupted: BTreeSet<usize>,
}

/// Coefficients, lowest degree first.
pub type Poly = Vec<GaussRational>;

pub fn poly_eval(p: &[GaussRational], x: &GaussRational) -> GaussRational {
    p.iter().rev().fold(GaussRational::zero(), |acc, c| acc * x + c)
}

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    p
}

/// Exact long division; returns `(quotient, remainder)`.
pub fn poly_divrem(num: &[GaussRational], den: &[GaussRational]) -> (Poly, Poly) {
    let den = trim(den.to_vec());
    let mut rem = trim(num.to_vec());
    let dl = den.len() - 1;
    if rem.len() <= dl {
        return (vec![GaussRational::zero()], rem);
    }
    let lead = den[dl].clone();
    let mut quot = vec![GaussRational::zero(); rem.len() - dl];
    for k in (0..quot.len()).rev() {
        let c = &rem[k + dl] / &lead;
        if !c.is_zero() {
            for (i, d) in den.iter().enumerate() {
                rem[k + i] = &rem[k + i] - &(&c * d);
            }
        }
        quot[k] = c;
    }
    rem.truncate(dl.max(1));
    (trim(quot), trim(rem))
}

fn is_zero_poly(p: &[GaussRational]) -> bool {
    p.iter().all(|c| c.is_zero())
}

/// One solution of `M x = rhs` by exact Gauss-Jordan elimination (free
/// variables set to zero), or `None` when inconsistent.
fn solve(mut rows: Vec<Vec<GaussRational>>, cols: usize) -> Option<Vec<GaussRational>> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = GaussRational::one() / &rows[r][c];
        for v in rows[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v = &*v - &(&f * pv);
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    if rows[r..].iter().any(|row| !row[cols].is_zero()) {
        return None;
    }
    let mut x = vec![GaussRational::zero(); cols];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = rows[i][cols].clone();
    }
    Some(x)
}

fn as_gr(x: &BigRational) -> GaussRational {
    Complex::new(x.clone(), BigRational::zero())
}

/// Tries a decoding that assumes exactly `e` errors.
fn attempt(points: &[(GaussRational, GaussRational)], degree: usize, e: usize) -> Option<Poly> {
    // unknowns: E_0..E_{e-1} (E monic of degree e), N_0..N_{degree+e}
    let n_len = degree + e + 1;
    let cols = e + n_len;
    let rows: Vec<Vec<GaussRational>> = points
        .iter()
        .map(|(x, y)| {
            let mut row = Vec::with_capacity(cols + 1);
            let mut pow = GaussRational::one();
            let mut powers = Vec::with_capacity(n_len);
            for _ in 0..n_len.max(e + 1) {
                powers.push(pow.clone());
                pow = &pow * x;
            }
            // N(x) - y * sum_{i<e} E_i x^i = y x^e
            for p in powers.iter().take(e) {
                row.push(-(y * p));
            }
            row.extend(powers.iter().take(n_len).cloned());
            row.push(y * &powers[e]);
            row
        })
        .collect();
    let sol = solve(rows, cols)?;
    let mut locator: Poly = sol[..e].to_vec();
    locator.push(GaussRational::one());
    let (q, r) = poly_divrem(&sol[e..], &locator);
    (is_zero_poly(&r) && q.len() <= degree + 1).then_some(q)
}

/// Recovers the degree-`degree` polynomial through the transcript when more
/// than `(m + degree) / 2` of the `m` answers are correct.
pub fn bw_reconstruct(transcript: &OracleTranscript, degree: usize) -> Result<Poly> {
    let m = transcript.points.len();
    let too_many = Error::TooManyErrors { degree, points: m };
    if m < degree + 1 {
        return Err(too_many);
    }
    let points: Vec<(GaussRational, GaussRational)> = transcript
        .points
        .iter()
        .map(|(x, y)| (as_gr(x), y.clone()))
        .collect();
    let e_max = (m - degree - 1) / 2;
    // two candidates within e_max disagreements of the data agree on at least
    // degree + 1 points, so the first accepted one is the answer; small e first
    // keeps the usual few-error case cheap
    for e in 0..=e_max {
        if let Some(mut q) = attempt(&points, degree, e) {
            let wrong = points.iter().filter(|(x, y)| poly_eval(&q, x) != *y).count();
            if wrong <= e_max {
                q.resize(degree + 1, GaussRational::zero());
                return Ok(q);
            }
        }
    }
    Err(too_many)
}

/// Transcript of `q` at `mu_i = 1..m` with the listed answers perturbed by
/// nonzero random Gaussian rationals.
pub fn corrupt_transcript(
    q: impl Fn(&BigRational) -> Result<GaussRational>,
    m: usize,
    corrupted: &BTreeSet<usize>,
    seed: u64,
) -> Result<OracleTranscript> {
    let mut rng = trial_rng(seed, 1);
    let points = (0..m)
        .map(|i| {
            let mu = BigRational::from_integer((i as i64 + 1).into());
            let mut y = q(&mu)?;
            if corrupted.contains(&i) {
                let noise = loop {
                    let z = random_gr(&mut rng, 9);
                    if !z.is_zero() {
                        break z;
                    }
                };
                y = y + noise;
            }
            Ok((mu, y))
        })
        .collect::<Result<_>>()?;
    Ok(OracleTranscript { points, corrupted: corrupted.clone() })
}

/// Each index independently with probability `rate`.
pub fn random_corruptions(m: usize, rate: f64, seed: u64) -> BTreeSet<usize> {
    let mut rng = trial_rng(seed, 0);
    (0..m).filter(|_| unit_f64(&mut rng) < rate).collect()
}
