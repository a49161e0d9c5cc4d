//! Exact recovery of `Per(A)` from an oracle for `Per(A + mu J)` that lies on
//! a minority of queries, by Berlekamp-Welch decoding over Gaussian rationals.

mod decode;
mod rational;

use serde::{Deserialize, Serialize};

pub use decode::{bw_reconstruct, corrupt_transcript, poly_divrem, poly_eval, random_corruptions, OracleTranscript, Poly};
pub use rational::{
    format_gr, gr, gr_int, permanent_exact_rational, q_poly_eval, random_gr, ratio, to_complex64, GaussRational,
    RationalComplexMatrix, EXACT_CAP,
};

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionOutcome {
    pub recovered: String,
    pub expected: String,
    pub matches: bool,
    pub corrupted: usize,
}

/// Runs the decoder on an explicit set of corrupted query indices.
pub fn reduction_with_corruptions(
    a: &RationalComplexMatrix,
    m: usize,
    corrupted: &std::collections::BTreeSet<usize>,
    seed: u64,
) -> Result<ReductionOutcome> {
    let n = a.dim();
    if m > MAX_POINTS || m < n + 1 {
        return Err(Error::ParameterViolation(format!("need {} <= m <= {MAX_POINTS}, got {m}", n + 1)));
    }
    let transcript = corrupt_transcript(|mu| q_poly_eval(a, mu), m, corrupted, seed)?;
    let q = bw_reconstruct(&transcript, n)?;
    let expected = permanent_exact_rational(a)?;
    Ok(ReductionOutcome {
        recovered: format_gr(&q[0]),
        expected: format_gr(&expected),
        matches: q[0] == expected,
        corrupted: corrupted.len(),
    })
}

/// Corrupts each of the `m` queries with probability `rate` and decodes.
pub fn reduction_demo(a: &RationalComplexMatrix, m: usize, rate: f64, seed: u64) -> Result<ReductionOutcome> {
    let n = a.dim();
    let limit = (m as f64 - n as f64) / (2.0 * m as f64);
    if !(0.0..limit).contains(&rate) {
        return Err(Error::ParameterViolation(format!(
            "corruption rate {rate} must lie in [0, {limit})"
        )));
    }
    let corrupted = random_corruptions(m, rate, seed);
    reduction_with_corruptions(a, m, &corrupted, seed)
}
