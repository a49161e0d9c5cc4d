//! One test per acceptance criterion; each prints a PASS/FAIL line.

use permcac::verify::{self, CriterionResult};

fn report(r: CriterionResult) {
    println!("{}", r.line());
    assert!(r.passed, "{}", r.line());
}

#[test]
fn a01_ryser_matches_permutation_sum() {
    report(verify::oracle_equivalence());
}

#[test]
fn a02_coefficient_paths_agree() {
    report(verify::coefficient_cross_validation());
}

#[test]
fn a03_continuation_matches_ryser() {
    report(verify::cac_end_to_end());
}

#[test]
fn a04_second_moment() {
    report(verify::second_moment_identity());
}

#[test]
fn a05_root_counts() {
    report(verify::root_count_bound());
}

#[test]
fn a06_jensen_identity() {
    report(verify::jensen_identity());
}

#[test]
fn a07_mean_shift() {
    report(verify::mean_shift());
}

#[test]
fn a08_tail_bound() {
    report(verify::tail_bound());
}

#[test]
fn a09_faulty_oracle_recovery() {
    report(verify::berlekamp_welch());
}

#[test]
fn a10_path_independence() {
    report(verify::path_independence());
}

#[test]
fn a11_schedule_boundary() {
    report(verify::schedule_sanity());
}
