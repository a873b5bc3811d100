//! Acceptance battery: one test per criterion, each printing a single
//! pass/fail line with the measured values (run with `--nocapture` to see
//! them on success).

use qgc::checks;

fn assert_check(result: qgc::checks::CheckResult) {
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_dp_optimality() {
    assert_check(checks::criterion_1_dp_optimality(checks::DEFAULT_SEED));
}

#[test]
fn criterion_02_low_complexity_allocation() {
    assert_check(checks::criterion_2_low_complexity_allocation(checks::DEFAULT_SEED));
}

#[test]
fn criterion_03_structure() {
    assert_check(checks::criterion_3_structure(checks::DEFAULT_SEED));
}

#[test]
fn criterion_04_residual_bound() {
    assert_check(checks::criterion_4_residual_bound(checks::DEFAULT_SEED));
}

#[test]
fn criterion_05_quantizer_contract() {
    assert_check(checks::criterion_5_quantizer_contract(checks::DEFAULT_SEED));
}

#[test]
fn criterion_06_strongly_convex_rate() {
    assert_check(checks::criterion_6_strongly_convex_rate(checks::DEFAULT_SEED));
}

#[test]
fn criterion_07_smooth_rate() {
    assert_check(checks::criterion_7_smooth_rate(checks::DEFAULT_SEED));
}

#[test]
fn criterion_08_two_track() {
    assert_check(checks::criterion_8_two_track(checks::DEFAULT_SEED));
}

#[test]
fn criterion_09_convergence_ordering() {
    assert_check(checks::criterion_9_convergence_ordering(checks::DEFAULT_SEED));
}

#[test]
fn criterion_10_bits_accounting() {
    assert_check(checks::criterion_10_bits_accounting(checks::DEFAULT_SEED));
}
