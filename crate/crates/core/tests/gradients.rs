mod common;

use common::suites::{block_suite, primitive_suite, BLOCK_TOL, PRIMITIVE_TOL};

#[test]
fn primitives_match_finite_differences() {
    let cases = primitive_suite().unwrap();
    assert!(cases.len() >= 90);
    for c in &cases {
        assert!(c.report.passes(PRIMITIVE_TOL), "{}: {:?}", c.name, c.report);
    }
}

#[test]
fn blocks_match_finite_differences() {
    for c in &block_suite().unwrap() {
        assert!(c.report.passes(BLOCK_TOL), "{}: {:?}", c.name, c.report);
    }
}
