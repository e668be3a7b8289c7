mod common;

use common::{gradient_suite, CASES};

#[test]
fn analytic_gradients_match_central_differences() {
    let s = gradient_suite(24, 11);
    assert_eq!(s.shapes, 24 * CASES.len());
    assert!(s.failures.is_empty(), "{:#?}", &s.failures[..s.failures.len().min(10)]);
    // Kinks are rare; a large count would mean the check is mostly skipped.
    assert!(s.kink_skips * 20 < s.compared, "{s:?}");
}

#[test]
fn different_seeds_also_pass() {
    for seed in [1, 2, 3] {
        let s = gradient_suite(6, seed);
        assert!(s.failures.is_empty(), "seed {seed}: {:?}", s.failures);
    }
}
