mod common;

fn assert_exact(s: &common::OracleSummary) {
    assert!(s.ht_bias <= 1e-10, "{s:?}");
    assert!(s.var_formula <= 1e-10, "{s:?}");
    assert!(s.cov_formula <= 1e-10, "{s:?}");
    assert!(s.conservative_slack >= -1e-10, "{s:?}");
    assert!(s.upper_slack >= -1e-10 && s.lower_slack >= -1e-10, "{s:?}");
    assert!(s.cov_estimator_bias <= 1e-10, "{s:?}");
    assert!(s.convex_excess <= 1e-10, "{s:?}");
}

#[test]
fn exact_identities_hold_on_small_instances() {
    let s = common::run_exact_oracle(11, 60, 5, 2);
    assert_exact(&s);
}

#[test]
fn exact_identities_hold_at_interior_times() {
    let s = common::run_exact_oracle(12, 90, 4, 3);
    assert_exact(&s);
    assert!(s.cov_estimator_checks > 0 && s.positivity_errors > 0);
}
