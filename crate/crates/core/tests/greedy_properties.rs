//! Greedy quasitiling invariants over randomized windows, shapes and ε.

use quasitile_core::verify::quasitiling_random_suite;
use quasitile_core::GroupSpec;

fn check(group: GroupSpec, ragged: bool) {
    let r = quasitiling_random_suite(group, ragged, 200, 11).unwrap();
    // ε-disjointness, insertion certificate, maximality, covering bound,
    // and disjointified tiles: disjoint, same union, centers kept
    assert_eq!(r.violations, 0, "{group}: {:?}", r.first_violation);
    assert_eq!(r.trials, 200);
    for key in [
        "eps_disjoint_failures",
        "covering_failures",
        "maximality_failures",
        "overlap_failures",
        "center_failures",
    ] {
        assert_eq!(r.summary[key], 0, "{group} {key}");
    }
}

#[test]
fn integer_line() {
    check(GroupSpec::Zd(1), false);
    check(GroupSpec::Zd(1), true);
}

#[test]
fn integer_plane() {
    check(GroupSpec::Zd(2), false);
    check(GroupSpec::Zd(2), true);
}

#[test]
fn heisenberg() {
    check(GroupSpec::Heisenberg3, false);
    check(GroupSpec::Heisenberg3, true);
}
