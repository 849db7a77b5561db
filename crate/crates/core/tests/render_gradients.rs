mod common;

use common::gradcheck::{check, random_problem, GROUPS};

#[test]
fn backward_matches_finite_differences_on_small_scenes() {
    for seed in 0..10 {
        let p = random_problem(seed);
        let res = check(&p, 1e-4, 1e-6);
        for (g, err) in GROUPS.iter().zip(res.max_rel) {
            assert!(err < 1e-4, "seed {seed} {g}: {err:.3e}");
        }
    }
}

/// Central differences have O(h^2) truncation error, so a correct analytic
/// gradient sees the mismatch shrink about 100x per decade of h. A wrong
/// gradient plateaus instead.
#[test]
fn finite_difference_mismatch_shrinks_quadratically() {
    for seed in [1009, 1034, 3, 17] {
        let p = random_problem(seed);
        let coarse = check(&p, 1e-3, 1e-6).max_rel;
        let fine = check(&p, 1e-4, 1e-6).max_rel;
        for g in 0..GROUPS.len() {
            if coarse[g] < 1e-7 {
                continue;
            }
            assert!(fine[g] < coarse[g] / 20.0, "seed {seed} {}: {:.3e} -> {:.3e}", GROUPS[g], coarse[g], fine[g]);
        }
    }
}
