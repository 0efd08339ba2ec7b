#[path = "support/grad_check.rs"]
mod grad_check;

use grad_check::{max_relative_error, REL_TOL};

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..24 {
        let err = max_relative_error(seed);
        assert!(err <= REL_TOL, "seed {seed}: relative error {err:e}");
    }
}
