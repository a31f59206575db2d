mod common;

use common::{enumeration_oracle, oracle_gaps, psd_random_gap, psd_two_by_two_error};
use nalgebra::{DMatrix, DVector};

#[test]
fn enumeration_oracle_solves_a_hand_case() {
    // Σ = I, ρ = (2, −2, 0), λ = 1, zero sum: β = (1, −1, 0).
    let (beta, f) = enumeration_oracle(&DMatrix::identity(3, 3), &DVector::from_column_slice(&[2.0, -2.0, 0.0]), 1.0, true);
    assert!((&beta - DVector::from_column_slice(&[1.0, -1.0, 0.0])).amax() < 1e-12);
    assert!((f - (1.0 - 4.0 + 2.0)).abs() < 1e-12);
}

#[test]
fn zero_sum_solver_matches_oracle() {
    let g = oracle_gaps(25, true);
    assert!(g.objective <= 1e-4 && g.coefficients <= 1e-3, "{g:?}");
}

#[test]
fn unconstrained_solver_matches_oracle() {
    let g = oracle_gaps(25, false);
    assert!(g.objective <= 1e-4 && g.coefficients <= 1e-3, "{g:?}");
}

#[test]
fn psd_projection_hits_closed_form_optimum() {
    for c in [1.5, 2.0, 3.0] {
        assert!(psd_two_by_two_error(c) <= 1e-4, "c = {c}");
    }
}

#[test]
fn psd_projection_leaves_psd_input_alone() {
    assert_eq!(psd_random_gap(20), 0.0);
}
