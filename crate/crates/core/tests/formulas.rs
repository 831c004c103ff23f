mod common;

use common::formulas;

#[test]
fn psi_values() {
    formulas::psi_values();
}

#[test]
fn dudley_constant_values() {
    formulas::dudley_constant_values();
}

#[test]
fn radius_values() {
    formulas::radius_values();
}

#[test]
fn failure_prob_values() {
    formulas::failure_prob_values();
}

#[test]
fn covering_bound_values() {
    formulas::covering_bound_values();
}

#[test]
fn lattice_counts() {
    formulas::lattice_counts();
}

#[test]
fn entropy_integral_values() {
    formulas::entropy_integral_values();
}
