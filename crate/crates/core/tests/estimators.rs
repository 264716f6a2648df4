mod common;

use common::*;
use mipt_xeb::circuit::CircuitDescriptor;
use mipt_xeb::trajectory::{CompiledCircuit, InitialState};
use mipt_xeb::xeb::{self, EstimatorKind};

fn oracle_chi(circuit: &CircuitDescriptor, rho: InitialState, sigma: InitialState) -> f64 {
    let pr = all_probabilities(circuit, rho);
    let ps = all_probabilities(circuit, sigma);
    pr.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>() / ps.iter().map(|b| b * b).sum::<f64>()
}

#[test]
fn exact_chi_matches_dense_oracle() {
    for circuit in circuits_with_at_most(4, 0.15, 10, 4) {
        let exact = xeb::chi_exact(&circuit).unwrap();
        let oracle = oracle_chi(&circuit, InitialState::AllPlus, InitialState::AllZero);
        assert!((exact.chi - oracle).abs() < 1e-10, "{} vs {oracle}", exact.chi);
        assert_eq!(exact.estimator, EstimatorKind::Exact);
    }
}

#[test]
fn identical_initial_states_give_unit_chi() {
    for circuit in circuits_with_at_most(6, 0.2, 14, 10) {
        for init in [InitialState::AllZero, InitialState::AllPlus] {
            let chi = xeb::chi_exact_between(&circuit, init, init).unwrap().chi;
            assert!((chi - 1.0).abs() < 1e-10, "{chi}");
        }
    }
}

/// Numerator and denominator are unbiased sample means, so their averages
/// over independent batches approach the exact sums.
#[test]
fn histogram_estimator_converges_to_exact() {
    let circuit = circuits_with_at_most(6, 0.1, 10, 1).remove(0);
    let compiled = CompiledCircuit::new(&circuit);
    let exact = xeb::chi_exact(&circuit).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    let reps = 20;
    for r in 0..reps {
        let rho = compiled.batch_sample(InitialState::AllPlus, 2000, 2 * r, Some(InitialState::AllZero)).unwrap();
        let sigma = compiled.batch_sample(InitialState::AllZero, 2000, 2 * r + 1, Some(InitialState::AllZero)).unwrap();
        let est = xeb::chi_histogram(&circuit, &rho, &sigma).unwrap();
        num += est.numerator / reps as f64;
        den += est.denominator / reps as f64;
    }
    assert!((num - exact.numerator).abs() < 0.05 * exact.numerator, "{num} vs {}", exact.numerator);
    assert!((den - exact.denominator).abs() < 0.05 * exact.denominator, "{den} vs {}", exact.denominator);
    assert!((num / den - exact.chi).abs() < 0.05);
}

#[test]
fn histogram_with_equal_initial_states_approaches_one() {
    let circuit = CircuitDescriptor::sample(6, 0.15, 3).unwrap();
    let compiled = CompiledCircuit::new(&circuit);
    let a = compiled.batch_sample(InitialState::AllZero, 5000, 1, Some(InitialState::AllZero)).unwrap();
    let b = compiled.batch_sample(InitialState::AllZero, 5000, 2, Some(InitialState::AllZero)).unwrap();
    let chi = xeb::chi_histogram(&circuit, &a, &b).unwrap().chi;
    assert!((chi - 1.0).abs() < 0.05, "{chi}");
}

#[test]
fn histogram_rejects_missing_replay() {
    let circuit = CircuitDescriptor::sample(4, 0.2, 1).unwrap();
    let compiled = CompiledCircuit::new(&circuit);
    let bare = compiled.batch_sample(InitialState::AllPlus, 10, 1, None).unwrap();
    assert!(xeb::chi_histogram(&circuit, &bare, &bare).is_err());
}
