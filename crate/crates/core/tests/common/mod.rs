//! Reference implementations used as test oracles. Everything here is
//! written against full `2^L × 2^L` matrices, independently of the
//! production kernels.

#![allow(dead_code)]

use mipt_xeb::circuit::CircuitDescriptor;
use mipt_xeb::trajectory::{InitialState, MeasurementRecord};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli_x() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

fn pauli_y() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

/// `exp(-i θ/2 (cos φ X + sin φ Y))`.
pub fn rotation(theta: f64, phi: f64) -> DMatrix<Complex64> {
    let axis = pauli_x() * c(phi.cos(), 0.) + pauli_y() * c(phi.sin(), 0.);
    DMatrix::identity(2, 2) * c((theta / 2.).cos(), 0.) - axis * c(0., (theta / 2.).sin())
}

/// `exp(-i θ X⊗X)`.
pub fn ms(theta: f64) -> DMatrix<Complex64> {
    let xx = pauli_x().kronecker(&pauli_x());
    DMatrix::identity(4, 4) * c(theta.cos(), 0.) - xx * c(0., theta.sin())
}

/// Full-register unitary of one circuit layer.
pub fn layer_unitary(circuit: &CircuitDescriptor, layer: usize) -> DMatrix<Complex64> {
    let l = circuit.num_qubits();
    let mut full = DMatrix::<Complex64>::identity(1, 1);
    let mut q = 0;
    while q < l {
        match (circuit.phi(layer, q), q + 1 < l) {
            (Some(a), true) if circuit.phi(layer, q + 1).is_some() && (layer % 2 == 1) == (q % 2 == 0) => {
                let b = circuit.phi(layer, q + 1).unwrap();
                let pair = ms(std::f64::consts::FRAC_PI_4)
                    * rotation(std::f64::consts::FRAC_PI_2, a.radians())
                        .kronecker(&rotation(std::f64::consts::FRAC_PI_2, b.radians()));
                full = full.kronecker(&pair);
                q += 2;
            }
            _ => {
                full = full.kronecker(&DMatrix::identity(2, 2));
                q += 1;
            }
        }
    }
    full
}

pub fn initial(init: InitialState, l: usize) -> DVector<Complex64> {
    let dim = 1 << l;
    match init {
        InitialState::AllZero => DVector::from_fn(dim, |i, _| if i == 0 { c(1., 0.) } else { c(0., 0.) }),
        InitialState::AllPlus => DVector::from_element(dim, c((dim as f64).sqrt().recip(), 0.)),
    }
}

/// Squared norm of the state after applying the unnormalized projectors of
/// `record` in site order.
pub fn record_probability(circuit: &CircuitDescriptor, init: InitialState, record: &MeasurementRecord) -> f64 {
    let l = circuit.num_qubits();
    let mut psi = initial(init, l);
    let mut bits = record.bits().iter();
    for layer in 1..=circuit.depth() {
        psi = layer_unitary(circuit, layer) * psi;
        for site in circuit.sites().iter().filter(|s| s.layer == layer) {
            let outcome = *bits.next().expect("record long enough") as usize;
            let shift = l - 1 - site.qubit;
            for (i, a) in psi.iter_mut().enumerate() {
                if (i >> shift) & 1 != outcome {
                    *a = c(0., 0.);
                }
            }
        }
    }
    assert!(bits.next().is_none(), "record longer than the circuit's site list");
    psi.norm_squared()
}

pub fn all_probabilities(circuit: &CircuitDescriptor, init: InitialState) -> Vec<f64> {
    let n = circuit.num_measurements();
    (0..1u64 << n)
        .map(|i| record_probability(circuit, init, &MeasurementRecord::from_index(i, n)))
        .collect()
}

/// Entanglement entropy (nats) of the leading `k` qubits from the singular
/// values of the `2^k × 2^(L-k)` amplitude matrix.
pub fn schmidt_entropy(amplitudes: &[Complex64], l: usize, k: usize) -> f64 {
    let m = DMatrix::from_row_slice(1 << k, 1 << (l - k), amplitudes);
    m.singular_values()
        .iter()
        .map(|s| s * s)
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.ln())
        .sum()
}

/// Pearson chi-squared goodness-of-fit at significance 1e-3. Categories with
/// expected count below 5 are pooled into one bin.
pub fn chi_squared_fits(counts: &[u64], probabilities: &[f64]) -> (bool, f64, f64) {
    let total: u64 = counts.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in counts.iter().zip(probabilities) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            bins.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        bins.push(pooled);
    } else {
        assert_eq!(pooled.0, 0.0, "observed a zero-probability outcome");
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (bins.len() - 1).max(1) as f64;
    let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.999);
    (stat < critical, stat, critical)
}

/// Seeds in `0..` whose L, p circuit has at most `max_n` measurements.
pub fn circuits_with_at_most(l: usize, p: f64, max_n: usize, count: usize) -> Vec<CircuitDescriptor> {
    (0u64..)
        .map(|s| CircuitDescriptor::sample(l, p, s).unwrap())
        .filter(|c| c.num_measurements() <= max_n)
        .take(count)
        .collect()
}
