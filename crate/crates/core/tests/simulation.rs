mod common;

use common::*;
use mipt_xeb::circuit::CircuitDescriptor;
use mipt_xeb::rng::{stream_rng, Stream};
use mipt_xeb::statevector::StateVector;
use mipt_xeb::trajectory::{self, CompiledCircuit, InitialState, MeasurementRecord};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

const INITS: [InitialState; 2] = [InitialState::AllPlus, InitialState::AllZero];

#[test]
fn replay_matches_dense_matrix_oracle() {
    for (l, p, seed) in [(2, 0.3, 1), (4, 0.1, 2), (4, 0.2, 3), (6, 0.05, 4)] {
        let circuit = CircuitDescriptor::sample(l, p, seed).unwrap();
        let n = circuit.num_measurements();
        assert!(n <= 12, "seed gives {n} sites");
        let compiled = CompiledCircuit::new(&circuit);
        for init in INITS {
            let oracle = all_probabilities(&circuit, init);
            let enumerated = compiled.enumerate_probabilities(init).unwrap();
            for (i, (&a, &b)) in oracle.iter().zip(&enumerated).enumerate() {
                let record = MeasurementRecord::from_index(i as u64, n);
                let replay = compiled.replay_probability(init, &record).unwrap();
                assert!((a - b).abs() < 1e-12, "L={l} record {record}: oracle {a}, dfs {b}");
                assert!((a - replay).abs() < 1e-12, "L={l} record {record}: oracle {a}, replay {replay}");
            }
        }
    }
}

#[test]
fn replay_probabilities_sum_to_one() {
    let circuits: Vec<_> = [4usize, 6, 8]
        .iter()
        .flat_map(|&l| circuits_with_at_most(l, 0.1, 12, 7))
        .take(20)
        .collect();
    assert_eq!(circuits.len(), 20);
    for circuit in &circuits {
        let compiled = CompiledCircuit::new(circuit);
        let n = circuit.num_measurements();
        for init in INITS {
            let total: f64 = (0..1u64 << n)
                .map(|i| compiled.replay_probability(init, &MeasurementRecord::from_index(i, n)).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-8, "L={} N={n}: {total}", circuit.num_qubits());
        }
    }
}

#[test]
fn sampled_frequencies_follow_replay_probabilities() {
    let circuits = circuits_with_at_most(4, 0.15, 6, 3);
    for (k, circuit) in circuits.iter().enumerate() {
        let compiled = CompiledCircuit::new(circuit);
        let n = circuit.num_measurements();
        for init in INITS {
            let probs = compiled.enumerate_probabilities(init).unwrap();
            let mut counts = vec![0u64; probs.len()];
            for s in compiled.batch_sample(init, 100_000, 40 + k as u64, None).unwrap() {
                counts[s.record.index() as usize] += 1;
            }
            let (ok, stat, crit) = chi_squared_fits(&counts, &probs);
            assert!(ok, "circuit {k} N={n} {init}: chi2 {stat} >= {crit}");
        }
    }
}

#[test]
fn sampler_reports_the_replay_probability_of_its_record() {
    let circuit = CircuitDescriptor::sample(6, 0.2, 9).unwrap();
    let compiled = CompiledCircuit::new(&circuit);
    let mut rng = stream_rng(5, Stream::Run, 0);
    for _ in 0..50 {
        for init in INITS {
            let (record, p) = compiled.sample_with(init, &mut rng);
            let replay = compiled.replay_probability(init, &record).unwrap();
            assert!((p - replay).abs() <= 1e-14 * p.max(1e-300), "{p} vs {replay}");
        }
    }
}

#[test]
fn batch_of_one_equals_single_run() {
    let circuit = CircuitDescriptor::sample(6, 0.2, 2).unwrap();
    let batch = trajectory::batch_sample(&circuit, InitialState::AllPlus, 1, 77, None).unwrap();
    assert_eq!(batch[0].record, trajectory::run_sampling(&circuit, InitialState::AllPlus, 77));
}

#[test]
fn batch_sampling_is_reproducible_and_thread_independent() {
    let circuit = CircuitDescriptor::sample(6, 0.2, 2).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| trajectory::batch_sample(&circuit, InitialState::AllPlus, 300, 5, Some(InitialState::AllZero)))
            .unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn record_outside_the_support_has_zero_probability() {
    // L = 2 with every site measured: layer 2 is idle, so its outcomes must
    // repeat those of layer 1.
    let circuit = CircuitDescriptor::sample_with_depths(2, 1.0, 1, 0, 2).unwrap();
    let compiled = CompiledCircuit::new(&circuit);
    for init in INITS {
        let probs = compiled.enumerate_probabilities(init).unwrap();
        for (i, &p) in probs.iter().enumerate() {
            let bits = MeasurementRecord::from_index(i as u64, 4);
            if bits.bits()[..2] != bits.bits()[2..] {
                assert_eq!(p, 0.0);
                assert_eq!(compiled.replay_probability(init, &bits).unwrap(), 0.0);
            }
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn entropy_trace_matches_schmidt_decomposition_oracle() {
    let circuit = CircuitDescriptor::sample(6, 0.0, 3).unwrap();
    let trace = trajectory::entropy_trace(&circuit, InitialState::AllPlus, 0);
    let mut psi = initial(InitialState::AllPlus, 6);
    for (t, s) in &trace.series {
        psi = layer_unitary(&circuit, *t) * psi;
        let expected = schmidt_entropy(psi.as_slice(), 6, 3);
        assert!((s - expected).abs() < 1e-8, "t={t}: {s} vs {expected}");
    }
    assert_eq!(trace.series.len(), circuit.depth());
}

fn random_state(l: usize, seed: u64) -> StateVector {
    let mut rng = stream_rng(seed, Stream::Init, 99);
    let raw: Vec<Complex64> = (0..1 << l)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(raw.into_iter().map(|a| a / norm).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_agrees_with_svd_and_is_symmetric(l in 2usize..=8, seed: u64, k_frac in 0.0f64..1.0) {
        let state = random_state(l, seed);
        let k = 1 + ((l - 1) as f64 * k_frac) as usize % (l - 1);
        let s = state.entanglement_entropy(k).unwrap();
        let oracle = schmidt_entropy(state.amplitudes(), l, k);
        prop_assert!((s - oracle).abs() < 1e-8, "{s} vs {oracle}");
        prop_assert!(s >= -1e-12 && s <= k.min(l - k) as f64 * std::f64::consts::LN_2 + 1e-9);
        // S_A = S_B for a pure state: reverse the qubit order and compare.
        let reversed: Vec<Complex64> = (0..1usize << l)
            .map(|i| state.amplitudes()[i.reverse_bits() >> (usize::BITS as usize - l)])
            .collect();
        let mirrored = StateVector::from_amplitudes(reversed).unwrap();
        prop_assert!((mirrored.entanglement_entropy(l - k).unwrap() - s).abs() < 1e-8);
    }

    #[test]
    fn layers_preserve_norm_and_match_dense_unitary(l in (1usize..=4).prop_map(|h| 2 * h), seed: u64, p in 0.0f64..0.5) {
        let circuit = CircuitDescriptor::sample_with_depths(l, p, seed, 2, 2).unwrap();
        let mut state = random_state(l, seed);
        let mut dense = nalgebra::DVector::from_column_slice(state.amplitudes());
        for layer in 1..=2 {
            for g in circuit.gate_sequence(layer).unwrap() {
                state.apply_pair(&g.unitary(), g.first).unwrap();
            }
            dense = layer_unitary(&circuit, layer) * dense;
        }
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
        for (a, b) in state.amplitudes().iter().zip(dense.iter()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_weights_split_the_norm(l in 2usize..=6, seed: u64, q_frac in 0.0f64..1.0) {
        let state = random_state(l, seed);
        let q = ((l as f64 * q_frac) as usize).min(l - 1);
        let (p0, p1) = state.measurement_probability(q).unwrap();
        let mut zero = state.clone();
        let mut one = state.clone();
        let w0 = zero.project(q, 0, false).unwrap();
        let w1 = one.project(q, 1, false).unwrap();
        prop_assert!((w0 + w1 - 1.0).abs() < 1e-12);
        prop_assert!((w0 - p0).abs() < 1e-12 && (w1 - p1).abs() < 1e-12);
        prop_assert!((zero.norm_sqr() - w0).abs() < 1e-12);
    }
}
