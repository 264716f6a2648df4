mod common;

use common::chi_squared_fits;
use mipt_xeb::rnn::checkpoint::Checkpoint;
use mipt_xeb::rnn::{chi_rnn, gradient_check, train, GruParameters, RnnModel, SampleCount, TrainingConfig};
use mipt_xeb::trajectory::MeasurementRecord;
use mipt_xeb::xeb::Provenance;
use proptest::prelude::*;

fn provenance() -> Provenance {
    Provenance { circuit_hash: "f".repeat(64), num_qubits: 8, rate: 0.1 }
}

fn small_config(dataset_size: usize, epochs: usize) -> TrainingConfig {
    TrainingConfig {
        dataset_size,
        batch_size: 20,
        validation_size: 20,
        hidden: 4,
        dropout: 0.0,
        epochs,
        learning_rate: 1e-3,
        n_sample: SampleCount::Exact,
        seed: 12,
    }
}

#[test]
fn gradient_check_small_models() {
    for h in 1..=4 {
        for n in 1..=4 {
            let records: Vec<_> = (0..6).map(|i| MeasurementRecord::from_index((i * 5 + h as u64) % (1 << n), n)).collect();
            for dropout in [None, Some((0.4, 3))] {
                let check = gradient_check(&GruParameters::uniform(h, 10 * h as u64 + n as u64), &records, 1e-5, dropout);
                assert!(check.max_relative_error < 1e-4, "h={h} n={n} {dropout:?}: {check:?}");
            }
        }
    }
}

#[test]
fn sampler_matches_evaluator() {
    for (h, n, seed) in [(3, 4, 1), (5, 6, 2)] {
        let model = RnnModel::new(GruParameters::uniform(h, seed), 0.0, n).unwrap();
        let probs = model.enumerate_probabilities().unwrap();
        let mut counts = vec![0u64; probs.len()];
        for r in model.sample(100_000, seed) {
            assert_eq!(r.len(), n);
            counts[r.index() as usize] += 1;
        }
        let (ok, stat, crit) = chi_squared_fits(&counts, &probs);
        assert!(ok, "h={h} n={n}: chi2 {stat} >= {crit}");
    }
}

#[test]
fn identical_records_are_learned_almost_deterministically() {
    let record: MeasurementRecord = "101100".parse().unwrap();
    let records = vec![record.clone(); 200];
    let outcome = train(&records, &small_config(200, 800)).unwrap();
    let best = outcome.report.validation[outcome.report.best_epoch];
    assert!(best < 0.01, "validation NLL/site {best}");
    let p = outcome.model.sequence_log_prob(&record).unwrap().exp();
    assert!(p > 0.94, "{p}");
}

#[test]
fn trained_model_is_normalized() {
    let records: Vec<_> = (0..300u64).map(|i| MeasurementRecord::from_index((i * i) % 4096, 12)).collect();
    let outcome = train(&records, &TrainingConfig { dropout: 0.3, ..small_config(300, 20) }).unwrap();
    let total: f64 = outcome.model.enumerate_probabilities().unwrap().iter().sum();
    assert!((total - 1.0).abs() < 1e-8, "{total}");
    assert!(outcome.report.train.iter().chain(&outcome.report.validation).all(|l| l.is_finite()));
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let records: Vec<_> = (0..100u64).map(|i| MeasurementRecord::from_index(i % 7, 5)).collect();
    let config = TrainingConfig { dropout: 0.2, ..small_config(100, 10) };
    let a = train(&records, &config).unwrap();
    let b = train(&records, &config).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.report, b.report);
    let c = train(&records, &TrainingConfig { seed: 13, ..config }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn chi_rnn_of_identical_models_is_one() {
    let m = RnnModel::new(GruParameters::uniform(5, 3), 0.2, 8).unwrap();
    assert!((chi_rnn(&m, &m, SampleCount::Exact, 0, provenance()).unwrap().chi - 1.0).abs() < 1e-12);
    let finite = chi_rnn(&m, &m, SampleCount::Finite(20_000), 1, provenance()).unwrap().chi;
    assert!((finite - 1.0).abs() < 0.05, "{finite}");
}

#[test]
fn checkpoint_reload_preserves_probabilities() {
    let m = RnnModel::new(GruParameters::uniform(7, 8), 0.6, 6).unwrap();
    let ck = Checkpoint { model: m.clone(), seed: 8, learning_rate: 1e-3 };
    let back = Checkpoint::deserialize(&ck.serialize()).unwrap();
    assert_eq!(back.model.enumerate_probabilities().unwrap(), m.enumerate_probabilities().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_models_are_normalized(h in 1usize..=8, n in 1usize..=10, seed: u64) {
        let m = RnnModel::new(GruParameters::uniform(h, seed), 0.0, n).unwrap();
        let probs = m.enumerate_probabilities().unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn checkpoints_round_trip(h in 1usize..=6, n in 0usize..=20, seed: u64, dropout in 0.0f64..0.99) {
        let ck = Checkpoint {
            model: RnnModel::new(GruParameters::uniform(h, seed), dropout, n).unwrap(),
            seed,
            learning_rate: 1e-3,
        };
        let text = ck.serialize();
        let back = Checkpoint::deserialize(&text).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.serialize(), text);
    }
}
