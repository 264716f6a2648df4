//! Cross entropy from a pair of trained models.

use super::RnnModel;
use crate::trajectory::MeasurementRecord;
use crate::error::{Error, Result};
use crate::xeb::{EstimatorKind, Provenance, XebEstimate};

/// How many records to draw from each model; `Exact` sums over all `2^N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleCount {
    Exact,
    Finite(usize),
}

impl std::fmt::Display for SampleCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleCount::Exact => f.write_str("exact"),
            SampleCount::Finite(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for SampleCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "inf" => Ok(SampleCount::Exact),
            n => n
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(SampleCount::Finite)
                .ok_or_else(|| Error::InvalidInput(format!("bad sample count `{s}`"))),
        }
    }
}

/// `χ` with `q^ρ`, `q^σ` the model distributions in place of the circuit's.
/// Finite mode draws ρ-records from ancestral stream 0 of `seed` and
/// σ-records from stream 1, scoring both with the σ-model.
pub fn chi_rnn(
    rho: &RnnModel,
    sigma: &RnnModel,
    n_sample: SampleCount,
    seed: u64,
    provenance: Provenance,
) -> Result<XebEstimate> {
    if rho.record_len != sigma.record_len {
        return Err(Error::RecordLength {
            expected: sigma.record_len,
            got: rho.record_len,
        });
    }
    match n_sample {
        SampleCount::Exact => {
            let q_rho = rho.enumerate_probabilities()?;
            let q_sigma = sigma.enumerate_probabilities()?;
            let numerator = q_rho.iter().zip(&q_sigma).map(|(a, b)| a * b).sum();
            let denominator = q_sigma.iter().map(|b| b * b).sum();
            XebEstimate::from_ratio(numerator, denominator, EstimatorKind::Rnn, None, None, provenance)
        }
        SampleCount::Finite(n) => {
            if n == 0 {
                return Err(Error::InvalidInput("sample count must be positive".into()));
            }
            let mean = |records: &[MeasurementRecord]| -> Result<f64> {
                let lp = sigma.log_probs(records)?;
                Ok(lp.iter().map(|l| l.exp()).sum::<f64>() / n as f64)
            };
            let numerator = mean(&rho.sample_stream(n, seed, 0))?;
            let denominator = mean(&sigma.sample_stream(n, seed, 1))?;
            XebEstimate::from_ratio(numerator, denominator, EstimatorKind::Rnn, Some(n), Some(n), provenance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::GruParameters;
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            circuit_hash: "0".repeat(64),
            num_qubits: 4,
            rate: 0.1,
        }
    }

    #[test]
    fn identical_models_give_one_exactly() {
        let m = RnnModel::new(GruParameters::uniform(4, 1), 0.0, 6).unwrap();
        let est = chi_rnn(&m, &m, SampleCount::Exact, 0, prov()).unwrap();
        assert!((est.chi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_mode_converges_to_exact() {
        let a = RnnModel::new(GruParameters::uniform(4, 1), 0.0, 6).unwrap();
        let b = RnnModel::new(GruParameters::uniform(4, 2), 0.0, 6).unwrap();
        let exact = chi_rnn(&a, &b, SampleCount::Exact, 0, prov()).unwrap().chi;
        let est = chi_rnn(&a, &b, SampleCount::Finite(100_000), 5, prov()).unwrap();
        assert!((est.chi - exact).abs() < 0.02, "{} vs {exact}", est.chi);
        assert_eq!(est.runs, Some(100_000));
    }

    #[test]
    fn sample_count_parses() {
        assert_eq!("exact".parse::<SampleCount>().unwrap(), SampleCount::Exact);
        assert_eq!("50000".parse::<SampleCount>().unwrap(), SampleCount::Finite(50000));
        assert!("0".parse::<SampleCount>().is_err());
    }
}
