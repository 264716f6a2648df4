//! Cross-entropy estimates and the sample-complexity analysis built on them.
//!
//! For one circuit the cross entropy is
//! `χ_C = Σ_m p^ρ_m p^σ_m / Σ_m (p^σ_m)²`, i.e. the mean of `p^σ` over
//! ρ-distributed records divided by its mean over σ-distributed records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::circuit::CircuitDescriptor;
use crate::error::{Error, Result};
use crate::trajectory::{CompiledCircuit, InitialState, SampledRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Exact,
    Histogram,
    Rnn,
}

impl EstimatorKind {
    pub fn tag(self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::Histogram => "histogram",
            EstimatorKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorKind::Exact),
            "histogram" => Ok(EstimatorKind::Histogram),
            "rnn" => Ok(EstimatorKind::Rnn),
            other => Err(Error::InvalidInput(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Which circuit an estimate belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub circuit_hash: String,
    pub num_qubits: usize,
    pub rate: f64,
}

impl Provenance {
    pub fn of(circuit: &CircuitDescriptor) -> Self {
        Self {
            circuit_hash: circuit.content_hash(),
            num_qubits: circuit.num_qubits(),
            rate: circuit.measurement_rate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct XebEstimate {
    pub chi: f64,
    pub estimator: EstimatorKind,
    /// ρ-side sample count; `None` for exact enumeration.
    pub runs: Option<usize>,
    /// σ-side sample count, equal to `runs` unless deliberately decoupled.
    pub sigma_runs: Option<usize>,
    pub numerator: f64,
    pub denominator: f64,
    pub provenance: Provenance,
}

impl XebEstimate {
    pub fn from_ratio(
        numerator: f64,
        denominator: f64,
        estimator: EstimatorKind,
        runs: Option<usize>,
        sigma_runs: Option<usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        if !(denominator > 0.0) || !denominator.is_finite() || !numerator.is_finite() {
            return Err(Error::DegenerateEstimate(format!(
                "numerator {numerator}, denominator {denominator}"
            )));
        }
        Ok(Self {
            chi: numerator / denominator,
            estimator,
            runs,
            sigma_runs,
            numerator,
            denominator,
            provenance,
        })
    }
}

/// `χ_C` for `ρ = |+>^L`, `σ = |0>^L` by enumerating every record.
pub fn chi_exact(circuit: &CircuitDescriptor) -> Result<XebEstimate> {
    chi_exact_between(circuit, InitialState::AllPlus, InitialState::AllZero)
}

pub fn chi_exact_between(
    circuit: &CircuitDescriptor,
    rho: InitialState,
    sigma: InitialState,
) -> Result<XebEstimate> {
    let compiled = CompiledCircuit::new(circuit);
    let p_sigma = compiled.enumerate_probabilities(sigma)?;
    let p_rho = if rho == sigma {
        p_sigma.clone()
    } else {
        compiled.enumerate_probabilities(rho)?
    };
    let numerator = p_rho.iter().zip(&p_sigma).map(|(a, b)| a * b).sum();
    let denominator = p_sigma.iter().map(|b| b * b).sum();
    XebEstimate::from_ratio(
        numerator,
        denominator,
        EstimatorKind::Exact,
        None,
        None,
        Provenance::of(circuit),
    )
}

fn replay_mean(records: &[SampledRecord], side: &str) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{side} record list is empty")));
    }
    let mut sum = 0.0;
    for (i, r) in records.iter().enumerate() {
        sum += r.replay_probability.ok_or_else(|| {
            Error::InvalidInput(format!("{side} record {i} lacks its σ-replay probability"))
        })?;
    }
    Ok(sum / records.len() as f64)
}

/// Empirical-mean estimator: mean `p^σ` over ρ-sampled records divided by
/// mean `p^σ` over σ-sampled records.
pub fn chi_histogram(
    circuit: &CircuitDescriptor,
    rho_records: &[SampledRecord],
    sigma_records: &[SampledRecord],
) -> Result<XebEstimate> {
    let numerator = replay_mean(rho_records, "ρ")?;
    let denominator = replay_mean(sigma_records, "σ")?;
    XebEstimate::from_ratio(
        numerator,
        denominator,
        EstimatorKind::Histogram,
        Some(rho_records.len()),
        Some(sigma_records.len()),
        Provenance::of(circuit),
    )
}

/// Sample mean and sample standard deviation of `χ_C` across circuits.
pub fn chi_circuit_average(estimates: &[XebEstimate]) -> Result<(f64, f64)> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput(
            "circuit average needs at least two estimates".into(),
        ));
    }
    let head = &estimates[0].provenance;
    if let Some(bad) = estimates.iter().find(|e| {
        e.provenance.num_qubits != head.num_qubits || e.provenance.rate != head.rate
    }) {
        return Err(Error::InvalidInput(format!(
            "mixed circuit families: (L={}, p={}) vs (L={}, p={})",
            head.num_qubits, head.rate, bad.provenance.num_qubits, bad.provenance.rate
        )));
    }
    Ok(mean_and_std(estimates.iter().map(|e| e.chi)))
}

/// Sample mean and (n-1)-normalized standard deviation.
pub fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Where the reference value of an accuracy curve came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceKind {
    ExactEnumeration,
    /// Histogram estimate at a large run count taken as converged.
    LargeMPlateau { runs: usize },
}

impl ReferenceKind {
    pub fn tag(&self) -> String {
        match self {
            ReferenceKind::ExactEnumeration => "exact-enumeration".to_string(),
            ReferenceKind::LargeMPlateau { runs } => format!("large-M-plateau@{runs}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub chi: f64,
    pub kind: ReferenceKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyPoint {
    pub runs: usize,
    pub chi: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyCurve {
    pub estimator: EstimatorKind,
    pub reference: Reference,
    pub points: Vec<AccuracyPoint>,
}

/// `ε(M) = |χ_ref − χ(M)|` on `grid`, which must be strictly increasing and
/// fully covered by `estimates`.
pub fn accuracy_curve(
    reference: Reference,
    grid: &[usize],
    estimates: &BTreeMap<usize, XebEstimate>,
    estimator: EstimatorKind,
) -> Result<AccuracyCurve> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("M grid must be strictly increasing".into()));
    }
    let points = grid
        .iter()
        .map(|&runs| {
            let est = estimates
                .get(&runs)
                .ok_or_else(|| Error::InvalidInput(format!("no {estimator} estimate for M={runs}")))?;
            Ok(AccuracyPoint {
                runs,
                chi: est.chi,
                epsilon: (reference.chi - est.chi).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyCurve {
        estimator,
        reference,
        points,
    })
}

/// Smallest grid `M` whose accuracy is within `epsilon`; `None` when no grid
/// point achieves it. Later points are not required to stay within `epsilon`.
pub fn m_min(curve: &AccuracyCurve, epsilon: f64) -> Result<Option<usize>> {
    if curve.points.is_empty() {
        return Err(Error::InvalidInput("empty accuracy curve".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("target accuracy {epsilon} must be positive")));
    }
    Ok(curve
        .points
        .iter()
        .find(|p| p.epsilon <= epsilon)
        .map(|p| p.runs))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaMEntry {
    pub epsilon: f64,
    pub m_min_histogram: Option<usize>,
    pub m_min_rnn: Option<usize>,
}

impl DeltaMEntry {
    /// `M_min^histogram − M_min^RNN`, defined when both are achieved.
    pub fn delta(&self) -> Option<i64> {
        Some(self.m_min_histogram? as i64 - self.m_min_rnn? as i64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMReport {
    pub entries: Vec<DeltaMEntry>,
}

pub fn delta_m_report(
    histogram: &AccuracyCurve,
    rnn: &AccuracyCurve,
    epsilons: &[f64],
) -> Result<DeltaMReport> {
    let entries = epsilons
        .iter()
        .map(|&epsilon| {
            Ok(DeltaMEntry {
                epsilon,
                m_min_histogram: m_min(histogram, epsilon)?,
                m_min_rnn: m_min(rnn, epsilon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaMReport { entries })
}
