//! Executing circuits: Born-rule sampling, unnormalized replay, exact
//! enumeration and entanglement traces.
//!
//! Replay keeps the state normalized and multiplies the branch weights of the
//! successive projections instead of carrying an unnormalized vector; the
//! product equals the squared norm of the unnormalized final state and does
//! not underflow for long records. Sampling uses the identical arithmetic, so
//! the probability a sampling run reports for its own record is bit-identical
//! to replaying that record.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::CircuitDescriptor;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::statevector::{Matrix4, StateVector};

/// Largest `N` for which the crate enumerates all `2^N` records.
pub const MAX_ENUMERATION_BITS: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitialState {
    /// `|+>^{⊗L}`, the ρ-circuit input.
    AllPlus,
    /// `|0>^{⊗L}`, the σ-circuit input.
    AllZero,
}

impl InitialState {
    pub fn prepare(self, num_qubits: usize) -> StateVector {
        match self {
            InitialState::AllPlus => StateVector::plus(num_qubits),
            InitialState::AllZero => StateVector::zero(num_qubits),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            InitialState::AllPlus => "all-plus",
            InitialState::AllZero => "all-zero",
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-plus" | "plus" | "rho" => Ok(InitialState::AllPlus),
            "all-zero" | "zero" | "sigma" => Ok(InitialState::AllZero),
            other => Err(Error::InvalidInput(format!("unknown initial state `{other}`"))),
        }
    }
}

/// Outcomes `m_1 ... m_N`, position `i` aligned with `sites()[i]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasurementRecord {
    bits: Vec<u8>,
}

impl MeasurementRecord {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidInput(format!("record entry {b} is not a bit")));
        }
        Ok(Self { bits })
    }

    /// The record whose bits spell `index` in binary, first site most
    /// significant.
    pub fn from_index(index: u64, len: usize) -> Self {
        Self {
            bits: (0..len)
                .map(|i| ((index >> (len - 1 - i)) & 1) as u8)
                .collect(),
        }
    }

    pub fn index(&self) -> u64 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for MeasurementRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl FromStr for MeasurementRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(Error::InvalidInput(format!("record `{s}` contains non-bit characters"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| Self { bits })
    }
}

/// One sampled run, optionally paired with its probability under a second
/// initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRecord {
    pub record: MeasurementRecord,
    pub replay_probability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTrace {
    /// `(layer, S_{L/2})` in nats; for smoothed traces the layer is the even
    /// member of each averaged `(odd, even)` pair.
    pub series: Vec<(usize, f64)>,
    pub circuits: usize,
    pub smoothed: bool,
}

impl EntropyTrace {
    /// Averages non-overlapping `(2j-1, 2j)` layer pairs. A trailing unpaired
    /// layer is kept as is.
    pub fn smooth(&self) -> EntropyTrace {
        if self.smoothed {
            return self.clone();
        }
        let series = self
            .series
            .chunks(2)
            .map(|pair| {
                let t = pair.last().expect("non-empty chunk").0;
                (t, pair.iter().map(|(_, s)| s).sum::<f64>() / pair.len() as f64)
            })
            .collect();
        EntropyTrace {
            series,
            circuits: self.circuits,
            smoothed: true,
        }
    }
}

/// Circuit-averaged entropy curve with the standard error of the mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedEntropy {
    pub layers: Vec<usize>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub circuits: usize,
}

pub fn average_traces(traces: &[EntropyTrace]) -> Result<AveragedEntropy> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidInput("no traces to average".into()))?;
    let layers: Vec<usize> = first.series.iter().map(|(t, _)| *t).collect();
    if traces
        .iter()
        .any(|tr| tr.series.len() != layers.len() || tr.smoothed != first.smoothed)
    {
        return Err(Error::InvalidInput("traces have mismatched layouts".into()));
    }
    let n = traces.len() as f64;
    let mut mean = vec![0.0; layers.len()];
    let mut sem = vec![0.0; layers.len()];
    for (i, (m, e)) in mean.iter_mut().zip(sem.iter_mut()).enumerate() {
        let values = traces.iter().map(|tr| tr.series[i].1);
        *m = values.clone().sum::<f64>() / n;
        if traces.len() > 1 {
            let var = values.map(|v| (v - *m).powi(2)).sum::<f64>() / (n - 1.0);
            *e = (var / n).sqrt();
        }
    }
    Ok(AveragedEntropy {
        layers,
        mean,
        sem,
        circuits: traces.len(),
    })
}

#[derive(Clone, Copy, Debug)]
enum Step {
    /// Index into `CompiledCircuit::layers`.
    Unitary(usize),
    Measure(usize),
}

/// A circuit lowered to fused 4x4 pair unitaries, with the measurement-free
/// encoding phase pre-applied to both initial states.
#[derive(Clone, Debug)]
pub struct CompiledCircuit {
    num_qubits: usize,
    num_measurements: usize,
    t_encoding: usize,
    layers: Vec<Vec<(usize, Matrix4)>>,
    bulk: Vec<Step>,
    encoded_plus: StateVector,
    encoded_zero: StateVector,
}

impl CompiledCircuit {
    pub fn new(circuit: &CircuitDescriptor) -> Self {
        let num_qubits = circuit.num_qubits();
        let layers: Vec<Vec<(usize, Matrix4)>> = (1..=circuit.depth())
            .map(|t| {
                circuit
                    .gate_sequence(t)
                    .expect("layer within depth")
                    .iter()
                    .map(|g| (g.first, g.unitary()))
                    .collect()
            })
            .collect();

        let mut bulk = Vec::new();
        let mut sites = circuit.sites().iter().peekable();
        for t in circuit.t_encoding() + 1..=circuit.depth() {
            bulk.push(Step::Unitary(t - 1));
            while let Some(s) = sites.next_if(|s| s.layer == t) {
                bulk.push(Step::Measure(s.qubit));
            }
        }

        let mut compiled = Self {
            num_qubits,
            num_measurements: circuit.num_measurements(),
            t_encoding: circuit.t_encoding(),
            layers,
            bulk,
            encoded_plus: StateVector::plus(num_qubits),
            encoded_zero: StateVector::zero(num_qubits),
        };
        for t in 0..compiled.t_encoding {
            let layer = std::mem::take(&mut compiled.layers[t]);
            compiled.apply_layer_to(&layer, InitialState::AllPlus);
            compiled.apply_layer_to(&layer, InitialState::AllZero);
            compiled.layers[t] = layer;
        }
        compiled
    }

    fn apply_layer_to(&mut self, layer: &[(usize, Matrix4)], init: InitialState) {
        let state = match init {
            InitialState::AllPlus => &mut self.encoded_plus,
            InitialState::AllZero => &mut self.encoded_zero,
        };
        apply_layer(state, layer);
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    /// State after the encoding phase.
    pub fn encoded_state(&self, init: InitialState) -> &StateVector {
        match init {
            InitialState::AllPlus => &self.encoded_plus,
            InitialState::AllZero => &self.encoded_zero,
        }
    }

    /// One Born-rule trajectory. Returns the record and its probability under
    /// `init`.
    pub fn sample_with<R: Rng>(&self, init: InitialState, rng: &mut R) -> (MeasurementRecord, f64) {
        let mut state = self.encoded_state(init).clone();
        let mut bits = Vec::with_capacity(self.num_measurements);
        let mut probability = 1.0;
        for step in &self.bulk {
            match *step {
                Step::Unitary(t) => apply_layer(&mut state, &self.layers[t]),
                Step::Measure(q) => {
                    let p1 = state.weight_of_one(q).expect("qubit in range");
                    let outcome = u8::from(rng.random::<f64>() < p1);
                    probability *= state
                        .project(q, outcome, true)
                        .expect("sampled branch has positive weight");
                    bits.push(outcome);
                }
            }
        }
        (MeasurementRecord { bits }, probability)
    }

    /// Run number `run` of the batch seeded by `seed`.
    pub fn sample_run(&self, init: InitialState, seed: u64, run: u64) -> (MeasurementRecord, f64) {
        self.sample_with(init, &mut stream_rng(seed, Stream::Run, run))
    }

    /// `p^{init}_m`: squared norm after all unitaries and the unnormalized
    /// projectors selected by `record`.
    pub fn replay_probability(&self, init: InitialState, record: &MeasurementRecord) -> Result<f64> {
        if record.len() != self.num_measurements {
            return Err(Error::RecordLength {
                expected: self.num_measurements,
                got: record.len(),
            });
        }
        let mut state = self.encoded_state(init).clone();
        let mut bits = record.bits.iter();
        let mut probability = 1.0;
        for step in &self.bulk {
            match *step {
                Step::Unitary(t) => apply_layer(&mut state, &self.layers[t]),
                Step::Measure(q) => {
                    let outcome = *bits.next().expect("length checked");
                    match state.project(q, outcome, true) {
                        Ok(w) => probability *= w,
                        Err(Error::DegenerateBranch { .. }) => return Ok(0.0),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(probability)
    }

    /// `M` independent runs; run `j` draws from substream `j` of `seed`.
    /// With `replay`, each record is paired with its probability under that
    /// initial state.
    pub fn batch_sample(
        &self,
        init: InitialState,
        runs: usize,
        seed: u64,
        replay: Option<InitialState>,
    ) -> Result<Vec<SampledRecord>> {
        if runs == 0 {
            return Err(Error::InvalidInput("batch needs at least one run".into()));
        }
        (0..runs as u64)
            .into_par_iter()
            .map(|j| {
                let (record, own) = self.sample_run(init, seed, j);
                let replay_probability = match replay {
                    None => None,
                    Some(other) if other == init => Some(own),
                    Some(other) => Some(self.replay_probability(other, &record)?),
                };
                Ok(SampledRecord {
                    record,
                    replay_probability,
                })
            })
            .collect()
    }

    /// Probabilities of all `2^N` records, indexed by
    /// [`MeasurementRecord::index`]. Branches are explored depth-first so
    /// records sharing a prefix share its simulation.
    pub fn enumerate_probabilities(&self, init: InitialState) -> Result<Vec<f64>> {
        if self.num_measurements > MAX_ENUMERATION_BITS {
            return Err(Error::EnumerationInfeasible(self.num_measurements));
        }
        let mut out = vec![0.0; 1usize << self.num_measurements];
        self.descend(0, self.encoded_state(init).clone(), 1.0, 0, &mut out);
        Ok(out)
    }

    fn descend(&self, from: usize, mut state: StateVector, probability: f64, prefix: usize, out: &mut [f64]) {
        for (offset, step) in self.bulk[from..].iter().enumerate() {
            match *step {
                Step::Unitary(t) => apply_layer(&mut state, &self.layers[t]),
                Step::Measure(q) => {
                    let next = from + offset + 1;
                    for outcome in [0u8, 1] {
                        let mut branch = state.clone();
                        if let Ok(w) = branch.project(q, outcome, true) {
                            self.descend(next, branch, probability * w, (prefix << 1) | outcome as usize, out);
                        }
                    }
                    return;
                }
            }
        }
        out[prefix] = probability;
    }

    /// Half-chain entropy after every layer (unitaries, then measurements) of
    /// one Born-rule trajectory drawn from `seed`.
    pub fn entropy_trace(&self, init: InitialState, seed: u64) -> EntropyTrace {
        let half = self.num_qubits / 2;
        let mut rng = stream_rng(seed, Stream::Run, 0);
        let mut state = init.prepare(self.num_qubits);
        let mut series = Vec::with_capacity(self.layers.len());
        let entropy = |s: &StateVector| s.entanglement_entropy(half).expect("valid half cut");
        for t in 0..self.t_encoding {
            apply_layer(&mut state, &self.layers[t]);
            series.push((t + 1, entropy(&state)));
        }
        let mut steps = self.bulk.iter().peekable();
        while let Some(step) = steps.next() {
            match *step {
                Step::Unitary(t) => apply_layer(&mut state, &self.layers[t]),
                Step::Measure(q) => {
                    let p1 = state.weight_of_one(q).expect("qubit in range");
                    let outcome = u8::from(rng.random::<f64>() < p1);
                    state
                        .project(q, outcome, true)
                        .expect("sampled branch has positive weight");
                }
            }
            if !matches!(steps.peek(), Some(Step::Measure(_))) {
                let t = series.len() + 1;
                series.push((t, entropy(&state)));
            }
        }
        EntropyTrace {
            series,
            circuits: 1,
            smoothed: false,
        }
    }
}

fn apply_layer(state: &mut StateVector, layer: &[(usize, Matrix4)]) {
    for (first, m) in layer {
        state.apply_pair(m, *first).expect("pair within chain");
    }
}

pub fn run_sampling(circuit: &CircuitDescriptor, init: InitialState, seed: u64) -> MeasurementRecord {
    CompiledCircuit::new(circuit).sample_run(init, seed, 0).0
}

pub fn replay_probability(
    circuit: &CircuitDescriptor,
    init: InitialState,
    record: &MeasurementRecord,
) -> Result<f64> {
    CompiledCircuit::new(circuit).replay_probability(init, record)
}

pub fn batch_sample(
    circuit: &CircuitDescriptor,
    init: InitialState,
    runs: usize,
    seed: u64,
    replay: Option<InitialState>,
) -> Result<Vec<SampledRecord>> {
    CompiledCircuit::new(circuit).batch_sample(init, runs, seed, replay)
}

pub fn entropy_trace(circuit: &CircuitDescriptor, init: InitialState, seed: u64) -> EntropyTrace {
    CompiledCircuit::new(circuit).entropy_trace(init, seed)
}
