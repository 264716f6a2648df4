//! Versioned TOML experiment configuration. Every field has a default, so an
//! empty file containing only `version = 1` reproduces the published setup.

use std::path::{Path, PathBuf};

use mipt_xeb::circuit::{CircuitDescriptor, MAX_QUBITS};
use mipt_xeb::rnn::{SampleCount, TrainingConfig};
use mipt_xeb::trajectory::InitialState;
use mipt_xeb::xeb::EstimatorKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const CONFIG_VERSION: u32 = 1;

/// Dataset sizes of the published training tables, smallest first.
pub const DEFAULT_M_GRID: [usize; 14] =
    [100, 500, 1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 10000, 12000, 15000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub delta_m: DeltaMConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            sweep: SweepConfig::default(),
            convergence: ConvergenceConfig::default(),
            delta_m: DeltaMConfig::default(),
            entropy: EntropyConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub qubits: Vec<usize>,
    pub rates: Vec<f64>,
    pub circuits: usize,
    pub runs: usize,
    #[serde(with = "estimator_tag")]
    pub estimator: EstimatorKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            qubits: vec![8, 10, 12, 16],
            rates: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
            circuits: 100,
            runs: 5000,
            estimator: EstimatorKind::Histogram,
        }
    }
}

/// Picks one circuit: from a file, or the first seed at or after
/// `circuit_seed` whose site count satisfies the constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitChoice {
    pub circuit_file: Option<PathBuf>,
    pub circuit_seed: u64,
    pub measurements: Option<usize>,
    pub max_measurements: Option<usize>,
}

const SEED_SCAN_LIMIT: u64 = 1_000_000;

impl CircuitChoice {
    pub fn resolve(&self, qubits: usize, rate: f64) -> Result<CircuitDescriptor, Failure> {
        if let Some(path) = &self.circuit_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            return CircuitDescriptor::deserialize(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())));
        }
        check_qubits(qubits)?;
        for seed in self.circuit_seed..self.circuit_seed.saturating_add(SEED_SCAN_LIMIT) {
            let c = CircuitDescriptor::sample(qubits, rate, seed).map_err(|e| Failure::Config(e.to_string()))?;
            let n = c.num_measurements();
            if self.measurements.is_none_or(|m| m == n) && self.max_measurements.is_none_or(|m| n <= m) {
                return Ok(c);
            }
        }
        Err(Failure::Config(format!(
            "no L={qubits}, p={rate} circuit with the requested site count in {SEED_SCAN_LIMIT} seeds"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceChoice {
    Exact,
    Plateau,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub qubits: usize,
    pub rate: f64,
    pub circuit: CircuitChoice,
    pub grid: Vec<usize>,
    pub reference: ReferenceChoice,
    /// Run count of the histogram estimate used as a plateau reference.
    pub reference_runs: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            qubits: 8,
            rate: 0.1,
            circuit: CircuitChoice::default(),
            grid: DEFAULT_M_GRID.to_vec(),
            reference: ReferenceChoice::Exact,
            reference_runs: 600_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingTable {
    /// L = 8, p = 0.1 hyperparameters.
    P01,
    /// L = 8, p = 0.2 hyperparameters.
    P02,
}

impl TrainingTable {
    pub fn row(self, m: usize) -> Option<TrainingConfig> {
        match self {
            TrainingTable::P01 => TrainingConfig::table_p01(m),
            TrainingTable::P02 => TrainingConfig::table_p02(m),
        }
    }
}

/// Per-`M` replacement of individual table entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingOverride {
    pub m: usize,
    pub batch_size: Option<usize>,
    pub validation_size: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub n_sample: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeltaMConfig {
    pub qubits: usize,
    pub rate: f64,
    pub circuit: CircuitChoice,
    pub grid: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub table: TrainingTable,
    /// Fraction of the published epoch counts actually trained.
    pub epoch_scale: f64,
    pub reference: ReferenceChoice,
    pub reference_runs: usize,
    pub overrides: Vec<TrainingOverride>,
}

impl Default for DeltaMConfig {
    fn default() -> Self {
        Self {
            qubits: 8,
            rate: 0.1,
            circuit: CircuitChoice::default(),
            grid: DEFAULT_M_GRID.to_vec(),
            epsilons: vec![0.1, 0.07, 0.05, 0.03, 0.02, 0.015, 0.01, 0.007, 0.005, 0.003, 0.002, 0.001],
            table: TrainingTable::P01,
            epoch_scale: 1.0,
            reference: ReferenceChoice::Exact,
            reference_runs: 600_000,
            overrides: Vec::new(),
        }
    }
}

impl DeltaMConfig {
    pub fn training_config(&self, m: usize, seed: u64) -> Result<TrainingConfig, Failure> {
        let mut cfg = self
            .table
            .row(m)
            .ok_or_else(|| Failure::Config(format!("no {:?} training configuration for M={m}", self.table)))?;
        cfg.epochs = scale_epochs(cfg.epochs, self.epoch_scale);
        if let Some(o) = self.overrides.iter().find(|o| o.m == m) {
            apply_override(&mut cfg, o)?;
        }
        cfg.seed = seed;
        cfg.validate().map_err(|e| Failure::Config(format!("M={m}: {e}")))?;
        Ok(cfg)
    }
}

pub fn scale_epochs(epochs: usize, scale: f64) -> usize {
    ((epochs as f64 * scale).ceil() as usize).max(1)
}

fn apply_override(cfg: &mut TrainingConfig, o: &TrainingOverride) -> Result<(), Failure> {
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.validation_size {
        cfg.validation_size = v;
    }
    if let Some(v) = o.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = o.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = &o.n_sample {
        cfg.n_sample = v.parse::<SampleCount>().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    pub qubits: Vec<usize>,
    pub rates: Vec<f64>,
    pub circuits: usize,
    #[serde(with = "initial_tag")]
    pub initial: InitialState,
    /// Average non-overlapping odd/even layer pairs.
    pub smooth: bool,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            qubits: vec![8, 12],
            rates: vec![0.1, 0.2],
            circuits: 100,
            initial: InitialState::AllPlus,
            smooth: false,
        }
    }
}

/// Hyperparameters for the stand-alone `train` command: a table row picked
/// by the dataset size, with optional replacements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub table: TrainingTable,
    pub epoch_scale: f64,
    pub batch_size: Option<usize>,
    pub validation_size: Option<usize>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub n_sample: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            table: TrainingTable::P01,
            epoch_scale: 1.0,
            batch_size: None,
            validation_size: None,
            hidden: None,
            dropout: None,
            epochs: None,
            n_sample: None,
        }
    }
}

impl TrainConfig {
    /// Table row for `m` records with the configured replacements.
    pub fn training_config(&self, m: usize, seed: u64) -> Result<TrainingConfig, Failure> {
        let mut cfg = self
            .table
            .row(m)
            .ok_or_else(|| Failure::Config(format!("no {:?} training configuration for M={m}", self.table)))?;
        cfg.epochs = scale_epochs(cfg.epochs, self.epoch_scale);
        apply_override(
            &mut cfg,
            &TrainingOverride {
                m,
                batch_size: self.batch_size,
                validation_size: self.validation_size,
                hidden: self.hidden,
                dropout: self.dropout,
                epochs: self.epochs,
                n_sample: self.n_sample.clone(),
            },
        )?;
        cfg.seed = seed;
        cfg.validate().map_err(|e| Failure::Config(format!("M={m}: {e}")))?;
        Ok(cfg)
    }
}

fn check_qubits(l: usize) -> Result<(), Failure> {
    if !(2..=MAX_QUBITS).contains(&l) || !l.is_multiple_of(2) {
        return Err(Failure::Config(format!("chain length {l} must be even and in 2..={MAX_QUBITS}")));
    }
    Ok(())
}

fn check_rates(rates: &[f64]) -> Result<(), Failure> {
    match rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Failure::Config(format!("measurement rate {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

fn check_grid(grid: &[usize]) -> Result<(), Failure> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Config("M grid must be non-empty, positive and strictly increasing".into()));
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Config = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Failure::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML of the fully resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Checks every section, so a bad value fails before any command runs.
    pub fn validate(&self) -> Result<(), Failure> {
        self.validate_sweep()?;
        self.validate_convergence()?;
        self.validate_delta_m()?;
        self.validate_entropy()
    }

    fn validate_sweep(&self) -> Result<(), Failure> {
        let s = &self.sweep;
        s.qubits.iter().try_for_each(|&l| check_qubits(l))?;
        check_rates(&s.rates)?;
        if s.qubits.is_empty() || s.rates.is_empty() || s.circuits < 2 || s.runs == 0 {
            return Err(Failure::Config("sweep needs qubits, rates, at least 2 circuits and runs > 0".into()));
        }
        Ok(())
    }

    fn validate_convergence(&self) -> Result<(), Failure> {
        check_rates(&[self.convergence.rate])?;
        check_grid(&self.convergence.grid)
    }

    fn validate_delta_m(&self) -> Result<(), Failure> {
        let d = &self.delta_m;
        check_rates(&[d.rate])?;
        check_grid(&d.grid)?;
        if !(d.epoch_scale > 0.0 && d.epoch_scale <= 1.0) {
            return Err(Failure::Config(format!("epoch_scale {} outside (0, 1]", d.epoch_scale)));
        }
        if d.epsilons.is_empty() || d.epsilons.iter().any(|e| !(*e > 0.0)) {
            return Err(Failure::Config("epsilons must be positive".into()));
        }
        for &m in &d.grid {
            d.training_config(m, 0)?;
        }
        Ok(())
    }

    fn validate_entropy(&self) -> Result<(), Failure> {
        let e = &self.entropy;
        e.qubits.iter().try_for_each(|&l| check_qubits(l))?;
        check_rates(&e.rates)?;
        if e.qubits.is_empty() || e.rates.is_empty() || e.circuits == 0 {
            return Err(Failure::Config("entropy needs qubits, rates and circuits > 0".into()));
        }
        Ok(())
    }
}

mod estimator_tag {
    use mipt_xeb::xeb::EstimatorKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &EstimatorKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(e.tag())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EstimatorKind, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod initial_tag {
    use mipt_xeb::trajectory::InitialState;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(i: &InitialState, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(i.tag())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<InitialState, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_published_defaults() {
        let cfg = Config::parse("version = 1\n").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!((cfg.sweep.circuits, cfg.sweep.runs), (100, 5000));
        assert_eq!(cfg.entropy.circuits, 100);
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut cfg = Config::default();
        cfg.delta_m.overrides.push(TrainingOverride { m: 500, hidden: Some(4), ..Default::default() });
        cfg.delta_m.circuit.measurements = Some(12);
        let back = Config::parse(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(Config::parse("version = 2\n"), Err(Failure::Config(_))));
        assert!(Config::parse("").is_err());
        assert!(Config::parse("version = 1\nbogus = 3\n").is_err());
        assert!(Config::parse("version = 1\n[sweep]\nqubits = [26]\n").is_err());
        assert!(Config::parse("version = 1\n[delta_m]\ngrid = [123]\n").is_err());
        assert!(Config::parse("version = 1\n[entropy]\nrates = [1.5]\n").is_err());
    }

    #[test]
    fn epoch_scaling_and_overrides() {
        let mut d = DeltaMConfig { epoch_scale: 0.1, ..Default::default() };
        assert_eq!(d.training_config(15000, 3).unwrap().epochs, 6000);
        d.overrides.push(TrainingOverride { m: 500, epochs: Some(7), n_sample: Some("100".into()), ..Default::default() });
        let c = d.training_config(500, 3).unwrap();
        assert_eq!((c.epochs, c.n_sample, c.seed), (7, SampleCount::Finite(100), 3));
    }
}
