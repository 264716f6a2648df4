//! Single-purpose commands: train, chi, gradcheck, circuit, sample,
//! enumerate, model.

use std::path::PathBuf;

use clap::Args;
use mipt_xeb::dataset::RecordSet;
use mipt_xeb::report::{self, TrainingRow};
use mipt_xeb::rng::{derive_seed, stream_rng, Stream};
use mipt_xeb::rnn::checkpoint::Checkpoint;
use mipt_xeb::rnn::{chi_rnn, gradient_check, train as train_model, GruParameters, RnnModel, SampleCount};
use mipt_xeb::trajectory::{CompiledCircuit, InitialState, MeasurementRecord, MAX_ENUMERATION_BITS};
use mipt_xeb::xeb::{self, EstimatorKind, Provenance};
use rand::Rng;
use serde::Serialize;

use crate::experiments::sample_pair;
use crate::{parse_initial, CircuitArgs, Ctx, Failure};

fn read(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_checkpoint(path: &PathBuf) -> Result<Checkpoint, Failure> {
    Checkpoint::deserialize(&read(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn csv<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, Failure> {
    Ok(report::to_csv_string(rows)?.into_bytes())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Record file written by `sample`.
    #[arg(long)]
    records: PathBuf,
    /// Dataset size; selects the hyperparameter row. Defaults to the file's run count.
    #[arg(long)]
    m: Option<usize>,
}

pub fn train(ctx: &Ctx, a: &TrainArgs) -> Result<PathBuf, Failure> {
    let set = RecordSet::deserialize(&read(&a.records)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", a.records.display())))?;
    let m = a.m.unwrap_or(set.runs());
    let cfg = ctx.config.train.training_config(m, ctx.seed)?;
    let mut out = ctx.output("train")?;
    let records: Vec<MeasurementRecord> = set.records.into_iter().map(|r| r.record).collect();
    let outcome = train_model(&records, &cfg)?;
    out.lap("training");
    let rows: Vec<TrainingRow> = outcome
        .report
        .train
        .iter()
        .zip(&outcome.report.validation)
        .enumerate()
        .map(|(epoch, (&t, &v))| TrainingRow { epoch, train_nll: t, val_nll: v })
        .collect();
    out.write("training.csv", &csv(&rows)?)?;
    let ck = Checkpoint { model: outcome.model, seed: cfg.seed, learning_rate: cfg.learning_rate };
    out.write("model.gru", ck.serialize().as_bytes())?;
    out.value("best_epoch", outcome.report.best_epoch);
    out.value("circuit_hash", set.circuit_hash);
    out.finish()
}

#[derive(Args, Debug)]
pub struct ChiArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Runs per side for the histogram estimator.
    #[arg(long, default_value_t = 5000)]
    runs: usize,
    #[arg(long, default_value = "all-plus")]
    rho: String,
    #[arg(long, default_value = "all-zero")]
    sigma: String,
    /// ρ-model checkpoint for the RNN estimator.
    #[arg(long)]
    rho_model: Option<PathBuf>,
    /// σ-model checkpoint for the RNN estimator.
    #[arg(long)]
    sigma_model: Option<PathBuf>,
    /// `exact` or a sample count, for the RNN estimator.
    #[arg(long, default_value = "exact")]
    n_sample: String,
}

#[derive(Serialize)]
struct ChiRow {
    circuit_hash: String,
    estimator: String,
    rho: String,
    sigma: String,
    #[serde(rename = "M")]
    runs: String,
    chi: f64,
    numerator: f64,
    denominator: f64,
}

pub fn chi(ctx: &Ctx, a: &ChiArgs) -> Result<PathBuf, Failure> {
    let estimator = ctx.estimator.unwrap_or(EstimatorKind::Exact);
    let circuit = a.circuit.resolve()?;
    let rho = parse_initial(&a.rho)?;
    let sigma = parse_initial(&a.sigma)?;
    let mut out = ctx.output("chi")?;
    let hash = out.write_circuit(&circuit)?;
    let estimate = match estimator {
        EstimatorKind::Exact => xeb::chi_exact_between(&circuit, rho, sigma)?,
        EstimatorKind::Histogram => {
            if a.runs == 0 {
                return Err(Failure::Config("--runs must be positive".into()));
            }
            let compiled = CompiledCircuit::new(&circuit);
            if (rho, sigma) == (InitialState::AllPlus, InitialState::AllZero) {
                let (r, s) = sample_pair(
                    &compiled,
                    a.runs,
                    derive_seed(ctx.seed, &["chi", "rho"], 0),
                    derive_seed(ctx.seed, &["chi", "sigma"], 0),
                )?;
                xeb::chi_histogram(&circuit, &r, &s)?
            } else {
                let r = compiled.batch_sample(rho, a.runs, derive_seed(ctx.seed, &["chi", "rho"], 0), Some(sigma))?;
                let s = compiled.batch_sample(sigma, a.runs, derive_seed(ctx.seed, &["chi", "sigma"], 0), Some(sigma))?;
                xeb::chi_histogram(&circuit, &r, &s)?
            }
        }
        EstimatorKind::Rnn => {
            let (Some(rp), Some(sp)) = (&a.rho_model, &a.sigma_model) else {
                return Err(Failure::Config("the rnn estimator needs --rho-model and --sigma-model".into()));
            };
            let n_sample: SampleCount = a.n_sample.parse().map_err(|e: mipt_xeb::Error| Failure::Config(e.to_string()))?;
            let (r, s) = (load_checkpoint(rp)?, load_checkpoint(sp)?);
            chi_rnn(&r.model, &s.model, n_sample, derive_seed(ctx.seed, &["chi", "rnn"], 0), Provenance::of(&circuit))?
        }
    };
    let row = ChiRow {
        circuit_hash: hash,
        estimator: estimator.to_string(),
        rho: rho.to_string(),
        sigma: sigma.to_string(),
        runs: estimate.runs.map_or("exact".to_string(), |r| r.to_string()),
        chi: estimate.chi,
        numerator: estimate.numerator,
        denominator: estimate.denominator,
    };
    out.write("chi.csv", &csv(&[row])?)?;
    out.finish()
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    /// Record length N.
    #[arg(long, default_value_t = 4)]
    length: usize,
    /// Records in the batch.
    #[arg(long, default_value_t = 8)]
    records: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Serialize)]
struct GradcheckRow {
    hidden: usize,
    length: usize,
    records: usize,
    dropout: f64,
    parameters: usize,
    max_rel_error: f64,
    max_abs_error: f64,
    pass: bool,
}

pub fn gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> Result<PathBuf, Failure> {
    if a.hidden == 0 || a.length == 0 || a.records == 0 || !(0.0..1.0).contains(&a.dropout) || !(a.fd_step > 0.0) {
        return Err(Failure::Config("gradcheck needs positive sizes, a step > 0 and dropout in [0, 1)".into()));
    }
    let mut out = ctx.output("gradcheck")?;
    let params = GruParameters::uniform(a.hidden, ctx.seed);
    let mut rng = stream_rng(ctx.seed, Stream::Run, 0);
    let records: Vec<MeasurementRecord> = (0..a.records)
        .map(|_| MeasurementRecord::new((0..a.length).map(|_| rng.random_range(0..2u8)).collect()).expect("bits"))
        .collect();
    let dropout = (a.dropout > 0.0).then_some((a.dropout, ctx.seed));
    let check = gradient_check(&params, &records, a.fd_step, dropout);
    let pass = check.max_relative_error < a.tolerance;
    let row = GradcheckRow {
        hidden: a.hidden,
        length: a.length,
        records: a.records,
        dropout: a.dropout,
        parameters: check.parameters,
        max_rel_error: check.max_relative_error,
        max_abs_error: check.max_absolute_error,
        pass,
    };
    out.write("gradcheck.csv", &csv(&[row])?)?;
    let dir = out.finish()?;
    if !pass {
        return Err(Failure::Runtime(format!(
            "max relative error {} exceeds {}",
            check.max_relative_error, a.tolerance
        )));
    }
    Ok(dir)
}

pub fn circuit(ctx: &Ctx, a: &CircuitArgs) -> Result<PathBuf, Failure> {
    let circuit = a.resolve()?;
    let mut out = ctx.output("circuit")?;
    let hash = out.write_circuit(&circuit)?;
    out.write("circuit.txt", circuit.serialize().as_bytes())?;
    out.value("circuit_hash", hash);
    out.value("measurements", circuit.num_measurements());
    out.finish()
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long, default_value = "all-plus")]
    initial: String,
    #[arg(long, default_value_t = 5000)]
    runs: usize,
    /// Also record each run's probability under this initial state.
    #[arg(long)]
    replay: Option<String>,
}

pub fn sample(ctx: &Ctx, a: &SampleArgs) -> Result<PathBuf, Failure> {
    let circuit = CircuitArgs { circuit: Some(a.circuit.clone()), ..default_circuit_args() }.resolve()?;
    let initial = parse_initial(&a.initial)?;
    let replay = a.replay.as_deref().map(parse_initial).transpose()?;
    if a.runs == 0 {
        return Err(Failure::Config("--runs must be positive".into()));
    }
    let mut out = ctx.output("sample")?;
    let records = CompiledCircuit::new(&circuit).batch_sample(initial, a.runs, ctx.seed, replay)?;
    let set = RecordSet {
        circuit_hash: out.write_circuit(&circuit)?,
        initial,
        seed: ctx.seed,
        measurements: circuit.num_measurements(),
        replay,
        records,
    };
    out.write("records.txt", set.serialize().as_bytes())?;
    out.finish()
}

fn default_circuit_args() -> CircuitArgs {
    CircuitArgs { circuit: None, qubits: 8, rate: 0.1, circuit_seed: 0, measurements: None, max_measurements: None }
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
}

#[derive(Serialize)]
struct EnumerateRow {
    index: u64,
    record: String,
    p_all_plus: f64,
    p_all_zero: f64,
}

/// Replays each of the `2^N` records separately (no prefix sharing).
pub fn enumerate(ctx: &Ctx, a: &EnumerateArgs) -> Result<PathBuf, Failure> {
    let circuit = a.circuit.resolve()?;
    let n = circuit.num_measurements();
    if n > MAX_ENUMERATION_BITS {
        return Err(Failure::Config(format!("{n} measurement sites are too many to enumerate")));
    }
    let mut out = ctx.output("enumerate")?;
    out.write_circuit(&circuit)?;
    let compiled = CompiledCircuit::new(&circuit);
    let rows = (0..1u64 << n)
        .map(|i| {
            let record = MeasurementRecord::from_index(i, n);
            Ok(EnumerateRow {
                index: i,
                p_all_plus: compiled.replay_probability(InitialState::AllPlus, &record)?,
                p_all_zero: compiled.replay_probability(InitialState::AllZero, &record)?,
                record: if n == 0 { "-".into() } else { record.to_string() },
            })
        })
        .collect::<mipt_xeb::Result<Vec<_>>>()?;
    out.write("probabilities.csv", &csv(&rows)?)?;
    out.finish()
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Checkpoint to inspect; without it a random model is drawn.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 6)]
    length: usize,
    /// Ancestral samples tallied per record.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Serialize)]
struct ModelRow {
    index: u64,
    record: String,
    probability: f64,
    sampled: u64,
}

pub fn model(ctx: &Ctx, a: &ModelArgs) -> Result<PathBuf, Failure> {
    let model = match &a.checkpoint {
        Some(p) => load_checkpoint(p)?.model,
        None => {
            if a.hidden == 0 {
                return Err(Failure::Config("--hidden must be positive".into()));
            }
            RnnModel::new(GruParameters::uniform(a.hidden, ctx.seed), 0.0, a.length)?
        }
    };
    let n = model.record_len;
    if n == 0 || n > MAX_ENUMERATION_BITS {
        return Err(Failure::Config(format!("record length {n} cannot be enumerated")));
    }
    let mut out = ctx.output("model")?;
    let probs = model.enumerate_probabilities()?;
    let mut counts = vec![0u64; probs.len()];
    for r in model.sample(a.samples, ctx.seed) {
        counts[r.index() as usize] += 1;
    }
    let rows: Vec<ModelRow> = probs
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (&p, &c))| ModelRow {
            index: i as u64,
            record: MeasurementRecord::from_index(i as u64, n).to_string(),
            probability: p,
            sampled: c,
        })
        .collect();
    out.write("model.csv", &csv(&rows)?)?;
    out.value("total_probability", probs.iter().sum::<f64>());
    if a.checkpoint.is_none() {
        out.write("model.gru", Checkpoint { model, seed: ctx.seed, learning_rate: 0.0 }.serialize().as_bytes())?;
    }
    out.finish()
}
