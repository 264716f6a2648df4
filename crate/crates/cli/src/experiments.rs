//! The config-driven experiments: sweep, convergence, delta-m, entropy.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mipt_xeb::dataset::RecordSet;
use mipt_xeb::report::{
    self, ConvergenceRow, DeltaMRow, EntropyRow, Na, SweepRow, SweepSummaryRow, TrainingRow,
};
use mipt_xeb::rng::derive_seed;
use mipt_xeb::rnn::checkpoint::Checkpoint;
use mipt_xeb::rnn::{chi_rnn, train, TrainingOutcome};
use mipt_xeb::trajectory::{self, average_traces, CompiledCircuit, InitialState, SampledRecord};
use mipt_xeb::xeb::{
    self, accuracy_curve, chi_circuit_average, delta_m_report, AccuracyCurve, EstimatorKind, Provenance,
    Reference, ReferenceKind, XebEstimate,
};
use mipt_xeb::CircuitDescriptor;
use rayon::prelude::*;

use crate::config::ReferenceChoice;
use crate::output::Output;
use crate::{check_partial, Ctx, Failure};

const RHO: InitialState = InitialState::AllPlus;
const SIGMA: InitialState = InitialState::AllZero;

fn csv<R: serde::Serialize>(rows: &[R]) -> Result<Vec<u8>, Failure> {
    Ok(report::to_csv_string(rows)?.into_bytes())
}

fn rate_label(p: f64) -> String {
    format!("{p}")
}

/// ρ-records with their σ-replay probability and σ-records with their own.
pub fn sample_pair(
    compiled: &CompiledCircuit,
    runs: usize,
    rho_seed: u64,
    sigma_seed: u64,
) -> mipt_xeb::Result<(Vec<SampledRecord>, Vec<SampledRecord>)> {
    Ok((
        compiled.batch_sample(RHO, runs, rho_seed, Some(SIGMA))?,
        compiled.batch_sample(SIGMA, runs, sigma_seed, Some(SIGMA))?,
    ))
}

pub fn record_set(circuit: &CircuitDescriptor, init: InitialState, seed: u64, records: Vec<SampledRecord>) -> RecordSet {
    RecordSet {
        circuit_hash: circuit.content_hash(),
        initial: init,
        seed,
        measurements: circuit.num_measurements(),
        replay: Some(SIGMA),
        records,
    }
}

fn estimator_for(ctx: &Ctx, default: EstimatorKind, allowed: &[EstimatorKind]) -> Result<EstimatorKind, Failure> {
    let e = ctx.estimator.unwrap_or(default);
    if !allowed.contains(&e) {
        return Err(Failure::Config(format!("estimator `{e}` is not available for this command")));
    }
    Ok(e)
}

pub fn sweep(ctx: &Ctx) -> Result<PathBuf, Failure> {
    let s = &ctx.config.sweep;
    let estimator = estimator_for(ctx, s.estimator, &[EstimatorKind::Histogram, EstimatorKind::Exact])?;
    let mut out = ctx.output("sweep")?;

    let jobs: Vec<(usize, f64, usize)> = s
        .qubits
        .iter()
        .flat_map(|&l| s.rates.iter().flat_map(move |&p| (0..s.circuits).map(move |j| (l, p, j))))
        .collect();
    let results: Vec<(CircuitDescriptor, mipt_xeb::Result<XebEstimate>)> = jobs
        .par_iter()
        .map(|&(l, p, j)| {
            let labels = [l.to_string(), rate_label(p)];
            let seed_for = |role: &str| derive_seed(ctx.seed, &["sweep", role, &labels[0], &labels[1]], j as u64);
            let circuit = CircuitDescriptor::sample(l, p, seed_for("circuit")).expect("validated sizes");
            let estimate = match estimator {
                EstimatorKind::Exact => xeb::chi_exact(&circuit),
                _ => {
                    let compiled = CompiledCircuit::new(&circuit);
                    sample_pair(&compiled, s.runs, seed_for("rho"), seed_for("sigma"))
                        .and_then(|(rho, sigma)| xeb::chi_histogram(&circuit, &rho, &sigma))
                }
            };
            (circuit, estimate)
        })
        .collect();
    out.lap("simulation");

    let runs_label = match estimator {
        EstimatorKind::Exact => "exact".to_string(),
        _ => s.runs.to_string(),
    };
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut groups: BTreeMap<(usize, usize), (Vec<XebEstimate>, usize)> = BTreeMap::new();
    for (&(l, p, j), (circuit, estimate)) in jobs.iter().zip(&results) {
        let hash = out.write_circuit(circuit)?;
        let ip = s.rates.iter().position(|&r| r == p).expect("rate from list");
        let group = groups.entry((l, ip)).or_default();
        match estimate {
            Ok(e) => {
                rows.push(SweepRow {
                    num_qubits: l,
                    p,
                    circuit_index: j,
                    circuit_hash: hash,
                    chi: e.chi,
                    estimator: estimator.to_string(),
                    runs: runs_label.clone(),
                });
                group.0.push(e.clone());
            }
            Err(err) => {
                out.failure(format!("L={l} p={p} circuit {j} ({hash}): {err}"));
                group.1 += 1;
            }
        }
    }
    for ((l, ip), (estimates, failed)) in &groups {
        let p = s.rates[*ip];
        let (mean, std) = match chi_circuit_average(estimates) {
            Ok(v) => v,
            Err(e) => {
                out.failure(format!("L={l} p={p}: {e}"));
                (f64::NAN, f64::NAN)
            }
        };
        summary.push(SweepSummaryRow {
            num_qubits: *l,
            p,
            chi_mean: mean,
            chi_std: std,
            circuits: estimates.len(),
            failed: *failed,
            runs: runs_label.clone(),
        });
    }
    out.write("sweep.csv", &csv(&rows)?)?;
    out.write("sweep_summary.csv", &csv(&summary)?)?;
    let failed = jobs.len() - rows.len();
    out.value("failed_circuits", failed);
    out.lap("output");
    let dir = out.finish()?;
    check_partial(failed, jobs.len(), "circuits")?;
    Ok(dir)
}

/// Reference `χ` for accuracy curves.
fn reference(
    ctx: &Ctx,
    circuit: &CircuitDescriptor,
    compiled: &CompiledCircuit,
    choice: ReferenceChoice,
    runs: usize,
    command: &str,
) -> Result<Reference, Failure> {
    match choice {
        ReferenceChoice::Exact => Ok(Reference {
            chi: xeb::chi_exact(circuit)?.chi,
            kind: ReferenceKind::ExactEnumeration,
        }),
        ReferenceChoice::Plateau => {
            let (rho, sigma) = sample_pair(
                compiled,
                runs,
                derive_seed(ctx.seed, &[command, "reference-rho"], 0),
                derive_seed(ctx.seed, &[command, "reference-sigma"], 0),
            )?;
            Ok(Reference {
                chi: xeb::chi_histogram(circuit, &rho, &sigma)?.chi,
                kind: ReferenceKind::LargeMPlateau { runs },
            })
        }
    }
}

/// Histogram estimates on nested prefixes of one pair of datasets.
fn histogram_curve(
    circuit: &CircuitDescriptor,
    rho: &[SampledRecord],
    sigma: &[SampledRecord],
    grid: &[usize],
    reference: Reference,
) -> Result<AccuracyCurve, Failure> {
    let estimates = grid
        .iter()
        .map(|&m| Ok((m, xeb::chi_histogram(circuit, &rho[..m], &sigma[..m])?)))
        .collect::<mipt_xeb::Result<BTreeMap<_, _>>>()?;
    Ok(accuracy_curve(reference, grid, &estimates, EstimatorKind::Histogram)?)
}

fn curve_rows(curve: &AccuracyCurve, hash: &str) -> Vec<ConvergenceRow> {
    curve
        .points
        .iter()
        .map(|pt| ConvergenceRow {
            runs: pt.runs,
            chi: pt.chi,
            epsilon: pt.epsilon,
            estimator: curve.estimator.to_string(),
            reference: curve.reference.chi,
            ref_kind: curve.reference.kind.tag(),
            circuit_hash: hash.to_string(),
        })
        .collect()
}

/// Samples, persists and returns the shared ρ/σ datasets of one circuit.
fn datasets(
    ctx: &Ctx,
    out: &mut Output,
    circuit: &CircuitDescriptor,
    compiled: &CompiledCircuit,
    runs: usize,
    command: &str,
) -> Result<(Vec<SampledRecord>, Vec<SampledRecord>), Failure> {
    let rho_seed = derive_seed(ctx.seed, &[command, "rho"], 0);
    let sigma_seed = derive_seed(ctx.seed, &[command, "sigma"], 0);
    let (rho, sigma) = sample_pair(compiled, runs, rho_seed, sigma_seed)?;
    out.write("records/rho.records", record_set(circuit, RHO, rho_seed, rho.clone()).serialize().as_bytes())?;
    out.write("records/sigma.records", record_set(circuit, SIGMA, sigma_seed, sigma.clone()).serialize().as_bytes())?;
    Ok((rho, sigma))
}

pub fn convergence(ctx: &Ctx) -> Result<PathBuf, Failure> {
    estimator_for(ctx, EstimatorKind::Histogram, &[EstimatorKind::Histogram])?;
    let c = &ctx.config.convergence;
    let circuit = c.circuit.resolve(c.qubits, c.rate)?;
    let compiled = CompiledCircuit::new(&circuit);
    let mut out = ctx.output("convergence")?;
    let hash = out.write_circuit(&circuit)?;
    let m_max = *c.grid.last().expect("validated grid");
    let (rho, sigma) = datasets(ctx, &mut out, &circuit, &compiled, m_max, "convergence")?;
    out.lap("sampling");
    let reference = reference(ctx, &circuit, &compiled, c.reference, c.reference_runs, "convergence")?;
    out.value("reference_chi", reference.chi);
    out.value("measurements", circuit.num_measurements());
    out.lap("reference");
    let curve = histogram_curve(&circuit, &rho, &sigma, &c.grid, reference)?;
    out.write("curve.csv", &csv(&curve_rows(&curve, &hash))?)?;
    out.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Rho,
    Sigma,
}

impl Side {
    fn tag(self) -> &'static str {
        match self {
            Side::Rho => "rho",
            Side::Sigma => "sigma",
        }
    }
}

pub fn delta_m(ctx: &Ctx) -> Result<PathBuf, Failure> {
    let d = &ctx.config.delta_m;
    let circuit = d.circuit.resolve(d.qubits, d.rate)?;
    let compiled = CompiledCircuit::new(&circuit);
    let mut out = ctx.output("delta-m")?;
    let hash = out.write_circuit(&circuit)?;
    let m_max = *d.grid.last().expect("validated grid");
    let (rho, sigma) = datasets(ctx, &mut out, &circuit, &compiled, m_max, "delta-m")?;
    out.lap("sampling");
    let reference = reference(ctx, &circuit, &compiled, d.reference, d.reference_runs, "delta-m")?;
    out.value("reference_chi", reference.chi);
    out.value("measurements", circuit.num_measurements());
    out.value("epoch_scale", d.epoch_scale);
    // Cutting the published epoch counts loosens how close the largest-M
    // RNN estimate is expected to land.
    let tolerance = if d.epoch_scale < 1.0 { 0.02 } else { 0.01 };
    out.value("rnn_tolerance", tolerance);
    if d.epoch_scale < 1.0 {
        out.note(format!(
            "training epochs scaled by {} of the published counts; RNN tolerance at the largest M relaxed to {tolerance}",
            d.epoch_scale
        ));
    }
    out.lap("reference");
    let histogram = histogram_curve(&circuit, &rho, &sigma, &d.grid, reference)?;
    out.lap("histogram");

    let tasks: Vec<(usize, Side)> = d.grid.iter().flat_map(|&m| [(m, Side::Rho), (m, Side::Sigma)]).collect();
    let configs = tasks
        .iter()
        .map(|&(m, side)| d.training_config(m, derive_seed(ctx.seed, &["delta-m", "train", side.tag()], m as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes: Vec<mipt_xeb::Result<TrainingOutcome>> = tasks
        .par_iter()
        .zip(&configs)
        .map(|(&(_, side), cfg)| {
            let source = if side == Side::Rho { &rho } else { &sigma };
            let records: Vec<_> = source[..cfg.dataset_size].iter().map(|r| r.record.clone()).collect();
            train(&records, cfg)
        })
        .collect();
    out.lap("training");

    let mut models = BTreeMap::new();
    for ((&(m, side), cfg), outcome) in tasks.iter().zip(&configs).zip(outcomes) {
        let name = format!("{}_M{m}", side.tag());
        match outcome {
            Ok(o) => {
                let rows: Vec<TrainingRow> = o
                    .report
                    .train
                    .iter()
                    .zip(&o.report.validation)
                    .enumerate()
                    .map(|(epoch, (&t, &v))| TrainingRow { epoch, train_nll: t, val_nll: v })
                    .collect();
                out.write(&format!("training/{name}.csv"), &csv(&rows)?)?;
                let ck = Checkpoint { model: o.model.clone(), seed: cfg.seed, learning_rate: cfg.learning_rate };
                out.write(&format!("checkpoints/{name}.gru"), ck.serialize().as_bytes())?;
                out.value(&format!("best_epoch_{name}"), o.report.best_epoch);
                models.insert((m, side), o.model);
            }
            Err(e) => out.failure(format!("training {name}: {e}")),
        }
    }

    let provenance = Provenance::of(&circuit);
    let mut rnn_estimates = BTreeMap::new();
    for (i, &m) in d.grid.iter().enumerate() {
        let (Some(r), Some(s)) = (models.get(&(m, Side::Rho)), models.get(&(m, Side::Sigma))) else {
            continue;
        };
        let n_sample = configs[2 * i].n_sample;
        match chi_rnn(r, s, n_sample, derive_seed(ctx.seed, &["delta-m", "chi"], m as u64), provenance.clone()) {
            Ok(e) => {
                rnn_estimates.insert(m, e);
            }
            Err(e) => out.failure(format!("RNN χ at M={m}: {e}")),
        }
    }
    out.lap("rnn-estimates");
    let rnn_grid: Vec<usize> = rnn_estimates.keys().copied().collect();
    let mut rows = curve_rows(&histogram, &hash);
    let report_rows: Vec<DeltaMRow> = if rnn_grid.is_empty() {
        out.failure("no RNN estimate available");
        Vec::new()
    } else {
        let rnn = accuracy_curve(reference, &rnn_grid, &rnn_estimates, EstimatorKind::Rnn)?;
        rows.extend(curve_rows(&rnn, &hash));
        delta_m_report(&histogram, &rnn, &d.epsilons)?
            .entries
            .iter()
            .map(|e| DeltaMRow {
                epsilon: e.epsilon,
                m_min_histogram: Na(e.m_min_histogram),
                m_min_rnn: Na(e.m_min_rnn),
                delta_m: Na(e.delta()),
            })
            .collect()
    };
    out.write("curves.csv", &csv(&rows)?)?;
    out.write("delta_m.csv", &csv(&report_rows)?)?;
    let failed = tasks.len() - models.len();
    let dir = out.finish()?;
    check_partial(failed, tasks.len(), "models")?;
    Ok(dir)
}

pub fn entropy(ctx: &Ctx) -> Result<PathBuf, Failure> {
    let e = &ctx.config.entropy;
    let mut out = ctx.output("entropy")?;
    let jobs: Vec<(usize, usize, usize)> = e
        .qubits
        .iter()
        .flat_map(|&l| (0..e.rates.len()).flat_map(move |ip| (0..e.circuits).map(move |j| (l, ip, j))))
        .collect();
    let traces: Vec<(CircuitDescriptor, trajectory::EntropyTrace)> = jobs
        .par_iter()
        .map(|&(l, ip, j)| {
            let labels = [l.to_string(), rate_label(e.rates[ip])];
            let seed_for = |role: &str| derive_seed(ctx.seed, &["entropy", role, &labels[0], &labels[1]], j as u64);
            let circuit = CircuitDescriptor::sample(l, e.rates[ip], seed_for("circuit")).expect("validated sizes");
            let trace = CompiledCircuit::new(&circuit).entropy_trace(e.initial, seed_for("run"));
            let trace = if e.smooth { trace.smooth() } else { trace };
            (circuit, trace)
        })
        .collect();
    out.lap("simulation");

    let mut rows = Vec::new();
    for &l in &e.qubits {
        for (ip, &p) in e.rates.iter().enumerate() {
            let group: Vec<_> = jobs
                .iter()
                .zip(&traces)
                .filter(|((jl, jp, _), _)| *jl == l && *jp == ip)
                .map(|(_, (c, t))| (c, t.clone()))
                .collect();
            for (c, _) in &group {
                out.write_circuit(c)?;
            }
            let owned: Vec<_> = group.into_iter().map(|(_, t)| t).collect();
            let avg = average_traces(&owned)?;
            let s0 = e.initial.prepare(l).entanglement_entropy(l / 2)?;
            rows.push(EntropyRow { num_qubits: l, p, t: 0, mean: s0, sem: 0.0, circuits: avg.circuits });
            for ((&t, &mean), &sem) in avg.layers.iter().zip(&avg.mean).zip(&avg.sem) {
                rows.push(EntropyRow { num_qubits: l, p, t, mean, sem, circuits: avg.circuits });
            }
        }
    }
    out.write("entropy.csv", &csv(&rows)?)?;
    out.finish()
}
