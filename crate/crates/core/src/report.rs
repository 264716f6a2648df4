//! CSV schemas for experiment outputs.
//!
//! | file | columns |
//! |------|---------|
//! | sweep | `L,p,circuit_index,circuit_hash,chi,estimator,M` |
//! | sweep summary | `L,p,chi_mean,chi_std,circuits,failed,M` |
//! | convergence | `M,chi,epsilon,estimator,reference,ref_kind,circuit_hash` |
//! | delta-m | `epsilon,Mmin_hist,Mmin_rnn,deltaM` |
//! | entropy | `L,p,t,mean,sem,circuits` |
//! | training | `epoch,train_nll,val_nll` |
//!
//! Unreached `M_min` and the resulting `ΔM` are written as `NA`. Floats use
//! the shortest representation that reads back exactly.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub num_qubits: usize,
    pub p: f64,
    pub circuit_index: usize,
    pub circuit_hash: String,
    pub chi: f64,
    pub estimator: String,
    #[serde(rename = "M")]
    pub runs: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    #[serde(rename = "L")]
    pub num_qubits: usize,
    pub p: f64,
    pub chi_mean: f64,
    pub chi_std: f64,
    pub circuits: usize,
    pub failed: usize,
    #[serde(rename = "M")]
    pub runs: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    #[serde(rename = "M")]
    pub runs: usize,
    pub chi: f64,
    pub epsilon: f64,
    pub estimator: String,
    pub reference: f64,
    pub ref_kind: String,
    pub circuit_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaMRow {
    pub epsilon: f64,
    #[serde(rename = "Mmin_hist")]
    pub m_min_histogram: Na<usize>,
    #[serde(rename = "Mmin_rnn")]
    pub m_min_rnn: Na<usize>,
    #[serde(rename = "deltaM")]
    pub delta_m: Na<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    #[serde(rename = "L")]
    pub num_qubits: usize,
    pub p: f64,
    pub t: usize,
    pub mean: f64,
    pub sem: f64,
    pub circuits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingRow {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

/// Optional value written as `NA` when absent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Na<T>(pub Option<T>);

impl<T: Serialize> Serialize for Na<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.0 {
            Some(v) => v.serialize(s),
            None => s.serialize_str("NA"),
        }
    }
}

pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}
