//! Measurement-record dataset files.
//!
//! ```text
//! format mipt-xeb-records/1
//! circuit <hex sha-256 of the circuit descriptor>
//! initial all-plus
//! seed 17
//! runs 3
//! measurements 4
//! replay all-zero
//! 0 0110 0.0123
//! 1 1110 1.5e-4
//! 2 0000 0.2
//! ```
//!
//! Each row is `<run index> <bits> [<probability>]`. The probability column is
//! present exactly when the `replay` header names an initial state and is
//! written in the shortest form that parses back to the same `f64`. An empty
//! record (`measurements 0`) is written as `-`.

use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::trajectory::{InitialState, MeasurementRecord, SampledRecord};

pub const FORMAT_TAG: &str = "mipt-xeb-records/1";

#[derive(Clone, Debug, PartialEq)]
pub struct RecordSet {
    pub circuit_hash: String,
    pub initial: InitialState,
    pub seed: u64,
    pub measurements: usize,
    pub replay: Option<InitialState>,
    pub records: Vec<SampledRecord>,
}

impl RecordSet {
    pub fn runs(&self) -> usize {
        self.records.len()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format {FORMAT_TAG}");
        let _ = writeln!(out, "circuit {}", self.circuit_hash);
        let _ = writeln!(out, "initial {}", self.initial);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "runs {}", self.records.len());
        let _ = writeln!(out, "measurements {}", self.measurements);
        let _ = writeln!(
            out,
            "replay {}",
            self.replay.map_or("none", InitialState::tag)
        );
        for (j, r) in self.records.iter().enumerate() {
            let bits = if r.record.is_empty() {
                "-".to_string()
            } else {
                r.record.to_string()
            };
            match r.replay_probability {
                Some(p) => {
                    let _ = writeln!(out, "{j} {bits} {p:e}");
                }
                None => {
                    let _ = writeln!(out, "{j} {bits}");
                }
            }
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("missing `{key}` header")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key && !v.is_empty() && !v.contains(' ') => {
                    Ok((n, v.to_string()))
                }
                _ => Err(parse_err(n, format!("expected `{key} <value>`"))),
            }
        };
        let (_, tag) = header("format")?;
        if tag != FORMAT_TAG {
            return Err(Error::Version(tag));
        }
        let (n, circuit_hash) = header("circuit")?;
        if circuit_hash.len() != 64 || !circuit_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(parse_err(n, "circuit hash must be 64 hex digits"));
        }
        let (n, v) = header("initial")?;
        let initial = v.parse().map_err(|_| parse_err(n, "unknown initial state"))?;
        let (n, v) = header("seed")?;
        let seed = v.parse().map_err(|_| parse_err(n, "malformed seed"))?;
        let (n, v) = header("runs")?;
        let runs: usize = v.parse().map_err(|_| parse_err(n, "malformed run count"))?;
        let (n, v) = header("measurements")?;
        let measurements: usize = v
            .parse()
            .map_err(|_| parse_err(n, "malformed measurement count"))?;
        let (n, v) = header("replay")?;
        let replay = match v.as_str() {
            "none" => None,
            other => Some(other.parse().map_err(|_| parse_err(n, "unknown replay state"))?),
        };

        let mut records = Vec::with_capacity(runs.min(1 << 20));
        for (n, line) in lines {
            let mut cols = line.split(' ');
            let index: usize = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| parse_err(n, "malformed run index"))?;
            if index != records.len() {
                return Err(parse_err(n, format!("expected run {}", records.len())));
            }
            let bits = cols.next().ok_or_else(|| parse_err(n, "missing record"))?;
            let record = if bits == "-" && measurements == 0 {
                MeasurementRecord::default()
            } else {
                bits.parse::<MeasurementRecord>()
                    .map_err(|e| parse_err(n, e.to_string()))?
            };
            if record.len() != measurements {
                return Err(parse_err(n, format!("record has {} bits, expected {measurements}", record.len())));
            }
            let replay_probability = match (replay, cols.next()) {
                (Some(_), Some(p)) => {
                    let p: f64 = p.parse().map_err(|_| parse_err(n, "malformed probability"))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(parse_err(n, "probability outside [0, 1]"));
                    }
                    Some(p)
                }
                (None, None) => None,
                (Some(_), None) => return Err(parse_err(n, "missing replay probability")),
                (None, Some(_)) => return Err(parse_err(n, "unexpected probability column")),
            };
            if cols.next().is_some() {
                return Err(parse_err(n, "too many columns"));
            }
            records.push(SampledRecord {
                record,
                replay_probability,
            });
        }
        if records.len() != runs {
            return Err(Error::InvalidInput(format!(
                "header announces {runs} runs, file holds {}",
                records.len()
            )));
        }
        Ok(Self {
            circuit_hash,
            initial,
            seed,
            measurements,
            replay,
            records,
        })
    }
}
