//! Model checkpoint files.
//!
//! ```text
//! format mipt-xeb-gru/1
//! hidden 3
//! alphabet 2
//! dropout 0.2
//! record_length 12
//! seed 7
//! optimizer adam lr=1e-3 beta1=0.9 beta2=0.999 eps=1e-8
//! optimizer_state absent
//! parameters 53
//! -1.2345e-1
//! ...
//! ```
//!
//! Parameters follow the flat layout of [`GruParameters`], one per line in
//! the shortest decimal form that reads back to the same `f64`.

use std::fmt::Write as _;

use super::train::{ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
use super::{GruParameters, RnnModel, ALPHABET};
use crate::error::{parse_err, Error, Result};

pub const FORMAT_TAG: &str = "mipt-xeb-gru/1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: RnnModel,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Checkpoint {
    pub fn serialize(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let _ = writeln!(out, "format {FORMAT_TAG}");
        let _ = writeln!(out, "hidden {}", m.hidden());
        let _ = writeln!(out, "alphabet {ALPHABET}");
        let _ = writeln!(out, "dropout {}", m.dropout);
        let _ = writeln!(out, "record_length {}", m.record_len);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(
            out,
            "optimizer adam lr={:e} beta1={ADAM_BETA1} beta2={ADAM_BETA2} eps={ADAM_EPSILON:e}",
            self.learning_rate
        );
        let _ = writeln!(out, "optimizer_state absent");
        let _ = writeln!(out, "parameters {}", m.params.as_slice().len());
        for v in m.params.as_slice() {
            let _ = writeln!(out, "{v:e}");
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
                Some((k, v)) if k == key && !v.is_empty() => Ok((n, v.to_string())),
                _ => Err(parse_err(n, format!("expected `{key} <value>`"))),
            }
        };
        let (_, tag) = header("format")?;
        if tag != FORMAT_TAG {
            return Err(Error::Version(tag));
        }
        let (n, v) = header("hidden")?;
        let hidden: usize = v
            .parse()
            .ok()
            .filter(|&h| (1..=4096).contains(&h))
            .ok_or_else(|| parse_err(n, "malformed hidden size"))?;
        let (n, v) = header("alphabet")?;
        if v != ALPHABET.to_string() {
            return Err(parse_err(n, format!("alphabet must be {ALPHABET}")));
        }
        let (n, v) = header("dropout")?;
        let dropout: f64 = v.parse().map_err(|_| parse_err(n, "malformed dropout rate"))?;
        let (n, v) = header("record_length")?;
        let record_len: usize = v.parse().map_err(|_| parse_err(n, "malformed record length"))?;
        let (n, v) = header("seed")?;
        let seed: u64 = v.parse().map_err(|_| parse_err(n, "malformed seed"))?;
        let (n, v) = header("optimizer")?;
        let learning_rate = v
            .strip_prefix("adam ")
            .and_then(|rest| rest.split(' ').next())
            .and_then(|lr| lr.strip_prefix("lr="))
            .and_then(|lr| lr.parse::<f64>().ok())
            .ok_or_else(|| parse_err(n, "expected `optimizer adam lr=<rate> ...`"))?;
        let (n, v) = header("optimizer_state")?;
        if v != "absent" {
            return Err(parse_err(n, "only `optimizer_state absent` is supported"));
        }
        let (n, v) = header("parameters")?;
        let count: usize = v.parse().map_err(|_| parse_err(n, "malformed parameter count"))?;
        if count != GruParameters::len_for(hidden) {
            return Err(parse_err(n, format!("hidden size {hidden} needs {} parameters", GruParameters::len_for(hidden))));
        }
        let mut values = Vec::with_capacity(count);
        for (n, line) in lines {
            let v: f64 = line.parse().map_err(|_| parse_err(n, "malformed parameter"))?;
            if !v.is_finite() {
                return Err(parse_err(n, "non-finite parameter"));
            }
            values.push(v);
        }
        if values.len() != count {
            return Err(Error::InvalidInput(format!("expected {count} parameters, found {}", values.len())));
        }
        Ok(Self {
            model: RnnModel::new(GruParameters::from_flat(hidden, values)?, dropout, record_len)?,
            seed,
            learning_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            model: RnnModel::new(GruParameters::uniform(3, 4), 0.35, 12).unwrap(),
            seed: 4,
            learning_rate: 1e-3,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let text = c.serialize();
        let back = Checkpoint::deserialize(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.serialize(), text);
    }

    #[test]
    fn rejects_corruption() {
        let text = sample().serialize();
        assert!(matches!(Checkpoint::deserialize(&text.replace("gru/1", "gru/2")), Err(Error::Version(_))));
        assert!(Checkpoint::deserialize(&text.replace("hidden 3", "hidden 4")).is_err());
        assert!(Checkpoint::deserialize(&text.replace("dropout 0.35", "dropout 1.5")).is_err());
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::deserialize(&truncated).is_err());
        assert!(Checkpoint::deserialize(&format!("{text}NaN\n")).is_err());
    }
}
