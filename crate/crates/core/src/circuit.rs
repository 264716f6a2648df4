//! Random brick-layer circuits built from native trapped-ion gates.
//!
//! A circuit on `L` qubits has `T = T_encoding + T_bulk` layers. Odd layers
//! (1-based) pair `(0,1), (2,3), ...`; even layers pair `(1,2), (3,4), ...`
//! and leave both edge qubits idle. Every pair receives
//! `MS(π/4) · R(π/2, φ_i) ⊗ R(π/2, φ_{i+1})`. After each bulk layer every
//! qubit is measured in `Z` independently with probability `p`; the encoding
//! layers carry no measurements.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt::Write as _;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{parse_err, Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::statevector::{kron, matmul4, ms_gate, rotation_gate, Matrix4};

pub const MAX_QUBITS: usize = 24;
pub const FORMAT_TAG: &str = "mipt-xeb-circuit/1";

/// Azimuth of a single-qubit rotation: one of `0, π/4, π/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhiAngle {
    Zero,
    QuarterPi,
    HalfPi,
}

impl PhiAngle {
    pub const ALL: [PhiAngle; 3] = [PhiAngle::Zero, PhiAngle::QuarterPi, PhiAngle::HalfPi];

    pub fn radians(self) -> f64 {
        match self {
            PhiAngle::Zero => 0.0,
            PhiAngle::QuarterPi => FRAC_PI_4,
            PhiAngle::HalfPi => FRAC_PI_2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            PhiAngle::Zero => "0",
            PhiAngle::QuarterPi => "pi/4",
            PhiAngle::HalfPi => "pi/2",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        PhiAngle::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

/// Qubit `qubit` is measured after the unitaries of layer `layer` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MeasurementSite {
    pub layer: usize,
    pub qubit: usize,
}

/// One `U_{i,i+1}` block of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairGate {
    pub first: usize,
    pub phi_first: PhiAngle,
    pub phi_second: PhiAngle,
}

impl PairGate {
    pub fn second(&self) -> usize {
        self.first + 1
    }

    /// `MS(π/4) · (R(π/2, φ_i) ⊗ R(π/2, φ_{i+1}))` as one 4x4 matrix.
    pub fn unitary(&self) -> Matrix4 {
        let r1 = rotation_gate(FRAC_PI_2, self.phi_first.radians());
        let r2 = rotation_gate(FRAC_PI_2, self.phi_second.radians());
        matmul4(&ms_gate(FRAC_PI_4), &kron(&r1, &r2))
    }
}

/// First qubits of the pairs acted on in `layer` (1-based).
pub fn layer_pairs(num_qubits: usize, layer: usize) -> impl Iterator<Item = usize> {
    let start = if layer % 2 == 1 { 0 } else { 1 };
    (start..num_qubits.saturating_sub(1)).step_by(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitDescriptor {
    num_qubits: usize,
    t_encoding: usize,
    t_bulk: usize,
    measurement_rate: f64,
    seed: u64,
    /// `phi[t-1][q]`; `None` where qubit `q` is idle in layer `t`.
    phi: Vec<Vec<Option<PhiAngle>>>,
    sites: Vec<MeasurementSite>,
}

fn check_chain_length(num_qubits: usize) -> Result<()> {
    if !(2..=MAX_QUBITS).contains(&num_qubits) || !num_qubits.is_multiple_of(2) {
        return Err(Error::InvalidChainLength(num_qubits));
    }
    Ok(())
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidRate(p));
    }
    Ok(())
}

impl CircuitDescriptor {
    /// Samples a circuit with the default depths `T_encoding = T_bulk = 2L`.
    pub fn sample(num_qubits: usize, p: f64, seed: u64) -> Result<Self> {
        Self::sample_with_depths(num_qubits, p, seed, 2 * num_qubits, 2 * num_qubits)
    }

    pub fn sample_with_depths(
        num_qubits: usize,
        p: f64,
        seed: u64,
        t_encoding: usize,
        t_bulk: usize,
    ) -> Result<Self> {
        check_chain_length(num_qubits)?;
        check_rate(p)?;
        let depth = t_encoding + t_bulk;

        let mut phi_rng = stream_rng(seed, Stream::Phi, 0);
        let mut phi = vec![vec![None; num_qubits]; depth];
        for (t, row) in (1..=depth).zip(phi.iter_mut()) {
            for first in layer_pairs(num_qubits, t) {
                for q in [first, first + 1] {
                    row[q] = Some(PhiAngle::ALL[phi_rng.random_range(0..3)]);
                }
            }
        }

        let mut site_rng = stream_rng(seed, Stream::Sites, 0);
        let mut sites = Vec::new();
        for layer in t_encoding + 1..=depth {
            for qubit in 0..num_qubits {
                if site_rng.random::<f64>() < p {
                    sites.push(MeasurementSite { layer, qubit });
                }
            }
        }

        Ok(Self {
            num_qubits,
            t_encoding,
            t_bulk,
            measurement_rate: p,
            seed,
            phi,
            sites,
        })
    }

    /// Assembles a descriptor from explicit parts, enforcing every layout
    /// invariant.
    pub fn from_parts(
        num_qubits: usize,
        t_encoding: usize,
        t_bulk: usize,
        measurement_rate: f64,
        seed: u64,
        phi: Vec<Vec<Option<PhiAngle>>>,
        sites: Vec<MeasurementSite>,
    ) -> Result<Self> {
        check_chain_length(num_qubits)?;
        check_rate(measurement_rate)?;
        let depth = t_encoding + t_bulk;
        if phi.len() != depth {
            return Err(Error::InvalidInput(format!(
                "expected {depth} layers of angles, got {}",
                phi.len()
            )));
        }
        for (t, row) in (1..=depth).zip(&phi) {
            if row.len() != num_qubits {
                return Err(Error::InvalidInput(format!(
                    "layer {t} lists {} angles for {num_qubits} qubits",
                    row.len()
                )));
            }
            let mut active = vec![false; num_qubits];
            for first in layer_pairs(num_qubits, t) {
                active[first] = true;
                active[first + 1] = true;
            }
            if let Some(q) = (0..num_qubits).find(|&q| active[q] != row[q].is_some()) {
                return Err(Error::InvalidInput(format!(
                    "layer {t}: qubit {q} angle presence does not match the brick layout"
                )));
            }
        }
        for (i, s) in sites.iter().enumerate() {
            if s.qubit >= num_qubits || s.layer <= t_encoding || s.layer > depth {
                return Err(Error::InvalidInput(format!(
                    "site {i} at (layer {}, qubit {}) lies outside the bulk",
                    s.layer, s.qubit
                )));
            }
            if i > 0 && sites[i - 1] >= *s {
                return Err(Error::InvalidInput(format!(
                    "site {i} breaks layer-major, qubit-minor ordering"
                )));
            }
        }
        Ok(Self {
            num_qubits,
            t_encoding,
            t_bulk,
            measurement_rate,
            seed,
            phi,
            sites,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn t_encoding(&self) -> usize {
        self.t_encoding
    }

    pub fn t_bulk(&self) -> usize {
        self.t_bulk
    }

    pub fn depth(&self) -> usize {
        self.t_encoding + self.t_bulk
    }

    pub fn measurement_rate(&self) -> f64 {
        self.measurement_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sites(&self) -> &[MeasurementSite] {
        &self.sites
    }

    /// Number of in-circuit measurements `N`.
    pub fn num_measurements(&self) -> usize {
        self.sites.len()
    }

    pub fn phi(&self, layer: usize, qubit: usize) -> Option<PhiAngle> {
        self.phi.get(layer.checked_sub(1)?)?.get(qubit).copied().flatten()
    }

    /// The pair gates of `layer` (1-based) in ascending qubit order.
    pub fn gate_sequence(&self, layer: usize) -> Result<Vec<PairGate>> {
        if layer == 0 || layer > self.depth() {
            return Err(Error::LayerOutOfRange {
                layer,
                depth: self.depth(),
            });
        }
        let row = &self.phi[layer - 1];
        Ok(layer_pairs(self.num_qubits, layer)
            .map(|first| PairGate {
                first,
                phi_first: row[first].expect("validated layout"),
                phi_second: row[first + 1].expect("validated layout"),
            })
            .collect())
    }

    fn body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format {FORMAT_TAG}");
        let _ = writeln!(out, "qubits {}", self.num_qubits);
        let _ = writeln!(out, "t_encoding {}", self.t_encoding);
        let _ = writeln!(out, "t_bulk {}", self.t_bulk);
        let _ = writeln!(out, "rate {}", self.measurement_rate);
        let _ = writeln!(out, "seed {}", self.seed);
        for (t, row) in self.phi.iter().enumerate() {
            let _ = write!(out, "layer {}", t + 1);
            for angle in row {
                out.push(' ');
                out.push_str(angle.map_or("-", PhiAngle::tag));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "sites {}", self.sites.len());
        for s in &self.sites {
            let _ = writeln!(out, "site {} {}", s.layer, s.qubit);
        }
        out
    }

    /// Hex SHA-256 of the canonical serialization (excluding the hash line).
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }

    /// Canonical text form. Byte-stable for a given descriptor.
    pub fn serialize(&self) -> String {
        let body = self.body();
        let hash = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{body}hash {hash}\n")
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, format!("unexpected end of input, expected `{key}`")))?;
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some(k) if k == key => Ok((n, tokens.collect())),
                _ => Err(parse_err(n, format!("expected `{key}`"))),
            }
        };
        fn one<'a>(n: usize, v: &[&'a str]) -> Result<&'a str> {
            match v {
                [x] => Ok(x),
                _ => Err(parse_err(n, "expected exactly one value")),
            }
        }
        fn num<T: std::str::FromStr>(n: usize, v: &[&str]) -> Result<T> {
            one(n, v)?
                .parse()
                .map_err(|_| parse_err(n, "malformed number"))
        }

        let (n, v) = next("format")?;
        let tag = one(n, &v)?;
        if tag != FORMAT_TAG {
            return Err(Error::Version(tag.to_string()));
        }
        let (n, v) = next("qubits")?;
        let num_qubits: usize = num(n, &v)?;
        check_chain_length(num_qubits)?;
        let (n, v) = next("t_encoding")?;
        let t_encoding: usize = num(n, &v)?;
        let (n, v) = next("t_bulk")?;
        let t_bulk: usize = num(n, &v)?;
        let depth = t_encoding
            .checked_add(t_bulk)
            .filter(|&d| d <= 64 * MAX_QUBITS)
            .ok_or_else(|| parse_err(n, "circuit depth too large"))?;
        let (n, v) = next("rate")?;
        let rate: f64 = num(n, &v)?;
        let (n, v) = next("seed")?;
        let seed: u64 = num(n, &v)?;

        let mut phi = Vec::with_capacity(depth);
        for t in 1..=depth {
            let (n, v) = next("layer")?;
            if v.first().and_then(|x| x.parse::<usize>().ok()) != Some(t) {
                return Err(parse_err(n, format!("expected layer {t}")));
            }
            let row = v[1..]
                .iter()
                .map(|tok| match *tok {
                    "-" => Ok(None),
                    other => PhiAngle::from_tag(other)
                        .map(Some)
                        .ok_or_else(|| parse_err(n, format!("unknown angle tag `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            phi.push(row);
        }

        let (n, v) = next("sites")?;
        let count: usize = num(n, &v)?;
        if count > depth * num_qubits {
            return Err(parse_err(n, "more sites than qubit-layers"));
        }
        let mut sites = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, v) = next("site")?;
            match v.as_slice() {
                [layer, qubit] => sites.push(MeasurementSite {
                    layer: layer.parse().map_err(|_| parse_err(n, "malformed layer"))?,
                    qubit: qubit.parse().map_err(|_| parse_err(n, "malformed qubit"))?,
                }),
                _ => return Err(parse_err(n, "expected `site <layer> <qubit>`")),
            }
        }
        let (n, v) = next("hash")?;
        let expected = one(n, &v)?.to_string();
        if let Some((n, _)) = lines.next() {
            return Err(parse_err(n, "trailing content after hash"));
        }

        let circuit =
            Self::from_parts(num_qubits, t_encoding, t_bulk, rate, seed, phi, sites)?;
        let actual = circuit.content_hash();
        if actual != expected {
            return Err(Error::HashMismatch { expected, actual });
        }
        Ok(circuit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::unitarity_defect;

    #[test]
    fn no_measurements_at_zero_rate() {
        let c = CircuitDescriptor::sample(8, 0.0, 1).unwrap();
        assert_eq!(c.num_measurements(), 0);
    }

    #[test]
    fn every_bulk_site_measured_at_unit_rate() {
        let c = CircuitDescriptor::sample(8, 1.0, 1).unwrap();
        assert_eq!(c.t_bulk(), 16);
        assert_eq!(c.num_measurements(), 128);
    }

    #[test]
    fn measurement_count_near_expectation() {
        // N ~ Binomial(L * T_bulk, p); mean 12.8, sd ~ 3.4 for L = 8, p = 0.1.
        let mean = (0..400)
            .map(|s| CircuitDescriptor::sample(8, 0.1, s).unwrap().num_measurements() as f64)
            .sum::<f64>()
            / 400.0;
        assert!((mean - 12.8).abs() < 3.0 * (128.0f64 * 0.1 * 0.9).sqrt() / 20.0);
    }

    #[test]
    fn odd_chain_rejected() {
        assert!(matches!(
            CircuitDescriptor::sample(7, 0.1, 0),
            Err(Error::InvalidChainLength(7))
        ));
        assert!(CircuitDescriptor::sample(26, 0.1, 0).is_err());
        assert!(matches!(
            CircuitDescriptor::sample(4, 1.5, 0),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn brick_layout() {
        let c = CircuitDescriptor::sample(4, 0.2, 3).unwrap();
        let firsts = |t| -> Vec<usize> {
            c.gate_sequence(t).unwrap().iter().map(|g| g.first).collect()
        };
        assert_eq!(firsts(1), vec![0, 2]);
        assert_eq!(firsts(2), vec![1]);
        let c8 = CircuitDescriptor::sample(8, 0.2, 3).unwrap();
        assert_eq!(c8.gate_sequence(1).unwrap().len(), 4);
        assert_eq!(c8.gate_sequence(2).unwrap().len(), 3);
        assert!(matches!(c.gate_sequence(0), Err(Error::LayerOutOfRange { .. })));
        assert!(c.gate_sequence(c.depth() + 1).is_err());
        assert_eq!(c.phi(2, 0), None);
        assert!(c.phi(2, 1).is_some());
    }

    #[test]
    fn pair_unitaries_are_unitary() {
        for a in PhiAngle::ALL {
            for b in PhiAngle::ALL {
                let g = PairGate { first: 0, phi_first: a, phi_second: b };
                assert!(unitarity_defect(&g.unitary()) < 1e-12);
            }
        }
    }

    #[test]
    fn minimal_handwritten_descriptor_parses() {
        let body = "format mipt-xeb-circuit/1\nqubits 2\nt_encoding 1\nt_bulk 1\nrate 0.5\nseed 9\n\
                    layer 1 pi/4 0\nlayer 2 - -\nsites 1\nsite 2 1\n";
        let hash = hex::encode(Sha256::digest(body.as_bytes()));
        let c = CircuitDescriptor::deserialize(&format!("{body}hash {hash}\n")).unwrap();
        assert_eq!(c.num_qubits(), 2);
        assert_eq!(c.sites(), &[MeasurementSite { layer: 2, qubit: 1 }]);
        assert_eq!(c.gate_sequence(2).unwrap(), vec![]);
        assert_eq!(c.phi(1, 0), Some(PhiAngle::QuarterPi));
    }

    #[test]
    fn corrupted_hash_rejected() {
        let text = CircuitDescriptor::sample(4, 0.3, 5).unwrap().serialize();
        let bad = text.replace("hash ", "hash 00");
        assert!(matches!(
            CircuitDescriptor::deserialize(&bad),
            Err(Error::HashMismatch { .. })
        ));
        let tampered = text.replacen("seed 5", "seed 6", 1);
        assert!(matches!(
            CircuitDescriptor::deserialize(&tampered),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = CircuitDescriptor::sample(4, 0.3, 5)
            .unwrap()
            .serialize()
            .replace(FORMAT_TAG, "mipt-xeb-circuit/2");
        assert!(matches!(CircuitDescriptor::deserialize(&text), Err(Error::Version(_))));
    }

    #[test]
    fn layout_violations_rejected() {
        let text = CircuitDescriptor::sample(4, 0.0, 5).unwrap().serialize();
        // Give an idle edge qubit an angle.
        let bad = text.replacen("layer 2 -", "layer 2 0", 1);
        assert!(CircuitDescriptor::deserialize(&bad).is_err());
        assert!(CircuitDescriptor::deserialize("").is_err());
        assert!(CircuitDescriptor::deserialize("format mipt-xeb-circuit/1\nqubits 3\n").is_err());
    }
}
