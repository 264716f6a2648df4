//! Autoregressive GRU model over measurement records.
//!
//! Cell (gate rows ordered reset, update, candidate; `x` is the one-hot
//! previous outcome, all-zero at the first site):
//!
//! ```text
//! r  = sigmoid(W_xr x + W_hr h + b_r)
//! z  = sigmoid(W_xz x + W_hz h + b_z)
//! n  = tanh(W_xn x + b_n + r ⊙ (W_hn h))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! y  = softmax(W_o dropout(h') + b_o)
//! ```
//!
//! `P(m_1..m_N) = Π_i y_i[m_i]` with `h_0 = 0`.

mod batch;
pub mod checkpoint;
mod estimate;
mod train;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::trajectory::MeasurementRecord;

pub use batch::{gradient_check, loss_and_gradient, GradientCheck};
pub use estimate::{chi_rnn, SampleCount};
pub use train::{train, LossReport, TrainingConfig, TrainingOutcome};

/// One-hot input width and output width.
pub const ALPHABET: usize = 2;

/// Flat parameter vector with named views. Layout, row-major:
/// `w_input (3H×2) | w_hidden (3H×H) | bias (3H) | w_out (2×H) | b_out (2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParameters {
    hidden: usize,
    values: Vec<f64>,
}

impl GruParameters {
    pub fn len_for(hidden: usize) -> usize {
        3 * hidden * ALPHABET + 3 * hidden * hidden + 3 * hidden + ALPHABET * hidden + ALPHABET
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            values: vec![0.0; Self::len_for(hidden)],
        }
    }

    /// Every entry uniform in `±1/√H`.
    pub fn uniform(hidden: usize, seed: u64) -> Self {
        let bound = (hidden as f64).sqrt().recip();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = stream_rng(seed, Stream::Init, 0);
        Self {
            hidden,
            values: (0..Self::len_for(hidden)).map(|_| dist.sample(&mut rng)).collect(),
        }
    }

    pub fn from_flat(hidden: usize, values: Vec<f64>) -> Result<Self> {
        if hidden == 0 || values.len() != Self::len_for(hidden) {
            return Err(Error::InvalidInput(format!(
                "{} parameters do not fit hidden size {hidden}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(Self { hidden, values })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn views(&self) -> ParamViews<'_> {
        ParamViews::new(self.hidden, &self.values)
    }
}

pub(crate) struct Offsets {
    w_input: usize,
    w_hidden: usize,
    bias: usize,
    w_out: usize,
    b_out: usize,
}

impl Offsets {
    pub(crate) fn new(h: usize) -> Self {
        let w_input = 0;
        let w_hidden = w_input + 3 * h * ALPHABET;
        let bias = w_hidden + 3 * h * h;
        let w_out = bias + 3 * h;
        let b_out = w_out + ALPHABET * h;
        Self {
            w_input,
            w_hidden,
            bias,
            w_out,
            b_out,
        }
    }
}

pub struct ParamViews<'a> {
    pub w_input: ArrayView2<'a, f64>,
    pub w_hidden: ArrayView2<'a, f64>,
    pub bias: ArrayView1<'a, f64>,
    pub w_out: ArrayView2<'a, f64>,
    pub b_out: ArrayView1<'a, f64>,
}

impl<'a> ParamViews<'a> {
    pub(crate) fn new(h: usize, v: &'a [f64]) -> Self {
        let o = Offsets::new(h);
        Self {
            w_input: ArrayView2::from_shape((3 * h, ALPHABET), &v[o.w_input..o.w_hidden]).unwrap(),
            w_hidden: ArrayView2::from_shape((3 * h, h), &v[o.w_hidden..o.bias]).unwrap(),
            bias: ArrayView1::from(&v[o.bias..o.w_out]),
            w_out: ArrayView2::from_shape((ALPHABET, h), &v[o.w_out..o.b_out]).unwrap(),
            b_out: ArrayView1::from(&v[o.b_out..]),
        }
    }
}

pub(crate) struct ParamViewsMut<'a> {
    pub w_input: ArrayViewMut2<'a, f64>,
    pub w_hidden: ArrayViewMut2<'a, f64>,
    pub bias: ArrayViewMut1<'a, f64>,
    pub w_out: ArrayViewMut2<'a, f64>,
    pub b_out: ArrayViewMut1<'a, f64>,
}

impl<'a> ParamViewsMut<'a> {
    pub(crate) fn new(h: usize, v: &'a mut [f64]) -> Self {
        let o = Offsets::new(h);
        let (w_input, rest) = v.split_at_mut(o.w_hidden);
        let (w_hidden, rest) = rest.split_at_mut(o.bias - o.w_hidden);
        let (bias, rest) = rest.split_at_mut(o.w_out - o.bias);
        let (w_out, b_out) = rest.split_at_mut(o.b_out - o.w_out);
        Self {
            w_input: ArrayViewMut2::from_shape((3 * h, ALPHABET), w_input).unwrap(),
            w_hidden: ArrayViewMut2::from_shape((3 * h, h), w_hidden).unwrap(),
            bias: ArrayViewMut1::from(bias),
            w_out: ArrayViewMut2::from_shape((ALPHABET, h), w_out).unwrap(),
            b_out: ArrayViewMut1::from(b_out),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(log y_0, log y_1)` from two logits.
pub(crate) fn log_softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    [a - lse, b - lse]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel {
    pub params: GruParameters,
    pub dropout: f64,
    pub record_len: usize,
    pub mode: Mode,
}

impl RnnModel {
    pub fn new(params: GruParameters, dropout: f64, record_len: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidInput(format!("dropout rate {dropout} outside [0, 1)")));
        }
        Ok(Self {
            params,
            dropout,
            record_len,
            mode: Mode::Eval,
        })
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden
    }

    /// One eval-mode cell step. `input` is the previous outcome, `None` for
    /// the start token. Returns the new hidden state and `y`.
    pub fn forward_step(&self, hidden: &[f64], input: Option<u8>) -> Result<(Vec<f64>, [f64; 2])> {
        if hidden.len() != self.hidden() {
            return Err(Error::InvalidInput(format!(
                "hidden state has length {}, expected {}",
                hidden.len(),
                self.hidden()
            )));
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                detail: "non-finite hidden state".into(),
            });
        }
        let (next, logp) = self.cell(hidden, input);
        Ok((next, [logp[0].exp(), logp[1].exp()]))
    }

    /// Returns the new hidden state and `log y`.
    fn cell(&self, hidden: &[f64], input: Option<u8>) -> (Vec<f64>, [f64; 2]) {
        let h = self.hidden();
        let p = self.params.views();
        let mut next = vec![0.0; h];
        for k in 0..h {
            let gate = |g: usize| {
                let row = g * h + k;
                let x = input.map_or(0.0, |t| p.w_input[[row, t as usize]]);
                let rec: f64 = (0..h).map(|j| p.w_hidden[[row, j]] * hidden[j]).sum();
                (x + p.bias[row], rec)
            };
            let (xr, hr) = gate(0);
            let (xz, hz) = gate(1);
            let (xn, hn) = gate(2);
            let r = sigmoid(xr + hr);
            let z = sigmoid(xz + hz);
            let n = (xn + r * hn).tanh();
            next[k] = (1.0 - z) * n + z * hidden[k];
        }
        let logit = |o: usize| p.b_out[o] + (0..h).map(|j| p.w_out[[o, j]] * next[j]).sum::<f64>();
        let logp = log_softmax2(logit(0), logit(1));
        (next, logp)
    }

    fn check_len(&self, record: &MeasurementRecord) -> Result<()> {
        if record.len() != self.record_len {
            return Err(Error::RecordLength {
                expected: self.record_len,
                got: record.len(),
            });
        }
        Ok(())
    }

    /// `Σ_i log(y_i · m_i)` in eval mode. Fails if the model assigns the
    /// record zero probability.
    pub fn sequence_log_prob(&self, record: &MeasurementRecord) -> Result<f64> {
        self.check_len(record)?;
        let mut hidden = vec![0.0; self.hidden()];
        let mut input = None;
        let mut total = 0.0;
        for &bit in record.bits() {
            let (next, logp) = self.cell(&hidden, input);
            total += logp[bit as usize];
            hidden = next;
            input = Some(bit);
        }
        if !total.is_finite() {
            return Err(Error::InvalidInput(format!("record {record} has zero probability")));
        }
        Ok(total)
    }

    /// Batched eval-mode log-probabilities.
    pub fn log_probs(&self, records: &[MeasurementRecord]) -> Result<Vec<f64>> {
        for r in records {
            self.check_len(r)?;
        }
        Ok(batch::log_probs(&self.params, records, self.record_len))
    }

    /// Probabilities of all `2^N` records, indexed by
    /// [`MeasurementRecord::index`].
    pub fn enumerate_probabilities(&self) -> Result<Vec<f64>> {
        if self.record_len > crate::trajectory::MAX_ENUMERATION_BITS {
            return Err(Error::EnumerationInfeasible(self.record_len));
        }
        let mut out = vec![0.0; 1usize << self.record_len];
        self.descend(&vec![0.0; self.hidden()], None, 0, 0.0, 0, &mut out);
        Ok(out.into_iter().map(f64::exp).collect())
    }

    fn descend(&self, hidden: &[f64], input: Option<u8>, depth: usize, logp: f64, prefix: usize, out: &mut [f64]) {
        if depth == self.record_len {
            out[prefix] = logp;
            return;
        }
        let (next, y) = self.cell(hidden, input);
        for bit in [0u8, 1] {
            self.descend(&next, Some(bit), depth + 1, logp + y[bit as usize], (prefix << 1) | bit as usize, out);
        }
    }

    /// Ancestral sampling of `count` records from stream `stream` of `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<MeasurementRecord> {
        self.sample_stream(count, seed, 0)
    }

    pub(crate) fn sample_stream(&self, count: usize, seed: u64, stream: u64) -> Vec<MeasurementRecord> {
        let mut rng = stream_rng(seed, Stream::Ancestral, stream);
        batch::sample(&self.params, count, self.record_len, &mut rng)
    }
}

pub(crate) fn bernoulli_mask<R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = keep.recip();
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_uniform_outputs() {
        let m = RnnModel::new(GruParameters::zeros(3), 0.0, 4).unwrap();
        for input in [None, Some(0), Some(1)] {
            let (h, y) = m.forward_step(&[0.3, -0.2, 0.9], input).unwrap();
            assert_eq!(y, [0.5, 0.5]);
            // z = 1/2 and n = 0, so h' = h / 2.
            assert_eq!(h, vec![0.15, -0.1, 0.45]);
        }
    }

    #[test]
    fn forward_step_is_pure_in_eval_mode() {
        let m = RnnModel::new(GruParameters::uniform(5, 3), 0.5, 4).unwrap();
        let h = vec![0.1, 0.2, -0.3, 0.0, 0.5];
        assert_eq!(m.forward_step(&h, Some(1)).unwrap(), m.forward_step(&h, Some(1)).unwrap());
        let (_, y) = m.forward_step(&h, Some(1)).unwrap();
        assert!((y[0] + y[1] - 1.0).abs() < 1e-12 && y.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn forward_step_rejects_bad_hidden() {
        let m = RnnModel::new(GruParameters::zeros(2), 0.0, 1).unwrap();
        assert!(matches!(m.forward_step(&[f64::NAN, 0.0], None), Err(Error::Divergence { .. })));
        assert!(m.forward_step(&[0.0], None).is_err());
    }

    /// Hand evaluation of one step with N_h = 2.
    #[test]
    fn hand_computed_step() {
        let h = 2;
        let mut values = vec![0.0; GruParameters::len_for(h)];
        let o = Offsets::new(h);
        // w_input rows r0 r1 z0 z1 n0 n1, columns (x0, x1)
        let w_input = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 1.0, -1.1, 1.2];
        values[o.w_input..o.w_hidden].copy_from_slice(&w_input);
        let w_hidden = [0.2, 0.1, -0.3, 0.5, 0.4, -0.6, 0.7, 0.2, -0.1, 0.3, 0.5, -0.4];
        values[o.w_hidden..o.bias].copy_from_slice(&w_hidden);
        values[o.bias..o.w_out].copy_from_slice(&[0.05, -0.05, 0.1, -0.1, 0.2, -0.2]);
        values[o.w_out..o.b_out].copy_from_slice(&[1.5, -0.5, -1.0, 2.0]);
        values[o.b_out..].copy_from_slice(&[0.1, -0.1]);
        let m = RnnModel::new(GruParameters::from_flat(h, values).unwrap(), 0.0, 1).unwrap();

        let hp = [0.5, -0.25];
        // input bit 1 selects column 1 of w_input.
        let r0 = sigmoid(-0.2 + 0.05 + (0.2 * 0.5 + 0.1 * -0.25));
        let r1 = sigmoid(0.4 - 0.05 + (-0.3 * 0.5 + 0.5 * -0.25));
        let z0 = sigmoid(0.6 + 0.1 + (0.4 * 0.5 + -0.6 * -0.25));
        let z1 = sigmoid(-0.8 - 0.1 + (0.7 * 0.5 + 0.2 * -0.25));
        let n0 = (1.0 + 0.2 + r0 * (-0.1 * 0.5 + 0.3 * -0.25)).tanh();
        let n1 = (1.2 - 0.2 + r1 * (0.5 * 0.5 + -0.4 * -0.25)).tanh();
        let h0 = (1.0 - z0) * n0 + z0 * 0.5;
        let h1 = (1.0 - z1) * n1 + z1 * -0.25;
        let l0 = 0.1 + 1.5 * h0 - 0.5 * h1;
        let l1 = -0.1 - 1.0 * h0 + 2.0 * h1;
        let y1 = l1.exp() / (l0.exp() + l1.exp());

        let (next, y) = m.forward_step(&hp, Some(1)).unwrap();
        assert!((next[0] - h0).abs() < 1e-14 && (next[1] - h1).abs() < 1e-14);
        assert!((y[1] - y1).abs() < 1e-14 && (y[0] - (1.0 - y1)).abs() < 1e-14);
    }

    #[test]
    fn single_site_log_prob_is_first_softmax_entry() {
        let m = RnnModel::new(GruParameters::uniform(4, 9), 0.0, 1).unwrap();
        let (_, y) = m.forward_step(&[0.0; 4], None).unwrap();
        for bit in [0u8, 1] {
            let lp = m.sequence_log_prob(&MeasurementRecord::new(vec![bit]).unwrap()).unwrap();
            assert!((lp - y[bit as usize].ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_is_normalized() {
        for (h, n, seed) in [(3, 1, 1), (5, 6, 2), (8, 10, 3)] {
            let m = RnnModel::new(GruParameters::uniform(h, seed), 0.0, n).unwrap();
            let total: f64 = m.enumerate_probabilities().unwrap().iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn batched_and_stepwise_log_probs_agree() {
        let m = RnnModel::new(GruParameters::uniform(6, 4), 0.0, 7).unwrap();
        let records: Vec<_> = (0..40).map(|i| MeasurementRecord::from_index(i * 3, 7)).collect();
        let batched = m.log_probs(&records).unwrap();
        let enumerated = m.enumerate_probabilities().unwrap();
        for (r, lp) in records.iter().zip(&batched) {
            let single = m.sequence_log_prob(r).unwrap();
            assert!((single - lp).abs() < 1e-12);
            assert!((enumerated[r.index() as usize].ln() - lp).abs() < 1e-10);
        }
    }

    #[test]
    fn forced_zero_outputs_sample_all_zero_records() {
        let h = 2;
        let mut p = GruParameters::zeros(h);
        let o = Offsets::new(h);
        p.as_mut_slice()[o.b_out] = 60.0;
        let m = RnnModel::new(p, 0.0, 5).unwrap();
        let samples = m.sample(200, 1);
        assert!(samples.iter().all(|r| r.len() == 5 && r.bits().iter().all(|&b| b == 0)));
    }
}
