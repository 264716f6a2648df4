//! Batched forward pass, backpropagation through time and the
//! finite-difference gradient check.
//!
//! Dropout acts only between the recurrent cell and the output layer, so the
//! hidden state after `i` sites depends on the record prefix alone. Batches
//! are therefore evaluated on the trie of distinct prefixes: each level holds
//! one row per distinct prefix, and only the output layer runs per record.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::{bernoulli_mask, log_softmax2, sigmoid, GruParameters, ParamViews, ParamViewsMut, ALPHABET};
use crate::rng::{stream_rng, Stream};
use crate::trajectory::MeasurementRecord;

const NONE: usize = usize::MAX;

/// Distinct prefixes of a batch. Level `i` holds prefixes of length `i`;
/// the cell output at level `i` predicts site `i`.
struct PrefixTrie {
    /// Parent index in level `i - 1` (unused at level 0).
    parents: Vec<Vec<usize>>,
    /// Input token of each node: the last bit of its prefix.
    tokens: Vec<Vec<Option<usize>>>,
    /// `node[i][row]` is the level-`i` node of record `row`.
    node: Vec<Vec<usize>>,
}

impl PrefixTrie {
    fn build(records: &[&MeasurementRecord], len: usize) -> Self {
        let b = records.len();
        let mut parents = vec![vec![NONE]];
        let mut tokens = vec![vec![None]];
        let mut node = vec![vec![0; b]];
        for i in 1..len {
            let above = &node[i - 1];
            let mut children = vec![[NONE; 2]; parents[i - 1].len()];
            let mut level_parents = Vec::new();
            let mut level_tokens = Vec::new();
            let mut level_node = Vec::with_capacity(b);
            for (row, rec) in records.iter().enumerate() {
                let bit = rec.bits()[i - 1] as usize;
                let slot = &mut children[above[row]][bit];
                if *slot == NONE {
                    *slot = level_parents.len();
                    level_parents.push(above[row]);
                    level_tokens.push(Some(bit));
                }
                level_node.push(*slot);
            }
            parents.push(level_parents);
            tokens.push(level_tokens);
            node.push(level_node);
        }
        Self { parents, tokens, node }
    }
}

/// Cell activations for one trie level.
struct LevelCache {
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    /// `W_hn h_prev`
    gh_n: Array2<f64>,
    h: Array2<f64>,
}

/// One GRU step for a block of rows with inputs `tokens`.
fn cell(p: &ParamViews<'_>, h_prev: Array2<f64>, tokens: &[Option<usize>]) -> LevelCache {
    let (b, h) = h_prev.dim();
    let mut gh = Array2::<f64>::zeros((b, 3 * h));
    general_mat_mul(1.0, &h_prev, &p.w_hidden.t(), 0.0, &mut gh);
    let mut r = Array2::zeros((b, h));
    let mut z = Array2::zeros((b, h));
    let mut n = Array2::zeros((b, h));
    let mut next = Array2::zeros((b, h));
    for (row, &tok) in tokens.iter().enumerate() {
        let ghr = gh.row(row);
        for k in 0..h {
            let x = |g: usize| tok.map_or(0.0, |t| p.w_input[[g * h + k, t]]) + p.bias[g * h + k];
            let rv = sigmoid(x(0) + ghr[k]);
            let zv = sigmoid(x(1) + ghr[h + k]);
            let nv = (x(2) + rv * ghr[2 * h + k]).tanh();
            r[[row, k]] = rv;
            z[[row, k]] = zv;
            n[[row, k]] = nv;
            next[[row, k]] = (1.0 - zv) * nv + zv * h_prev[[row, k]];
        }
    }
    let gh_n = gh.slice(s![.., 2 * h..]).to_owned();
    LevelCache { h_prev, r, z, n, gh_n, h: next }
}

/// Runs the recurrence over every trie level.
fn forward(p: &ParamViews<'_>, trie: &PrefixTrie, hidden: usize) -> Vec<LevelCache> {
    let mut levels: Vec<LevelCache> = Vec::with_capacity(trie.parents.len());
    for (i, parents) in trie.parents.iter().enumerate() {
        let h_prev = match levels.last() {
            None => Array2::zeros((1, hidden)),
            Some(above) => above.h.select(Axis(0), parents),
        };
        levels.push(cell(p, h_prev, &trie.tokens[i]));
    }
    levels
}

/// Output logits `(rows × 2)`.
fn logits(p: &ParamViews<'_>, h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((h.nrows(), ALPHABET));
    general_mat_mul(1.0, h, &p.w_out.t(), 0.0, &mut out);
    out += &p.b_out;
    out
}

pub(crate) fn log_probs(params: &GruParameters, records: &[MeasurementRecord], len: usize) -> Vec<f64> {
    let p = params.views();
    let refs: Vec<&MeasurementRecord> = records.iter().collect();
    let mut total = vec![0.0; records.len()];
    for (c, chunk) in refs.chunks(4096).enumerate() {
        let trie = PrefixTrie::build(chunk, len);
        for (i, level) in forward(&p, &trie, params.hidden()).iter().enumerate() {
            let lg = logits(&p, &level.h);
            let lp: Vec<[f64; 2]> = lg.rows().into_iter().map(|l| log_softmax2(l[0], l[1])).collect();
            for (row, rec) in chunk.iter().enumerate() {
                total[c * 4096 + row] += lp[trie.node[i][row]][rec.bits()[i] as usize];
            }
        }
    }
    total
}

pub(crate) fn sample<R: Rng>(params: &GruParameters, count: usize, len: usize, rng: &mut R) -> Vec<MeasurementRecord> {
    let p = params.views();
    let mut bits: Vec<Vec<u8>> = vec![Vec::with_capacity(len); count];
    let mut hidden = Array2::zeros((count, params.hidden()));
    for i in 0..len {
        let tokens: Vec<Option<usize>> = bits.iter().map(|b| (i > 0).then(|| b[i - 1] as usize)).collect();
        let level = cell(&p, hidden, &tokens);
        let lg = logits(&p, &level.h);
        for (row, b) in bits.iter_mut().enumerate() {
            let p1 = log_softmax2(lg[[row, 0]], lg[[row, 1]])[1].exp();
            b.push(u8::from(rng.random::<f64>() < p1));
        }
        hidden = level.h;
    }
    bits.into_iter()
        .map(|b| MeasurementRecord::new(b).expect("bits are 0/1"))
        .collect()
}

/// Dropout masks for one batch: one `B × H` matrix per site, entries `0` or
/// `1/(1-q)`.
pub(crate) fn draw_masks<R: Rng>(rng: &mut R, batch: usize, hidden: usize, len: usize, rate: f64) -> Vec<Array2<f64>> {
    (0..len)
        .map(|_| {
            Array2::from_shape_vec((batch, hidden), bernoulli_mask(rng, batch * hidden, rate))
                .expect("shape matches length")
        })
        .collect()
}

/// Mean negative log-likelihood per site over `records`, and its gradient
/// written into `grad` (same layout as the parameters, overwritten).
/// `masks`, when given, holds one dropout mask per site.
pub fn loss_and_gradient(
    params: &GruParameters,
    records: &[&MeasurementRecord],
    masks: Option<&[Array2<f64>]>,
    grad: &mut [f64],
) -> f64 {
    let b = records.len();
    let h = params.hidden();
    let len = records.first().map_or(0, |r| r.len());
    grad.iter_mut().for_each(|g| *g = 0.0);
    if b == 0 || len == 0 {
        return 0.0;
    }
    let p = params.views();
    let scale = 1.0 / (b * len) as f64;
    let trie = PrefixTrie::build(records, len);
    let levels = forward(&p, &trie, h);

    let mut g = ParamViewsMut::new(h, grad);
    let mut loss = 0.0;
    let mut carry = Array2::<f64>::zeros((levels[len - 1].h.nrows(), h));
    for (i, c) in levels.iter().enumerate().rev() {
        let mut out_h = c.h.select(Axis(0), &trie.node[i]);
        if let Some(m) = masks {
            out_h *= &m[i];
        }
        let mut dlogits = logits(&p, &out_h);
        for (row, rec) in records.iter().enumerate() {
            let bit = rec.bits()[i] as usize;
            let lp = log_softmax2(dlogits[[row, 0]], dlogits[[row, 1]]);
            loss -= lp[bit];
            dlogits[[row, 0]] = lp[0].exp() * scale;
            dlogits[[row, 1]] = lp[1].exp() * scale;
            dlogits[[row, bit]] -= scale;
        }
        general_mat_mul(1.0, &dlogits.t(), &out_h, 1.0, &mut g.w_out);
        g.b_out += &dlogits.sum_axis(Axis(0));
        let mut dh_rows = dlogits.dot(&p.w_out);
        if let Some(m) = masks {
            dh_rows *= &m[i];
        }
        let mut dh = carry;
        for (row, &node) in trie.node[i].iter().enumerate() {
            let mut target = dh.row_mut(node);
            target += &dh_rows.row(row);
        }

        let nodes = c.h.nrows();
        let mut dgh = Array2::<f64>::zeros((nodes, 3 * h));
        let mut dh_prev = Array2::<f64>::zeros((nodes, h));
        for (node, &tok) in trie.tokens[i].iter().enumerate() {
            for k in 0..h {
                let dhv = dh[[node, k]];
                let (r, z, n) = (c.r[[node, k]], c.z[[node, k]], c.n[[node, k]]);
                let dn = dhv * (1.0 - z);
                let dz = dhv * (c.h_prev[[node, k]] - n);
                dh_prev[[node, k]] = dhv * z;
                let da_n = dn * (1.0 - n * n);
                let da_r = da_n * c.gh_n[[node, k]] * r * (1.0 - r);
                let da_z = dz * z * (1.0 - z);
                dgh[[node, k]] = da_r;
                dgh[[node, h + k]] = da_z;
                dgh[[node, 2 * h + k]] = da_n * r;
                for (gate, d) in [da_r, da_z, da_n].into_iter().enumerate() {
                    g.bias[gate * h + k] += d;
                    if let Some(t) = tok {
                        g.w_input[[gate * h + k, t]] += d;
                    }
                }
            }
        }
        general_mat_mul(1.0, &dgh.t(), &c.h_prev, 1.0, &mut g.w_hidden);
        general_mat_mul(1.0, &dgh, &p.w_hidden, 1.0, &mut dh_prev);

        carry = Array2::zeros((if i > 0 { levels[i - 1].h.nrows() } else { 1 }, h));
        if i > 0 {
            for (node, &parent) in trie.parents[i].iter().enumerate() {
                let mut target = carry.row_mut(parent);
                target += &dh_prev.row(node);
            }
        }
    }
    loss * scale
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub parameters: usize,
}

/// Compares the BPTT gradient against central differences with step
/// `epsilon_fd`, parameter by parameter. With `dropout` set to
/// `(rate, seed)` a fixed set of masks is drawn once and used for every
/// evaluation.
pub fn gradient_check(
    params: &GruParameters,
    records: &[MeasurementRecord],
    epsilon_fd: f64,
    dropout: Option<(f64, u64)>,
) -> GradientCheck {
    let refs: Vec<&MeasurementRecord> = records.iter().collect();
    let len = records.first().map_or(0, |r| r.len());
    let masks = dropout.map(|(rate, seed)| {
        draw_masks(&mut stream_rng(seed, Stream::Dropout, 0), refs.len(), params.hidden(), len, rate)
    });
    let mut analytic = vec![0.0; params.as_slice().len()];
    loss_and_gradient(params, &refs, masks.as_deref(), &mut analytic);

    let mut scratch = vec![0.0; analytic.len()];
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + epsilon_fd;
        let plus = loss_and_gradient(&probe, &refs, masks.as_deref(), &mut scratch);
        probe.as_mut_slice()[i] = orig - epsilon_fd;
        let minus = loss_and_gradient(&probe, &refs, masks.as_deref(), &mut scratch);
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon_fd);
        let abs = (a - numeric).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(1e-6));
    }
    GradientCheck {
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        parameters: analytic.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize, count: u64) -> Vec<MeasurementRecord> {
        (0..count).map(|i| MeasurementRecord::from_index((i * 7 + 3) % (1 << n), n)).collect()
    }

    #[test]
    fn trie_shares_prefixes() {
        let recs: Vec<MeasurementRecord> = ["000", "001", "010", "001"].iter().map(|s| s.parse().unwrap()).collect();
        let refs: Vec<_> = recs.iter().collect();
        let trie = PrefixTrie::build(&refs, 3);
        assert_eq!(trie.parents.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 1, 2]);
        assert_eq!(trie.node[2], vec![0, 0, 1, 0]);
    }

    #[test]
    fn loss_matches_log_probs() {
        let params = GruParameters::uniform(4, 2);
        let recs = records(5, 12);
        let refs: Vec<_> = recs.iter().collect();
        let mut grad = vec![0.0; params.as_slice().len()];
        let loss = loss_and_gradient(&params, &refs, None, &mut grad);
        let expected = -log_probs(&params, &recs, 5).iter().sum::<f64>() / (12.0 * 5.0);
        assert!((loss - expected).abs() < 1e-13);
    }

    #[test]
    fn duplicated_records_do_not_change_mean_gradient() {
        let params = GruParameters::uniform(3, 6);
        let recs = records(4, 6);
        let doubled: Vec<_> = recs.iter().chain(&recs).collect();
        let single: Vec<_> = recs.iter().collect();
        let (mut g1, mut g2) = (vec![0.0; params.as_slice().len()], vec![0.0; params.as_slice().len()]);
        let l1 = loss_and_gradient(&params, &single, None, &mut g1);
        let l2 = loss_and_gradient(&params, &doubled, None, &mut g2);
        assert!((l1 - l2).abs() < 1e-14);
        assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn zero_model_gradient_matches_finite_differences() {
        let check = gradient_check(&GruParameters::zeros(3), &records(4, 6), 1e-5, None);
        assert!(check.max_relative_error < 1e-6, "{check:?}");
    }

    #[test]
    fn random_model_gradient_matches_finite_differences() {
        for (h, seed) in [(1, 1), (2, 5), (4, 8)] {
            let check = gradient_check(&GruParameters::uniform(h, seed), &records(4, 5), 1e-5, None);
            assert!(check.max_relative_error < 1e-4, "{check:?}");
            let with_dropout =
                gradient_check(&GruParameters::uniform(h, seed), &records(3, 5), 1e-5, Some((0.3, seed)));
            assert!(with_dropout.max_relative_error < 1e-4, "{with_dropout:?}");
        }
    }

    #[test]
    fn small_step_against_gradient_decreases_loss() {
        let mut params = GruParameters::uniform(4, 11);
        let recs = records(4, 8);
        let refs: Vec<_> = recs.iter().collect();
        let mut grad = vec![0.0; params.as_slice().len()];
        let before = loss_and_gradient(&params, &refs, None, &mut grad);
        for (p, g) in params.as_mut_slice().iter_mut().zip(&grad) {
            *p -= 1e-3 * g;
        }
        let after = loss_and_gradient(&params, &refs, None, &mut vec![0.0; grad.len()]);
        assert!(after < before);
    }
}
