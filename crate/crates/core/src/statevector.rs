//! Dense statevector of an open spin-1/2 chain.
//!
//! Qubit 0 is the most significant bit of a basis-state index, so for `L`
//! qubits the bit of qubit `q` has weight `2^(L-1-q)`. Two-qubit matrices are
//! written in the basis `|q_i q_{i+1}>` ordered `00, 01, 10, 11`, which is the
//! Kronecker product order `A_i ⊗ B_{i+1}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix2 = [[Complex64; 2]; 2];
pub type Matrix4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvalues of a reduced density matrix below this are treated as zero.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Tolerance used when checking that an input state is normalized.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// A 2x2 unitary acting on `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleQubitGate {
    pub matrix: Matrix2,
    pub target: usize,
}

/// A 4x4 unitary acting on the adjacent pair `(first, first + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitGate {
    pub matrix: Matrix4,
    pub first: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Single(SingleQubitGate),
    Pair(TwoQubitGate),
}

impl From<SingleQubitGate> for Gate {
    fn from(g: SingleQubitGate) -> Self {
        Gate::Single(g)
    }
}

impl From<TwoQubitGate> for Gate {
    fn from(g: TwoQubitGate) -> Self {
        Gate::Pair(g)
    }
}

/// Mølmer–Sørensen rotation about the XX axis: `cos θ I⊗I − i sin θ X⊗X`.
pub fn ms_gate(theta: f64) -> Matrix4 {
    let c = Complex64::new(theta.cos(), 0.0);
    let s = Complex64::new(0.0, -theta.sin());
    [
        [c, ZERO, ZERO, s],
        [ZERO, c, s, ZERO],
        [ZERO, s, c, ZERO],
        [s, ZERO, ZERO, c],
    ]
}

/// Single-qubit rotation by `theta` about the equatorial axis at azimuth `phi`.
pub fn rotation_gate(theta: f64, phi: f64) -> Matrix2 {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let minus_i = Complex64::new(0.0, -1.0);
    [
        [c, minus_i * Complex64::from_polar(1.0, -phi) * s],
        [minus_i * Complex64::from_polar(1.0, phi) * s, c],
    ]
}

/// `A ⊗ B` with `A` on the more significant qubit.
pub fn kron(a: &Matrix2, b: &Matrix2) -> Matrix4 {
    let mut out = [[ZERO; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = a[r / 2][c / 2] * b[r % 2][c % 2];
        }
    }
    out
}

pub fn matmul4(a: &Matrix4, b: &Matrix4) -> Matrix4 {
    let mut out = [[ZERO; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            *entry = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Largest entry of `|G†G − I|`.
pub fn unitarity_defect<const D: usize>(m: &[[Complex64; D]; D]) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..D {
        for c in 0..D {
            let g: Complex64 = (0..D).map(|k| m[k][r].conj() * m[k][c]).sum();
            let target = if r == c { ONE } else { ZERO };
            worst = worst.max((g - target).norm());
        }
    }
    worst
}

/// Logarithm base used when reporting entropies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[index] = ONE;
        Self {
            num_qubits,
            amplitudes,
        }
    }

    /// `|+>^{⊗L}`
    pub fn plus(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        let a = Complex64::new((dim as f64).sqrt().recip(), 0.0);
        Self {
            num_qubits,
            amplitudes: vec![a; dim],
        }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "amplitude count {dim} is not a power of two"
            )));
        }
        Ok(Self {
            num_qubits: dim.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(1 << (self.num_qubits - 1 - qubit))
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match gate {
            Gate::Single(g) => self.apply_single(&g.matrix, g.target),
            Gate::Pair(g) => self.apply_pair(&g.matrix, g.first),
        }
    }

    pub fn apply_single(&mut self, m: &Matrix2, target: usize) -> Result<()> {
        let bit = self.bit(target)?;
        for block in (0..self.amplitudes.len()).step_by(2 * bit) {
            for i in block..block + bit {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i + bit];
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i + bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    /// Applies `m` to the pair `(first, first + 1)`.
    pub fn apply_pair(&mut self, m: &Matrix4, first: usize) -> Result<()> {
        if first + 1 >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: first + 1,
                num_qubits: self.num_qubits,
            });
        }
        let lo = 1usize << (self.num_qubits - 2 - first);
        let hi = lo << 1;
        for block in self.amplitudes.chunks_exact_mut(2 * hi) {
            let (upper, lower) = block.split_at_mut(hi);
            let (a0, a1) = upper.split_at_mut(lo);
            let (a2, a3) = lower.split_at_mut(lo);
            for (((x0, x1), x2), x3) in a0.iter_mut().zip(a1).zip(a2).zip(a3) {
                let v = [*x0, *x1, *x2, *x3];
                let row = |r: usize| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
                *x0 = row(0);
                *x1 = row(1);
                *x2 = row(2);
                *x3 = row(3);
            }
        }
        Ok(())
    }

    /// Probability of measuring `qubit` in `Z` with outcome 1, without the
    /// normalization check.
    pub(crate) fn weight_of_one(&self, qubit: usize) -> Result<f64> {
        let bit = self.bit(qubit)?;
        let mut p1 = 0.0;
        for block in (bit..self.amplitudes.len()).step_by(2 * bit) {
            p1 += self.amplitudes[block..block + bit]
                .iter()
                .map(|a| a.norm_sqr())
                .sum::<f64>();
        }
        Ok(p1)
    }

    /// Born probabilities `(p0, p1)` of a `Z` measurement on `qubit`.
    pub fn measurement_probability(&self, qubit: usize) -> Result<(f64, f64)> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(norm));
        }
        let p1 = self.weight_of_one(qubit)?.clamp(0.0, 1.0);
        Ok((1.0 - p1, p1))
    }

    /// Applies the projector `|outcome><outcome|` on `qubit` and returns the
    /// squared norm of the projected state before any renormalization.
    pub fn project(&mut self, qubit: usize, outcome: u8, renormalize: bool) -> Result<f64> {
        let bit = self.bit(qubit)?;
        if outcome > 1 {
            return Err(Error::InvalidInput(format!("outcome {outcome} is not a bit")));
        }
        let keep_set = outcome == 1;
        let mut weight = 0.0;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if (i & bit != 0) == keep_set {
                weight += a.norm_sqr();
            } else {
                *a = ZERO;
            }
        }
        if renormalize {
            if weight <= 0.0 {
                return Err(Error::DegenerateBranch { qubit, outcome });
            }
            let scale = weight.sqrt().recip();
            for a in self.amplitudes.iter_mut() {
                *a *= scale;
            }
        }
        Ok(weight)
    }

    /// Von Neumann entropy (nats) of the leading `k` qubits.
    pub fn entanglement_entropy(&self, k: usize) -> Result<f64> {
        self.entanglement_entropy_in(k, LogBase::Natural)
    }

    pub fn entanglement_entropy_in(&self, k: usize, base: LogBase) -> Result<f64> {
        if k == 0 || k >= self.num_qubits {
            return Err(Error::SubsystemOutOfRange {
                k,
                num_qubits: self.num_qubits,
            });
        }
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized(norm));
        }
        let rho = self.reduced_density_matrix(k);
        let nats: f64 = rho
            .symmetric_eigenvalues()
            .iter()
            .filter(|&&l| l > EIGENVALUE_FLOOR)
            .map(|&l| -l * l.ln())
            .sum();
        Ok(match base {
            LogBase::Natural => nats,
            LogBase::Two => nats / std::f64::consts::LN_2,
        })
    }

    /// Reduced density matrix of whichever side of the `k | L-k` cut is
    /// smaller. Both sides share a spectrum for a pure state.
    fn reduced_density_matrix(&self, k: usize) -> DMatrix<Complex64> {
        let right = self.num_qubits - k;
        let (rows, cols) = (1usize << k, 1usize << right);
        let psi = |a: usize, b: usize| self.amplitudes[a * cols + b];
        if k <= right {
            DMatrix::from_fn(rows, rows, |a, a2| {
                (0..cols).map(|b| psi(a, b) * psi(a2, b).conj()).sum()
            })
        } else {
            DMatrix::from_fn(cols, cols, |b, b2| {
                (0..rows).map(|a| psi(a, b) * psi(a, b2).conj()).sum()
            })
        }
    }
}
