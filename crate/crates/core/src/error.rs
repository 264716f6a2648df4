use thiserror::Error;

/// Errors produced by the simulation, estimation and learning layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("two-qubit gate targets ({0}, {1}) are not an adjacent pair")]
    NonAdjacentPair(usize, usize),

    #[error("state is not normalized (squared norm {0})")]
    Unnormalized(f64),

    #[error("cannot renormalize onto a zero-probability branch (qubit {qubit}, outcome {outcome})")]
    DegenerateBranch { qubit: usize, outcome: u8 },

    #[error("subsystem size {k} out of range for {num_qubits} qubits")]
    SubsystemOutOfRange { k: usize, num_qubits: usize },

    #[error("chain length must be even and in [2, 24], got {0}")]
    InvalidChainLength(usize),

    #[error("measurement rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),

    #[error("layer {layer} out of range 1..={depth}")]
    LayerOutOfRange { layer: usize, depth: usize },

    #[error("record length {got} does not match circuit measurement count {expected}")]
    RecordLength { expected: usize, got: usize },

    #[error("exact enumeration over 2^{0} records is infeasible (limit 2^22)")]
    EnumerationInfeasible(usize),

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format version {0}")]
    Version(String),

    #[error("content hash mismatch: header says {expected}, content hashes to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
