//! Exact simulation of monitored brick-wall circuits built from
//! Mølmer–Sørensen gates, the cross-entropy order parameter `χ_C` between two
//! initial states, and a GRU generative model used as a sample-efficient
//! estimator of `χ_C`.

pub mod circuit;
pub mod dataset;
pub mod error;
pub mod report;
pub mod rng;
pub mod rnn;
pub mod statevector;
pub mod trajectory;
pub mod xeb;

pub use circuit::CircuitDescriptor;
pub use error::{Error, Result};
pub use trajectory::{CompiledCircuit, InitialState, MeasurementRecord};
pub use xeb::XebEstimate;
