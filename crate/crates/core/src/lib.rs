//! Layerwise discrete diffusion for quantum circuits.
//!
//! Circuits are handled as wire-labelled DAGs ([`circuit_ir`]) and generated
//! one ASAP layer at a time: a size head picks how many gates the next layer
//! holds, and categorical diffusion ([`diffusion`]) denoises their gate types,
//! wires and incoming edges ([`model`], [`sampler`]). Training data comes from
//! random circuits labelled by a statevector simulator ([`dataset`],
//! [`simulator`]); [`eval`] scores sampled batches.

pub mod circuit_ir;
pub mod dataset;
pub mod diffusion;
pub mod eval;
pub mod model;
pub mod sampler;
pub mod simulator;

pub use circuit_ir::{canonical_form, validate_dag, Circuit, CircuitDag, GateSetId};
pub use dataset::{Dataset, DatasetSpec};
pub use eval::{evaluate_run, EvalOptions, EvalReport};
pub use model::{train, ModelCheckpoint, ModelConfig, TrainConfig};
pub use sampler::{sample_circuits, EdgeMode, SamplerConfig, WireMode};
pub use simulator::{CircuitLabel, Simulator};
