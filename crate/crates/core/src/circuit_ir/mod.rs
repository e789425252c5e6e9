//! Gate sets, circuits and their DAG representation.

mod canonical;
mod circuit;
mod dag;
mod gates;
mod qasm;

pub use canonical::canonical_form;
pub use circuit::{quantize_param, Circuit, GateInstance, MAX_REGISTER};
pub use dag::{
    validate_dag, CircuitDag, DagEdge, DagNode, Location, NodeKind, Rule, ValidationReport,
    Violation,
};
pub use gates::{GateDefinition, GateSet, GateSetId};
pub use qasm::export_qasm;

#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("unknown gate set {0:?}")]
    UnknownGateSet(String),
    #[error("gate {name:?} is not in gate set {gateset}")]
    UnknownGate { gateset: GateSetId, name: String },
    #[error("gate {position}: index {index} out of range for gate set {gateset}")]
    GateIndex {
        position: usize,
        index: usize,
        gateset: GateSetId,
    },
    #[error("qubit count {0} outside 1..={max}", max = MAX_REGISTER)]
    QubitCount(usize),
    #[error("gate {position}: {gate} acts on {expected} wires, got {found}")]
    Arity {
        position: usize,
        gate: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("gate {position}: wire {wire} out of range for {num_qubits} qubits")]
    WireOutOfRange {
        position: usize,
        wire: usize,
        num_qubits: usize,
    },
    #[error("gate {position}: wire {wire} repeated")]
    RepeatedWire { position: usize, wire: usize },
    #[error("gate {position}: expected {expected} parameters, got {found}")]
    ParamCount {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("DAG is not a valid circuit: {0}")]
    InvalidDag(ValidationReport),
    #[error("gates not expressible in OpenQASM 2: {}", .0.join(", "))]
    UnsupportedQasm(Vec<String>),
}
