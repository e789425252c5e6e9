//! Ancestral layer-by-layer generation from a trained checkpoint.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit_ir::{
    quantize_param, Circuit, CircuitDag, DagEdge, DagNode, GateSet, GateSetId, ValidationReport,
};
use crate::diffusion::{posterior_step, sample_categorical, softmax_checked, CategoricalVar};
use crate::model::{
    wire_class, wire_tuple, wire_vocab_size, GraphInput, ModelCheckpoint, Network, Tape,
};
use crate::simulator::CircuitLabel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("gate set mismatch: checkpoint is {checkpoint}, requested {requested}")]
    GateSetMismatch {
        checkpoint: GateSetId,
        requested: GateSetId,
    },
    #[error("{num_qubits} qubits requested, checkpoint supports at most {max}")]
    QubitBound { num_qubits: usize, max: usize },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
}

/// Where gate wires come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireMode {
    /// Wire predictions are discarded; start-node connections carry a random
    /// qubit permutation and each gate takes free slots at random.
    WireFree,
    /// Wires come from the node head's wire-assignment prediction.
    WireHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeMode {
    /// Edges are reverse-diffused by the edge head and kept as predicted.
    Free,
    /// Each new node consumes the current frontier edge of each of its wires.
    Constrained,
}

impl WireMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WireMode::WireFree => "wire_free",
            WireMode::WireHead => "wire_head",
        }
    }
}

impl EdgeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeMode::Free => "free",
            EdgeMode::Constrained => "constrained",
        }
    }
}

impl fmt::Display for WireMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for EdgeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WireMode {
    type Err = SamplerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wire_free" => Ok(WireMode::WireFree),
            "wire_head" => Ok(WireMode::WireHead),
            _ => Err(SamplerError::Config(format!("unknown mode {s:?}"))),
        }
    }
}

impl FromStr for EdgeMode {
    type Err = SamplerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(EdgeMode::Free),
            "constrained" => Ok(EdgeMode::Constrained),
            _ => Err(SamplerError::Config(format!("unknown edge mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelSource {
    /// Uniform draw from the training labels with the same qubit count.
    Empirical,
    Fixed(CircuitLabel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: WireMode,
    pub edge_mode: EdgeMode,
    pub max_layers: usize,
    pub num_qubits: usize,
    pub label_source: LabelSource,
    pub seed: u64,
    /// Checked against the checkpoint when set.
    pub gateset_id: Option<GateSetId>,
}

impl SamplerConfig {
    pub fn new(num_qubits: usize, seed: u64) -> Self {
        SamplerConfig {
            mode: WireMode::WireHead,
            edge_mode: EdgeMode::Constrained,
            max_layers: 64,
            num_qubits,
            label_source: LabelSource::Empirical,
            seed,
            gateset_id: None,
        }
    }

    pub fn validate(&self, ckpt: &ModelCheckpoint) -> Result<(), SamplerError> {
        if let Some(g) = self.gateset_id {
            if g != ckpt.gateset_id() {
                return Err(SamplerError::GateSetMismatch {
                    checkpoint: ckpt.gateset_id(),
                    requested: g,
                });
            }
        }
        if self.num_qubits == 0 || self.num_qubits > ckpt.config.max_qubits {
            return Err(SamplerError::QubitBound {
                num_qubits: self.num_qubits,
                max: ckpt.config.max_qubits,
            });
        }
        if self.mode == WireMode::WireFree && self.edge_mode == EdgeMode::Free {
            return Err(SamplerError::Config(
                "wire_free mode requires constrained edges".into(),
            ));
        }
        if self.max_layers == 0 {
            return Err(SamplerError::Config("max_layers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledDag {
    pub dag: CircuitDag,
    /// Generation hit `max_layers` before the size head chose to stop.
    pub truncated: bool,
    pub label: CircuitLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCircuit {
    pub dag: CircuitDag,
    /// Present exactly when the DAG is valid.
    pub circuit: Option<Circuit>,
    pub report: ValidationReport,
    pub truncated: bool,
}

impl SampledCircuit {
    pub fn is_valid(&self) -> bool {
        self.circuit.is_some()
    }
}

/// Independent stream for sample `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_label<R: Rng + ?Sized>(
    ckpt: &ModelCheckpoint,
    config: &SamplerConfig,
    rng: &mut R,
) -> CircuitLabel {
    match config.label_source {
        LabelSource::Fixed(l) => l,
        LabelSource::Empirical => {
            let same: Vec<CircuitLabel> = ckpt
                .label_pool
                .iter()
                .filter(|(n, _)| *n == config.num_qubits)
                .map(|(_, l)| *l)
                .collect();
            let pool: Vec<CircuitLabel> = if same.is_empty() {
                ckpt.label_pool.iter().map(|(_, l)| *l).collect()
            } else {
                same
            };
            if pool.is_empty() {
                // label of the all-zeros state
                CircuitLabel::new(1.0, 0.0)
            } else {
                pool[rng.random_range(0..pool.len())]
            }
        }
    }
}

/// Uniformly random ordering of the qubits, fixed at the start node and
/// used for every slot assignment of a wire-free sample.
pub fn initial_wire_order<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_qubits).collect();
    order.shuffle(rng);
    order
}

fn masked(row: &[f64], allowed: impl Fn(usize) -> bool) -> Vec<f64> {
    row.iter()
        .enumerate()
        .map(|(i, &x)| if allowed(i) { x } else { f64::NEG_INFINITY })
        .collect()
}

/// Generates one DAG. The result always has start and end nodes; in
/// constrained edge mode it is valid by construction.
pub fn sample_dag<R: Rng + ?Sized>(
    ckpt: &ModelCheckpoint,
    net: &Network,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<SampledDag, SamplerError> {
    config.validate(ckpt)?;
    let n = config.num_qubits;
    let set = GateSet::new(ckpt.gateset_id());
    let schedule = &ckpt.schedule;
    let steps = schedule.total_steps();
    let num_gates = set.len();
    let kw = wire_vocab_size(n);
    let max_q = ckpt.config.max_qubits;
    let label = draw_label(ckpt, config, rng);

    let mut dag = CircuitDag {
        num_qubits: n,
        gateset_id: set.id,
        nodes: vec![DagNode::vstart()],
        edges: Vec::new(),
    };
    let mut frontier = vec![0usize; n];
    let perm = match config.mode {
        WireMode::WireFree => initial_wire_order(n, rng),
        WireMode::WireHead => (0..n).collect(),
    };
    let gate_ok = |g: usize| set.gates()[g].arity <= n;
    let mut truncated = true;

    for layer in 1..=config.max_layers {
        let graph = GraphInput::from_dag(&dag, usize::MAX, label, max_q);
        let mut tape = Tape::new(&ckpt.params);
        let enc = net.encode(&mut tape, &graph);
        let size_logits = net.size_logits(&mut tape, &enc);
        let probs = softmax_checked(&masked(&tape.value(size_logits).data, |c| c <= n))
            .expect("finite size logits");
        let s = sample_categorical(&probs, rng);
        if s == 0 {
            truncated = false;
            break;
        }

        // reverse-diffuse gate types and wire assignments
        let mut gates: Vec<usize> = (0..s).map(|_| rng.random_range(0..num_gates)).collect();
        let mut wires: Vec<usize> = (0..s).map(|_| rng.random_range(0..kw)).collect();
        for t in (2..=steps).rev() {
            let (gl, wl) = net.node_logits(&mut tape, &enc, t, &gates, &wires);
            let (gl, wl) = (tape.value(gl).clone(), tape.value(wl).clone());
            for i in 0..s {
                let g_logits = masked(gl.row(i), gate_ok);
                gates[i] = posterior_step(
                    &g_logits,
                    CategoricalVar::new(num_gates, gates[i]),
                    t,
                    schedule,
                    rng,
                )
                .expect("valid step")
                .value();
                let w_logits = &wl.row(i)[..kw];
                wires[i] = posterior_step(
                    w_logits,
                    CategoricalVar::new(kw, wires[i]),
                    t,
                    schedule,
                    rng,
                )
                .expect("valid step")
                .value();
            }
        }
        // final step: resolve nodes in order so arities fit and wires stay disjoint
        let (gl, wl) = net.node_logits(&mut tape, &enc, 1, &gates, &wires);
        let (gl, wl) = (tape.value(gl).clone(), tape.value(wl).clone());
        let mut free = vec![true; n];
        let mut capacity = n;
        let mut new_nodes: Vec<(usize, Vec<usize>)> = Vec::with_capacity(s);
        for i in 0..s {
            let later = s - i - 1;
            let fits = |g: usize| gate_ok(g) && set.gates()[g].arity + later <= capacity;
            let probs = softmax_checked(&masked(gl.row(i), fits)).expect("some gate fits");
            let g = sample_categorical(&probs, rng);
            let arity = set.gates()[g].arity;
            let ws = match config.mode {
                WireMode::WireHead => {
                    let ok = |c: usize| {
                        let t = wire_tuple(c);
                        t.len() == arity && t.iter().all(|&w| free[w])
                    };
                    let probs =
                        softmax_checked(&masked(&wl.row(i)[..kw], ok)).expect("free wires exist");
                    wire_tuple(sample_categorical(&probs, rng))
                }
                WireMode::WireFree => {
                    let mut slots: Vec<usize> = (0..n).filter(|&k| free[perm[k]]).collect();
                    slots.shuffle(rng);
                    slots[..arity].iter().map(|&k| perm[k]).collect()
                }
            };
            for &w in &ws {
                free[w] = false;
            }
            capacity -= arity;
            gates[i] = g;
            wires[i] = wire_class(&ws);
            new_nodes.push((g, ws));
        }

        match config.edge_mode {
            EdgeMode::Constrained => {
                for (g, ws) in new_nodes {
                    let id = dag.nodes.len();
                    for &w in &ws {
                        dag.edges.push(DagEdge {
                            src: frontier[w],
                            dst: id,
                            wire: w,
                        });
                        frontier[w] = id;
                    }
                    dag.nodes.push(gate_node(&set, g, ws, layer, rng));
                }
            }
            EdgeMode::Free => {
                let p = graph.len();
                let mut bits: Vec<usize> = (0..s * p).map(|_| rng.random_range(0..2)).collect();
                for t in (1..=steps).rev() {
                    let el = net.edge_logits(&mut tape, &enc, &graph, t, &gates, &wires, &bits);
                    let el = tape.value(el).clone();
                    for (r, b) in bits.iter_mut().enumerate() {
                        *b =
                            posterior_step(el.row(r), CategoricalVar::new(2, *b), t, schedule, rng)
                                .expect("valid step")
                                .value();
                    }
                }
                let first = dag.nodes.len();
                for (i, (g, ws)) in new_nodes.into_iter().enumerate() {
                    let id = first + i;
                    for (j, &prior) in graph.node_ids.iter().enumerate() {
                        if bits[i * p + j] == 0 {
                            continue;
                        }
                        for w in edge_labels(&ws, &graph.wires[j], graph.open.row(j)) {
                            dag.edges.push(DagEdge {
                                src: prior,
                                dst: id,
                                wire: w,
                            });
                        }
                    }
                    for &w in &ws {
                        frontier[w] = id;
                    }
                    dag.nodes.push(gate_node(&set, g, ws, layer, rng));
                }
            }
        }
    }

    let end = dag.nodes.len();
    let end_layer = 1 + dag.nodes.iter().map(|x| x.layer).max().unwrap_or(0);
    for (w, &src) in frontier.iter().enumerate() {
        dag.edges.push(DagEdge {
            src,
            dst: end,
            wire: w,
        });
    }
    dag.nodes.push(DagNode::vend(end_layer));
    Ok(SampledDag {
        dag,
        truncated,
        label,
    })
}

/// Labels for a predicted edge `prior -> new`: the new node's wires on which
/// the prior node is open; failing that, the wires they share; failing that,
/// the new node's first wire (a deliberately invalid edge).
fn edge_labels(new_wires: &[usize], prior_wires: &[usize], prior_open: &[f64]) -> Vec<usize> {
    let open: Vec<usize> = new_wires
        .iter()
        .copied()
        .filter(|&w| prior_open[w] > 0.0)
        .collect();
    if !open.is_empty() {
        return open;
    }
    let shared: Vec<usize> = new_wires
        .iter()
        .copied()
        .filter(|w| prior_wires.contains(w))
        .collect();
    if !shared.is_empty() {
        return shared;
    }
    vec![new_wires[0]]
}

fn gate_node<R: Rng + ?Sized>(
    set: &GateSet,
    g: usize,
    wires: Vec<usize>,
    layer: usize,
    rng: &mut R,
) -> DagNode {
    let params = (0..set.gates()[g].num_params)
        .map(|_| quantize_param(rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    DagNode::gate(g, wires, params, layer)
}

/// Draws `count` samples, sample `i` using stream `i` of the configured
/// seed; the result does not depend on thread scheduling.
pub fn sample_circuits(
    ckpt: &ModelCheckpoint,
    config: &SamplerConfig,
    count: usize,
) -> Result<Vec<SampledCircuit>, SamplerError> {
    config.validate(ckpt)?;
    let net = ckpt.network();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(config.seed, i as u64);
            let s = sample_dag(ckpt, &net, config, &mut rng)?;
            let report = s.dag.validate();
            let circuit = if report.is_valid() {
                s.dag.to_circuit().ok()
            } else {
                None
            };
            Ok(SampledCircuit {
                dag: s.dag,
                circuit,
                report,
                truncated: s.truncated,
            })
        })
        .collect()
}
