//! Graph inputs for the encoder and the wire-assignment vocabulary.

use super::tape::Tensor;
use crate::circuit_ir::{CircuitDag, NodeKind};
use crate::simulator::CircuitLabel;

/// Number of wire-assignment classes on `n` qubits: `n` singles plus
/// `n(n-1)` ordered pairs.
pub fn wire_vocab_size(n: usize) -> usize {
    n * n
}

/// Class of a 1- or 2-wire assignment. Classes are nested so that the
/// assignments available on `n` qubits are exactly `0..n*n`: qubit `m`
/// contributes `single(m)` followed by `(i, m), (m, i)` for each `i < m`.
pub fn wire_class(wires: &[usize]) -> usize {
    match *wires {
        [w] => w * w,
        [a, b] => {
            assert_ne!(a, b, "repeated wire");
            let (m, i) = (a.max(b), a.min(b));
            m * m + 1 + 2 * i + usize::from(a == m)
        }
        _ => panic!("wire assignments have one or two wires"),
    }
}

pub fn wire_tuple(class: usize) -> Vec<usize> {
    let mut m = 0;
    while (m + 1) * (m + 1) <= class {
        m += 1;
    }
    let r = class - m * m;
    if r == 0 {
        vec![m]
    } else {
        let i = (r - 1) / 2;
        if (r - 1).is_multiple_of(2) {
            vec![i, m]
        } else {
            vec![m, i]
        }
    }
}

/// `[sin(x w_0), cos(x w_0), sin(x w_1), ...]` with geometric frequencies.
pub fn sinusoidal(x: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let half = dim.div_ceil(2).max(1);
    for i in 0..dim {
        let freq = 1.0 / 10000f64.powf((i / 2) as f64 / half as f64);
        out.push(if i % 2 == 0 {
            (x * freq).sin()
        } else {
            (x * freq).cos()
        });
    }
    out
}

/// Encoder view of a DAG prefix: all non-terminal nodes below a layer
/// cutoff and the edges among them.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub num_qubits: usize,
    /// Gate index, or the start token `gate_set.len()`.
    pub tokens: Vec<usize>,
    /// Wire class, or the "none" class `max_qubits^2` for the start node.
    pub wire_classes: Vec<usize>,
    pub layers: Vec<usize>,
    pub wires: Vec<Vec<usize>>,
    /// DAG node id of each included node.
    pub node_ids: Vec<usize>,
    /// `adj_in[v][u]` = number of edges `u -> v`.
    pub adj_in: Tensor,
    pub adj_out: Tensor,
    /// Per-node counts of incoming / outgoing edge labels (one column per wire).
    pub labels_in: Tensor,
    pub labels_out: Tensor,
    /// `open[p][w] = 1` when `p` is the latest node on wire `w`.
    pub open: Tensor,
    /// `recent[w] = 1` when wire `w`'s latest node sits in the deepest layer.
    pub recent: Vec<f64>,
    pub label: CircuitLabel,
}

impl GraphInput {
    /// Prefix of `dag` restricted to nodes with `layer < cutoff`; terminal
    /// nodes are never included. `max_qubits` fixes the feature widths.
    pub fn from_dag(
        dag: &CircuitDag,
        cutoff: usize,
        label: CircuitLabel,
        max_qubits: usize,
    ) -> GraphInput {
        assert!(dag.num_qubits <= max_qubits);
        let start_token = dag.gateset_id.gate_set().len();
        let none_class = max_qubits * max_qubits;
        let mut index = vec![usize::MAX; dag.nodes.len()];
        let mut g = GraphInput {
            num_qubits: dag.num_qubits,
            tokens: Vec::new(),
            wire_classes: Vec::new(),
            layers: Vec::new(),
            wires: Vec::new(),
            node_ids: Vec::new(),
            adj_in: Tensor::zeros(0, 0),
            adj_out: Tensor::zeros(0, 0),
            labels_in: Tensor::zeros(0, 0),
            labels_out: Tensor::zeros(0, 0),
            open: Tensor::zeros(0, 0),
            recent: vec![0.0; max_qubits],
            label,
        };
        for (i, node) in dag.nodes.iter().enumerate() {
            if node.kind == NodeKind::VEnd || node.layer >= cutoff {
                continue;
            }
            index[i] = g.tokens.len();
            g.node_ids.push(i);
            g.layers.push(node.layer);
            match node.kind {
                NodeKind::Gate => {
                    g.tokens.push(node.gate_index.unwrap_or(0));
                    g.wire_classes.push(wire_class(&node.wires));
                    g.wires.push(node.wires.clone());
                }
                _ => {
                    g.tokens.push(start_token);
                    g.wire_classes.push(none_class);
                    g.wires.push((0..dag.num_qubits).collect());
                }
            }
        }
        assert!(!g.tokens.is_empty(), "prefix has no start node");
        let n = g.tokens.len();
        g.adj_in = Tensor::zeros(n, n);
        g.labels_in = Tensor::zeros(n, max_qubits);
        g.labels_out = Tensor::zeros(n, max_qubits);
        for e in &dag.edges {
            let (Some(&s), Some(&d)) = (index.get(e.src), index.get(e.dst)) else {
                continue;
            };
            if s == usize::MAX || d == usize::MAX || e.wire >= max_qubits {
                continue;
            }
            g.adj_in.data[d * n + s] += 1.0;
            g.labels_in.data[d * max_qubits + e.wire] += 1.0;
            g.labels_out.data[s * max_qubits + e.wire] += 1.0;
        }
        g.adj_out = Tensor::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                g.adj_out.data[c * n + r] = g.adj_in.data[r * n + c];
            }
        }
        g.open = Tensor::zeros(n, max_qubits);
        let deepest = g.layers.iter().copied().max().unwrap_or(0);
        for w in 0..dag.num_qubits {
            let latest = (0..n)
                .filter(|&p| g.wires[p].contains(&w))
                .max_by_key(|&p| (g.layers[p], p));
            if let Some(p) = latest {
                g.open.data[p * max_qubits + w] = 1.0;
                if g.layers[p] == deepest {
                    g.recent[w] = 1.0;
                }
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Layer positional encodings, one row per node.
    pub fn layer_encoding(&self, dim: usize) -> Tensor {
        let data = self
            .layers
            .iter()
            .flat_map(|&l| sinusoidal(l as f64, dim))
            .collect();
        Tensor::from_vec(self.len(), dim, data)
    }
}
