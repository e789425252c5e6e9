//! Attributed DAG form of a circuit.
//!
//! Node 0 of a converted circuit is the virtual start node, gate nodes follow
//! in circuit order, and the virtual end node comes last. Every edge carries
//! the qubit (wire) it transports, so each qubit traces one directed path from
//! the start node to the end node.

use std::collections::VecDeque;
use std::fmt;

use super::{Circuit, CircuitError, GateInstance, GateSetId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    VStart,
    VEnd,
    Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagNode {
    pub kind: NodeKind,
    pub gate_index: Option<usize>,
    pub wires: Vec<usize>,
    pub params: Vec<f64>,
    pub layer: usize,
}

impl DagNode {
    pub fn vstart() -> Self {
        DagNode {
            kind: NodeKind::VStart,
            gate_index: None,
            wires: Vec::new(),
            params: Vec::new(),
            layer: 0,
        }
    }

    pub fn vend(layer: usize) -> Self {
        DagNode {
            kind: NodeKind::VEnd,
            gate_index: None,
            wires: Vec::new(),
            params: Vec::new(),
            layer,
        }
    }

    pub fn gate(gate_index: usize, wires: Vec<usize>, params: Vec<f64>, layer: usize) -> Self {
        DagNode {
            kind: NodeKind::Gate,
            gate_index: Some(gate_index),
            wires,
            params,
            layer,
        }
    }

    pub fn is_gate(&self) -> bool {
        self.kind == NodeKind::Gate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DagEdge {
    pub src: usize,
    pub dst: usize,
    pub wire: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDag {
    pub num_qubits: usize,
    pub gateset_id: GateSetId,
    pub nodes: Vec<DagNode>,
    pub edges: Vec<DagEdge>,
}

impl CircuitDag {
    /// As-soon-as-possible layering: a gate sits one layer after the latest
    /// gate on any of its wires.
    pub fn from_circuit(circuit: &Circuit) -> CircuitDag {
        let n = circuit.num_qubits();
        let mut nodes = Vec::with_capacity(circuit.len() + 2);
        let mut edges = Vec::with_capacity(2 * circuit.len() + n);
        nodes.push(DagNode::vstart());
        let mut last = vec![0usize; n];
        for g in circuit.gates() {
            let id = nodes.len();
            let layer = 1 + g
                .wires
                .iter()
                .map(|&w| nodes[last[w]].layer)
                .max()
                .unwrap_or(0);
            for &w in &g.wires {
                edges.push(DagEdge {
                    src: last[w],
                    dst: id,
                    wire: w,
                });
                last[w] = id;
            }
            nodes.push(DagNode::gate(
                g.gate_index,
                g.wires.clone(),
                g.params.clone(),
                layer,
            ));
        }
        let end = nodes.len();
        let end_layer = 1 + nodes.iter().map(|x| x.layer).max().unwrap_or(0);
        for (w, &src) in last.iter().enumerate() {
            edges.push(DagEdge {
                src,
                dst: end,
                wire: w,
            });
        }
        nodes.push(DagNode::vend(end_layer));
        CircuitDag {
            num_qubits: n,
            gateset_id: circuit.gateset_id(),
            nodes,
            edges,
        }
    }

    /// Gates in ascending layer, ties broken by node id.
    pub fn to_circuit(&self) -> Result<Circuit, CircuitError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(CircuitError::InvalidDag(report));
        }
        let mut order: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_gate())
            .collect();
        order.sort_by_key(|&i| (self.nodes[i].layer, i));
        let gates = order
            .into_iter()
            .map(|i| {
                let node = &self.nodes[i];
                GateInstance::new(
                    node.gate_index.unwrap(),
                    node.wires.clone(),
                    node.params.clone(),
                )
            })
            .collect();
        Circuit::new(self.num_qubits, self.gateset_id, gates)
    }

    pub fn gate_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_gate()).count()
    }

    /// Largest layer index among gate nodes (0 for a gate-free DAG).
    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.is_gate())
            .map(|n| n.layer)
            .max()
            .unwrap_or(0)
    }

    /// Gate node ids grouped by layer, for layers `1..=depth`.
    pub fn gate_layers(&self) -> Vec<Vec<usize>> {
        let mut layers = vec![Vec::new(); self.depth()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_gate() && node.layer >= 1 {
                layers[node.layer - 1].push(i);
            }
        }
        layers
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dag(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    EdgeEndpoint,
    NodeAttributes,
    Cycle,
    LayerOrder,
    VirtualNodes,
    WirePath,
    Arity,
    WireLabel,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::EdgeEndpoint => "edge_endpoint",
            Rule::NodeAttributes => "node_attributes",
            Rule::Cycle => "cycle",
            Rule::LayerOrder => "layer_order",
            Rule::VirtualNodes => "virtual_nodes",
            Rule::WirePath => "wire_path",
            Rule::Arity => "arity",
            Rule::WireLabel => "wire_label",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Graph,
    Node(usize),
    Edge(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    /// Distinct rule ids, in check order.
    pub fn rules(&self) -> Vec<Rule> {
        let mut rules: Vec<Rule> = self.violations.iter().map(|v| v.rule).collect();
        rules.sort();
        rules.dedup();
        rules
    }

    fn push(&mut self, rule: Rule, location: Location, message: String) {
        self.violations.push(Violation {
            rule,
            location,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.rule.as_str(), v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural rule of a circuit DAG and reports each failure.
/// Accepts arbitrary node and edge lists.
pub fn validate_dag(dag: &CircuitDag) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n_nodes = dag.nodes.len();
    let set = dag.gateset_id.gate_set();

    let mut good_edges = Vec::with_capacity(dag.edges.len());
    for (e, edge) in dag.edges.iter().enumerate() {
        if edge.src >= n_nodes || edge.dst >= n_nodes {
            report.push(
                Rule::EdgeEndpoint,
                Location::Edge(e),
                format!("edge {e} references a missing node"),
            );
        } else {
            good_edges.push(e);
        }
    }

    for (i, node) in dag.nodes.iter().enumerate() {
        match node.kind {
            NodeKind::Gate => match node.gate_index.and_then(|g| set.get(g)) {
                None => report.push(
                    Rule::NodeAttributes,
                    Location::Node(i),
                    format!("node {i} has no valid gate"),
                ),
                Some(def) => {
                    let distinct = node
                        .wires
                        .iter()
                        .enumerate()
                        .all(|(k, w)| !node.wires[..k].contains(w));
                    if node.wires.len() != def.arity
                        || !distinct
                        || node.wires.iter().any(|&w| w >= dag.num_qubits)
                    {
                        report.push(
                            Rule::NodeAttributes,
                            Location::Node(i),
                            format!("node {i} ({}) has wires {:?}", def.name, node.wires),
                        );
                    }
                    if node.params.len() != def.num_params {
                        report.push(
                            Rule::NodeAttributes,
                            Location::Node(i),
                            format!(
                                "node {i} ({}) has {} parameters",
                                def.name,
                                node.params.len()
                            ),
                        );
                    }
                }
            },
            NodeKind::VStart | NodeKind::VEnd => {
                if node.gate_index.is_some() || !node.wires.is_empty() {
                    report.push(
                        Rule::NodeAttributes,
                        Location::Node(i),
                        format!("virtual node {i} carries a gate"),
                    );
                }
            }
        }
    }

    // acyclicity (Kahn)
    let mut indeg = vec![0usize; n_nodes];
    let mut succ = vec![Vec::new(); n_nodes];
    for &e in &good_edges {
        let edge = dag.edges[e];
        indeg[edge.dst] += 1;
        succ[edge.src].push(edge.dst);
    }
    let mut queue: VecDeque<usize> = (0..n_nodes).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    let mut remaining = indeg.clone();
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &s in &succ[v] {
            remaining[s] -= 1;
            if remaining[s] == 0 {
                queue.push_back(s);
            }
        }
    }
    if seen != n_nodes {
        report.push(
            Rule::Cycle,
            Location::Graph,
            format!("{} nodes lie on or behind a cycle", n_nodes - seen),
        );
    }

    for &e in &good_edges {
        let edge = dag.edges[e];
        let (a, b) = (dag.nodes[edge.src].layer, dag.nodes[edge.dst].layer);
        if b <= a {
            report.push(
                Rule::LayerOrder,
                Location::Edge(e),
                format!("layer order: edge {e} goes from layer {a} to layer {b}"),
            );
        }
    }

    let starts: Vec<usize> = (0..n_nodes)
        .filter(|&i| dag.nodes[i].kind == NodeKind::VStart)
        .collect();
    let ends: Vec<usize> = (0..n_nodes)
        .filter(|&i| dag.nodes[i].kind == NodeKind::VEnd)
        .collect();
    if starts.len() != 1 {
        report.push(
            Rule::VirtualNodes,
            Location::Graph,
            format!("{} virtual start nodes", starts.len()),
        );
    }
    if ends.len() != 1 {
        report.push(
            Rule::VirtualNodes,
            Location::Graph,
            format!("{} virtual end nodes", ends.len()),
        );
    }
    if let Some(&s) = starts.first() {
        if dag.nodes[s].layer != 0 {
            report.push(
                Rule::LayerOrder,
                Location::Node(s),
                "layer order: start node is not at layer 0".into(),
            );
        }
    }
    if let Some(&t) = ends.first() {
        if dag.nodes.iter().any(|x| x.layer > dag.nodes[t].layer) {
            report.push(
                Rule::LayerOrder,
                Location::Node(t),
                "layer order: end node is not the final layer".into(),
            );
        }
    }

    if starts.len() == 1 && ends.len() == 1 {
        check_wire_paths(dag, &good_edges, starts[0], ends[0], &mut report);
    }

    for (i, node) in dag.nodes.iter().enumerate() {
        let Some(def) = node
            .gate_index
            .and_then(|g| set.get(g))
            .filter(|_| node.is_gate())
        else {
            continue;
        };
        let din = good_edges
            .iter()
            .filter(|&&e| dag.edges[e].dst == i)
            .count();
        let dout = good_edges
            .iter()
            .filter(|&&e| dag.edges[e].src == i)
            .count();
        if din != def.arity || dout != def.arity {
            report.push(
                Rule::Arity,
                Location::Node(i),
                format!("arity mismatch: node {i} ({}) has in-degree {din}, out-degree {dout}, arity {}", def.name, def.arity),
            );
        }
    }

    for &e in &good_edges {
        let edge = dag.edges[e];
        if edge.wire >= dag.num_qubits {
            report.push(
                Rule::WireLabel,
                Location::Edge(e),
                format!("edge {e} labeled with missing wire {}", edge.wire),
            );
            continue;
        }
        for end in [edge.src, edge.dst] {
            let node = &dag.nodes[end];
            if node.is_gate() && !node.wires.contains(&edge.wire) {
                report.push(
                    Rule::WireLabel,
                    Location::Edge(e),
                    format!(
                        "edge {e} labeled {} touches node {end} acting on {:?}",
                        edge.wire, node.wires
                    ),
                );
            }
        }
    }

    report
}

fn check_wire_paths(
    dag: &CircuitDag,
    good_edges: &[usize],
    start: usize,
    end: usize,
    report: &mut ValidationReport,
) {
    let n_nodes = dag.nodes.len();
    for w in 0..dag.num_qubits {
        let labeled: Vec<usize> = good_edges
            .iter()
            .copied()
            .filter(|&e| dag.edges[e].wire == w)
            .collect();
        let mut out_w = vec![Vec::new(); n_nodes];
        let mut in_count = vec![0usize; n_nodes];
        for &e in &labeled {
            out_w[dag.edges[e].src].push(e);
            in_count[dag.edges[e].dst] += 1;
        }
        let mut on_path = vec![false; n_nodes];
        let mut used = 0usize;
        let mut cur = start;
        on_path[cur] = true;
        let mut broken = false;
        while cur != end {
            if out_w[cur].len() != 1 {
                report.push(
                    Rule::WirePath,
                    Location::Node(cur),
                    format!(
                        "wire {w}: node {cur} has {} outgoing edges on this wire",
                        out_w[cur].len()
                    ),
                );
                broken = true;
                break;
            }
            let next = dag.edges[out_w[cur][0]].dst;
            used += 1;
            if on_path[next] {
                report.push(
                    Rule::WirePath,
                    Location::Node(next),
                    format!("wire {w}: path revisits node {next}"),
                );
                broken = true;
                break;
            }
            if in_count[next] != 1 {
                report.push(
                    Rule::WirePath,
                    Location::Node(next),
                    format!(
                        "wire {w}: node {next} has {} incoming edges on this wire",
                        in_count[next]
                    ),
                );
            }
            on_path[next] = true;
            cur = next;
        }
        if !broken && used != labeled.len() {
            report.push(
                Rule::WirePath,
                Location::Graph,
                format!(
                    "wire {w}: {} labeled edges lie off the start-to-end path",
                    labeled.len() - used
                ),
            );
        }
        for (i, node) in dag.nodes.iter().enumerate() {
            if node.is_gate() && node.wires.contains(&w) && !on_path[i] && !broken {
                report.push(
                    Rule::WirePath,
                    Location::Node(i),
                    format!("wire {w}: node {i} is not on the wire's path"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> Circuit {
        Circuit::from_names(
            2,
            GateSetId::Custom22,
            &[
                ("X", &[0], &[]),
                ("TDG", &[1], &[]),
                ("H", &[1], &[]),
                ("CX", &[0, 1], &[]),
                ("SDG", &[1], &[]),
                ("ECR", &[0, 1], &[]),
                ("TDG", &[0], &[]),
                ("CX", &[1, 0], &[]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_gate_dag() {
        let c = Circuit::from_names(1, GateSetId::Custom22, &[("H", &[0], &[])]).unwrap();
        let d = CircuitDag::from_circuit(&c);
        assert_eq!(d.nodes.len(), 3);
        assert_eq!(d.nodes[1].layer, 1);
        assert_eq!(
            d.edges,
            vec![
                DagEdge {
                    src: 0,
                    dst: 1,
                    wire: 0
                },
                DagEdge {
                    src: 1,
                    dst: 2,
                    wire: 0
                }
            ]
        );
        assert_eq!(d.to_circuit().unwrap(), c);
    }

    #[test]
    fn empty_circuit_dag() {
        let c = Circuit::empty(2, GateSetId::Custom22).unwrap();
        let d = CircuitDag::from_circuit(&c);
        assert_eq!(d.nodes.len(), 2);
        assert_eq!(
            d.edges,
            vec![
                DagEdge {
                    src: 0,
                    dst: 1,
                    wire: 0
                },
                DagEdge {
                    src: 0,
                    dst: 1,
                    wire: 1
                }
            ]
        );
        assert!(d.validate().is_valid());
        assert_eq!(d.to_circuit().unwrap(), c);
    }

    #[test]
    fn figure_three_layers_and_paths() {
        let c = fig3();
        let d = CircuitDag::from_circuit(&c);
        assert!(d.validate().is_valid());
        let layers: Vec<usize> = d.nodes[1..9].iter().map(|n| n.layer).collect();
        assert_eq!(layers, vec![1, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(d.nodes[9].layer, 8);
        let back = d.to_circuit().unwrap();
        assert_eq!(back.wire_sequences(), c.wire_sequences());
    }

    #[test]
    fn arity_violation() {
        let mut d = CircuitDag::from_circuit(&fig3());
        // drop the wire-1 edge into the first CX (node 4)
        let pos = d
            .edges
            .iter()
            .position(|e| e.dst == 4 && e.wire == 1)
            .unwrap();
        d.edges.remove(pos);
        let r = d.validate();
        assert!(r.has(Rule::Arity));
        assert!(r
            .violations
            .iter()
            .any(|v| v.message.contains("arity mismatch")));
        assert!(matches!(d.to_circuit(), Err(CircuitError::InvalidDag(_))));
    }

    #[test]
    fn layer_order_violation() {
        let mut d = CircuitDag::from_circuit(&fig3());
        d.nodes[2].layer = 5;
        let r = d.validate();
        assert!(r.has(Rule::LayerOrder));
        assert!(r
            .violations
            .iter()
            .any(|v| v.message.contains("layer order")));
    }

    #[test]
    fn cycle_and_virtual_node_rules() {
        let mut d = CircuitDag::from_circuit(&fig3());
        d.edges.push(DagEdge {
            src: 8,
            dst: 1,
            wire: 0,
        });
        assert!(d.validate().has(Rule::Cycle));

        let mut d = CircuitDag::from_circuit(&fig3());
        d.nodes.push(DagNode::vstart());
        assert!(d.validate().has(Rule::VirtualNodes));

        let mut d = CircuitDag::from_circuit(&fig3());
        d.edges.push(DagEdge {
            src: 0,
            dst: 99,
            wire: 0,
        });
        assert!(d.validate().has(Rule::EdgeEndpoint));
    }

    #[test]
    fn relabeled_edge_breaks_path() {
        let mut d = CircuitDag::from_circuit(&fig3());
        d.edges[0].wire = 1;
        let r = d.validate();
        assert!(!r.is_valid());
        assert!(r.has(Rule::WirePath) || r.has(Rule::WireLabel));
    }
}
