//! Exhaustive wire-labelled DAG isomorphism, used as an oracle for
//! `canonical_form`. Shared by the core tests and the acceptance suite.

use std::collections::HashMap;

use qfusion_core::circuit_ir::{Circuit, CircuitDag, DagEdge, DagNode};

fn same_node(a: &DagNode, b: &DagNode) -> bool {
    let micro = |ps: &[f64]| {
        ps.iter()
            .map(|p| (p * 1e6).round() as i64)
            .collect::<Vec<_>>()
    };
    a.kind == b.kind
        && a.gate_index == b.gate_index
        && a.wires == b.wires
        && micro(&a.params) == micro(&b.params)
}

fn edge_counts(edges: &[DagEdge]) -> HashMap<(usize, usize, usize), usize> {
    let mut m = HashMap::new();
    for e in edges {
        *m.entry((e.src, e.dst, e.wire)).or_insert(0) += 1;
    }
    m
}

/// True when some bijection of nodes preserves node attributes (gate, wires,
/// parameters) and maps the labelled edge multiset of `a` onto that of `b`.
/// Backtracking over every attribute-compatible assignment.
pub fn dags_isomorphic(a: &CircuitDag, b: &CircuitDag) -> bool {
    if a.num_qubits != b.num_qubits
        || a.gateset_id != b.gateset_id
        || a.nodes.len() != b.nodes.len()
        || a.edges.len() != b.edges.len()
    {
        return false;
    }
    let ea = edge_counts(&a.edges);
    let eb = edge_counts(&b.edges);
    let mut map = vec![usize::MAX; a.nodes.len()];
    let mut used = vec![false; b.nodes.len()];
    search(a, b, &ea, &eb, 0, &mut map, &mut used)
}

fn search(
    a: &CircuitDag,
    b: &CircuitDag,
    ea: &HashMap<(usize, usize, usize), usize>,
    eb: &HashMap<(usize, usize, usize), usize>,
    i: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if i == a.nodes.len() {
        return ea
            .iter()
            .all(|(&(s, d, w), &c)| eb.get(&(map[s], map[d], w)) == Some(&c));
    }
    for j in 0..b.nodes.len() {
        if used[j] || !same_node(&a.nodes[i], &b.nodes[j]) {
            continue;
        }
        map[i] = j;
        // prune: edges between already-mapped nodes must agree
        let consistent = ea.iter().all(|(&(s, d, w), &c)| {
            if s > i || d > i {
                return true;
            }
            eb.get(&(map[s], map[d], w)) == Some(&c)
        });
        if consistent {
            used[j] = true;
            if search(a, b, ea, eb, i + 1, map, used) {
                return true;
            }
            used[j] = false;
        }
        map[i] = usize::MAX;
    }
    false
}

/// Pairs `(i, j)` where the isomorphism oracle and equality of
/// `canonical_form` disagree; every pair is checked.
pub fn canonical_disagreements(circuits: &[Circuit]) -> Vec<(usize, usize)> {
    let keys: Vec<String> = circuits
        .iter()
        .map(qfusion_core::circuit_ir::canonical_form)
        .collect();
    let dags: Vec<CircuitDag> = circuits.iter().map(CircuitDag::from_circuit).collect();
    let mut out = Vec::new();
    for i in 0..circuits.len() {
        for j in i + 1..circuits.len() {
            if dags_isomorphic(&dags[i], &dags[j]) != (keys[i] == keys[j]) {
                out.push((i, j));
            }
        }
    }
    out
}
