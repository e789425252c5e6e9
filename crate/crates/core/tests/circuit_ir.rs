mod support;

use proptest::prelude::*;
use qfusion_core::circuit_ir::*;
use qfusion_core::dataset::{distinct_wires, generate_random_circuit, record_rng, DatasetSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::iso::{canonical_disagreements, dags_isomorphic};

fn random_circuits(
    gateset: GateSetId,
    qubits: Vec<usize>,
    gates: usize,
    count: usize,
    seed: u64,
) -> Vec<Circuit> {
    let spec = DatasetSpec::new(gateset, qubits, gates, count, seed);
    (0..count as u64)
        .map(|i| generate_random_circuit(&spec, &mut record_rng(seed, i)).unwrap())
        .collect()
}

/// Per-wire `(gate, wires, params)` sequences, read straight off the gate list.
/// `(gate, wires, parameter bits)` of one gate as seen from a wire.
type WireEntry = (usize, Vec<usize>, Vec<u64>);

fn wire_sequences(c: &Circuit) -> Vec<Vec<WireEntry>> {
    let mut seqs = vec![Vec::new(); c.num_qubits()];
    for g in c.gates() {
        for &w in &g.wires {
            seqs[w].push((
                g.gate_index,
                g.wires.clone(),
                g.params.iter().map(|p| p.to_bits()).collect(),
            ));
        }
    }
    seqs
}

#[test]
fn thousand_circuit_round_trip_per_gate_set() {
    for (k, gs) in GateSetId::ALL.into_iter().enumerate() {
        let mut failures = 0;
        for c in random_circuits(gs, vec![1, 2, 3, 4, 5], 12, 1000, 100 + k as u64) {
            let dag = CircuitDag::from_circuit(&c);
            let ok = validate_dag(&dag).is_valid()
                && dag
                    .to_circuit()
                    .map(|back| wire_sequences(&back) == wire_sequences(&c))
                    .unwrap_or(false);
            failures += usize::from(!ok);
        }
        assert_eq!(failures, 0, "{gs}");
    }
}

fn arb_circuit() -> impl Strategy<Value = Circuit> {
    (
        0usize..3,
        1usize..=5,
        prop::collection::vec(
            (any::<u32>(), any::<u64>(), 0.0f64..std::f64::consts::TAU),
            0..16,
        ),
    )
        .prop_map(|(s, n, raw)| {
            let gs = GateSetId::ALL[s];
            let set = gs.gate_set();
            let usable = set.available_for(n);
            let gates = raw
                .into_iter()
                .map(|(g, wseed, p)| {
                    let gi = usable[g as usize % usable.len()];
                    let def = set.get(gi).unwrap();
                    let wires = distinct_wires(&mut ChaCha8Rng::seed_from_u64(wseed), n, def.arity);
                    GateInstance::new(gi, wires, vec![p; def.num_params])
                })
                .collect();
            Circuit::new(n, gs, gates).unwrap()
        })
}

proptest! {
    #[test]
    fn round_trip_preserves_wire_sequences(c in arb_circuit()) {
        let dag = CircuitDag::from_circuit(&c);
        prop_assert!(validate_dag(&dag).is_valid());
        prop_assert_eq!(dag.nodes.len(), c.len() + 2);
        let back = dag.to_circuit().unwrap();
        prop_assert_eq!(wire_sequences(&back), wire_sequences(&c));
        prop_assert_eq!(canonical_form(&back), canonical_form(&c));
    }

    #[test]
    fn edges_respect_layers(c in arb_circuit()) {
        let dag = CircuitDag::from_circuit(&c);
        for e in &dag.edges {
            prop_assert!(dag.nodes[e.src].layer < dag.nodes[e.dst].layer);
        }
    }
}

#[test]
fn every_path_breaking_mutation_is_caught() {
    for c in random_circuits(GateSetId::Custom22, vec![2, 3, 4], 8, 60, 9) {
        let dag = CircuitDag::from_circuit(&c);
        for i in 0..dag.edges.len() {
            let mut deleted = dag.clone();
            deleted.edges.remove(i);
            assert!(!validate_dag(&deleted).is_valid());
            for w in 0..dag.num_qubits {
                if w == dag.edges[i].wire {
                    continue;
                }
                let mut relabelled = dag.clone();
                relabelled.edges[i].wire = w;
                assert!(!validate_dag(&relabelled).is_valid());
            }
        }
    }
}

/// Reorders gates by ASAP layer, shuffling within each layer.
fn shuffle_within_layers(c: &Circuit, rng: &mut ChaCha8Rng) -> Circuit {
    let dag = CircuitDag::from_circuit(c);
    let mut gates = Vec::new();
    for mut layer in dag.gate_layers() {
        layer.shuffle(rng);
        for i in layer {
            let n = &dag.nodes[i];
            gates.push(GateInstance::new(
                n.gate_index.unwrap(),
                n.wires.clone(),
                n.params.clone(),
            ));
        }
    }
    Circuit::new(c.num_qubits(), c.gateset_id(), gates).unwrap()
}

#[test]
fn canonical_form_ignores_layer_order_but_not_wire_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for c in random_circuits(GateSetId::HeronP, vec![3, 4, 5], 10, 200, 21) {
        let key = canonical_form(&c);
        assert_eq!(canonical_form(&shuffle_within_layers(&c, &mut rng)), key);

        // swap two consecutive, different gates sharing a wire
        let gates = c.gates();
        if let Some(i) = (0..gates.len().saturating_sub(1)).find(|&i| {
            gates[i] != gates[i + 1]
                && gates[i]
                    .wires
                    .iter()
                    .any(|w| gates[i + 1].wires.contains(w))
        }) {
            let mut swapped = gates.to_vec();
            swapped.swap(i, i + 1);
            let d = Circuit::new(c.num_qubits(), c.gateset_id(), swapped).unwrap();
            assert_ne!(canonical_form(&d), key);
        }
    }
}

#[test]
fn canonical_classes_match_isomorphism_oracle() {
    // a small circuit space so that collisions and commuted variants are common
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut circuits = random_circuits(GateSetId::HeronNp, vec![2, 3], 3, 150, 77);
    let variants: Vec<Circuit> = circuits[..50]
        .iter()
        .map(|c| shuffle_within_layers(c, &mut rng))
        .collect();
    circuits.extend(variants);
    assert_eq!(circuits.len(), 200);
    let bad = canonical_disagreements(&circuits);
    assert!(bad.is_empty(), "{bad:?}");
    let distinct: std::collections::HashSet<String> = circuits.iter().map(canonical_form).collect();
    assert!(distinct.len() < 150, "no collisions to test against");

    // parametric: equal up to 6 decimals are the same circuit
    let a = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[0.1234561])]).unwrap();
    let b = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[0.1234564])]).unwrap();
    let c = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[0.123457])]).unwrap();
    assert!(dags_isomorphic(
        &CircuitDag::from_circuit(&a),
        &CircuitDag::from_circuit(&b)
    ));
    assert!(canonical_disagreements(&[a, b, c]).is_empty());
}

#[test]
fn random_wire_tuples_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [[0usize; 4]; 4];
    let draws = 12_000;
    for _ in 0..draws {
        let w = distinct_wires(&mut rng, 4, 2);
        counts[w[0]][w[1]] += 1;
    }
    let expected = draws as f64 / 12.0;
    let sigma = (draws as f64 * (1.0 / 12.0) * (11.0 / 12.0)).sqrt();
    for (a, row) in counts.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            if a == b {
                assert_eq!(n, 0);
            } else {
                assert!((n as f64 - expected).abs() < 4.0 * sigma);
            }
        }
    }
}
