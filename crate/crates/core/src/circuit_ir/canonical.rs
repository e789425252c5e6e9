use std::fmt::Write as _;

use super::{Circuit, CircuitDag};

/// Order-insensitive identity key for uniqueness counting.
///
/// The key lists the register size and then, layer by layer of the
/// as-soon-as-possible layering, the sorted multiset of
/// `(gate name, wires, params rounded to 6 decimals)`. Gates in the same layer
/// act on disjoint wires, so reordering them never changes the key, while
/// reordering gates on a shared wire moves them to different layers.
pub fn canonical_form(circuit: &Circuit) -> String {
    let dag = CircuitDag::from_circuit(circuit);
    let set = circuit.gate_set();
    let mut key = format!("n={}", circuit.num_qubits());
    for layer in dag.gate_layers() {
        let mut items: Vec<String> = layer
            .iter()
            .map(|&i| {
                let node = &dag.nodes[i];
                let mut s = set.get(node.gate_index.unwrap()).unwrap().name.to_string();
                s.push('(');
                for (k, w) in node.wires.iter().enumerate() {
                    if k > 0 {
                        s.push(',');
                    }
                    write!(s, "{w}").unwrap();
                }
                s.push(')');
                for p in &node.params {
                    write!(s, "[{}]", round6(*p)).unwrap();
                }
                s
            })
            .collect();
        items.sort();
        key.push('|');
        key.push_str(&items.join(" "));
    }
    key
}

fn round6(p: f64) -> String {
    let s = format!("{p:.6}");
    // -0.000000 and 0.000000 name the same angle
    if s.trim_start_matches('-')
        .chars()
        .all(|c| c == '0' || c == '.')
    {
        "0.000000".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit_ir::GateSetId;

    #[test]
    fn parallel_gates_commute_in_key() {
        let a = Circuit::from_names(
            2,
            GateSetId::Custom22,
            &[("H", &[0], &[]), ("X", &[1], &[])],
        )
        .unwrap();
        let b = Circuit::from_names(
            2,
            GateSetId::Custom22,
            &[("X", &[1], &[]), ("H", &[0], &[])],
        )
        .unwrap();
        assert_eq!(canonical_form(&a), canonical_form(&b));
    }

    #[test]
    fn same_wire_order_matters() {
        let a = Circuit::from_names(
            2,
            GateSetId::Custom22,
            &[("H", &[0], &[]), ("X", &[0], &[])],
        )
        .unwrap();
        let b = Circuit::from_names(
            2,
            GateSetId::Custom22,
            &[("X", &[0], &[]), ("H", &[0], &[])],
        )
        .unwrap();
        assert_ne!(canonical_form(&a), canonical_form(&b));
    }

    #[test]
    fn params_rounded_and_register_size_counted() {
        let a = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[1.0000001])]).unwrap();
        let b = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[1.0000002])]).unwrap();
        let c = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[1.00001])]).unwrap();
        assert_eq!(canonical_form(&a), canonical_form(&b));
        assert_ne!(canonical_form(&a), canonical_form(&c));
        let z1 = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[-1e-9])]).unwrap();
        let z2 = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[1e-9])]).unwrap();
        assert_eq!(canonical_form(&z1), canonical_form(&z2));
        let e1 = Circuit::empty(1, GateSetId::HeronP).unwrap();
        let e2 = Circuit::empty(2, GateSetId::HeronP).unwrap();
        assert_ne!(canonical_form(&e1), canonical_form(&e2));
    }
}
