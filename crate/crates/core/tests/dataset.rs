use std::collections::HashSet;

use qfusion_core::circuit_ir::{canonical_form, validate_dag, CircuitDag, GateSetId};
use qfusion_core::dataset::*;
use qfusion_core::simulator::Simulator;

fn sim() -> Simulator {
    Simulator::with_max_qubits(10)
}

#[test]
fn six_thousand_two_qubit_circuits_all_valid() {
    let ds = Dataset::generate(
        &DatasetSpec::new(GateSetId::Custom22, vec![2], 8, 6000, 1),
        &sim(),
    )
    .unwrap();
    assert_eq!(ds.len(), 6000);
    for r in &ds.records {
        assert_eq!(r.circuit.len(), 8);
        assert_eq!(r.circuit.num_qubits(), 2);
        assert!(validate_dag(&CircuitDag::from_circuit(&r.circuit)).is_valid());
    }
    // distinct seeds rarely coincide (reported, not a bound)
    let other = Dataset::generate(
        &DatasetSpec::new(GateSetId::Custom22, vec![2], 8, 6000, 2),
        &sim(),
    )
    .unwrap();
    let keys: HashSet<String> = ds
        .records
        .iter()
        .map(|r| canonical_form(&r.circuit))
        .collect();
    let shared = other
        .records
        .iter()
        .filter(|r| keys.contains(&canonical_form(&r.circuit)))
        .count();
    eprintln!("canonical forms shared across seeds: {shared}/6000");
}

#[test]
fn gate_frequencies_within_three_sigma_of_uniform() {
    let spec = DatasetSpec::new(GateSetId::HeronP, vec![1, 2, 3, 4, 5], 32, 6000, 3);
    let ds = Dataset::generate(&spec, &sim()).unwrap();
    let set = GateSetId::HeronP.gate_set();
    let mut counts = vec![0usize; set.len()];
    let (mut mean, mut var) = (vec![0.0; set.len()], vec![0.0; set.len()]);
    for r in &ds.records {
        for g in r.circuit.gates() {
            counts[g.gate_index] += 1;
        }
        // each gate slot is uniform over the gates that fit the register
        let usable: Vec<usize> = (0..set.len())
            .filter(|&g| set.get(g).unwrap().arity <= r.circuit.num_qubits())
            .collect();
        let p = 1.0 / usable.len() as f64;
        for g in usable {
            mean[g] += 32.0 * p;
            var[g] += 32.0 * p * (1.0 - p);
        }
    }
    for g in 0..set.len() {
        let z = (counts[g] as f64 - mean[g]) / var[g].sqrt();
        assert!(
            z.abs() <= 3.0,
            "{}: {} vs {:.1} (z = {z:.2})",
            set.get(g).unwrap().name,
            counts[g],
            mean[g]
        );
    }
}

#[test]
fn large_file_reloads_with_checksum_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heron_p.qfds");
    let spec = DatasetSpec::new(GateSetId::HeronP, vec![1, 2, 3, 4, 5], 16, 6000, 4);
    let ds = build_dataset(&spec, &path, &sim()).unwrap();
    let back = load_dataset(&path, &sim()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(Dataset::checksum_count(6000), 60);

    // independently recompute the checksummed labels
    let checked: Vec<usize> = (0..6000).step_by(100).collect();
    assert_eq!(checked.len(), 60);
    for &i in &checked {
        let l = sim().label(&back.records[i].circuit).unwrap();
        assert!((l.re - back.records[i].label.re).abs() <= LABEL_TOLERANCE);
        assert!((l.im - back.records[i].label.im).abs() <= LABEL_TOLERANCE);
    }

    // a corrupted checksummed label is caught and names its line
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let line = &mut lines[1 + 200];
    let (_, rest) = line.split_once(' ').unwrap();
    *line = format!("9.0e0 {rest}");
    match Dataset::parse(&lines.join("\n"), &sim()) {
        Err(DatasetError::LabelMismatch { line, .. }) => assert_eq!(line, 202),
        other => panic!("expected a label mismatch, got {other:?}"),
    }
}
