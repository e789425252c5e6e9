#[path = "support/dense.rs"]
mod dense;

use dense::oracle_density;
use num_complex::Complex64;
use qfusion_core::circuit_ir::{Circuit, GateSetId};
use qfusion_core::dataset::{generate_random_circuit, record_rng, DatasetSpec};
use qfusion_core::simulator::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn density_matrices_match_dense_operator_oracle() {
    let sim = Simulator::with_max_qubits(10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..50u64 {
        let gs = GateSetId::ALL[rng.random_range(0..3)];
        let gates = rng.random_range(0..12);
        let spec = DatasetSpec::new(gs, vec![1, 2, 3], gates, 1, 0);
        let c = generate_random_circuit(&spec, &mut record_rng(42, i)).unwrap();
        let dm = sim.density_matrix(&c).unwrap();
        let oracle = oracle_density(&c);
        let mut nonzero = 0;
        for (r, row) in oracle.iter().enumerate() {
            for (col, &x) in row.iter().enumerate() {
                assert!(
                    (dm.get(r, col) - x).norm() <= 1e-9,
                    "circuit {i} entry ({r},{col})"
                );
                nonzero += usize::from(x.norm() > NONZERO_TOL);
            }
        }
        assert_eq!(
            is_meaningful(&dm, MEANINGFUL_THRESHOLD, NONZERO_TOL),
            nonzero >= 10
        );
    }
}

#[test]
fn reference_labels() {
    let h = Circuit::from_names(1, GateSetId::Custom22, &[("H", &[0], &[])]).unwrap();
    let l = label(&h).unwrap();
    assert!((l.re - 2.0).abs() <= 1e-12 && l.im.abs() <= 1e-12);
    let hs = Circuit::from_names(
        1,
        GateSetId::Custom22,
        &[("H", &[0], &[]), ("S", &[0], &[])],
    )
    .unwrap();
    let dm = density_matrix(&hs).unwrap();
    assert!((dm.get(0, 1) - Complex64::new(0.0, -0.5)).norm() < 1e-12);
    let l = label(&hs).unwrap();
    assert!((l.re - 1.0).abs() <= 1e-12 && l.im.abs() <= 1e-12);
    for n in 1..=4 {
        let empty = Circuit::empty(n, GateSetId::HeronNp).unwrap();
        assert_eq!(label(&empty).unwrap(), CircuitLabel::new(1.0, 0.0));
    }
    // control on wire 1, target on wire 0: |10> (index 2) -> |11>
    let c = Circuit::from_names(
        2,
        GateSetId::Custom22,
        &[("X", &[1], &[]), ("CX", &[1, 0], &[])],
    )
    .unwrap();
    assert!((run_statevector(&c).unwrap().amplitudes()[3].re - 1.0).abs() < 1e-12);
}

#[test]
fn norm_trace_hermiticity_and_positivity() {
    let sim = Simulator::with_max_qubits(10);
    for (k, gs) in GateSetId::ALL.into_iter().enumerate() {
        let spec = DatasetSpec::new(gs, vec![1, 2, 3, 4], 16, 1000, 0);
        for i in 0..1000u64 {
            let c = generate_random_circuit(&spec, &mut record_rng(k as u64, i)).unwrap();
            let mut state = StateVector::zero(c.num_qubits());
            for g in c.gates() {
                state.apply(&c.definition(g).unitary(&g.params), &g.wires);
                assert!((state.norm_sqr() - 1.0).abs() <= 1e-10);
            }
            let dm = sim.density_matrix(&c).unwrap();
            assert!((dm.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
            assert!(dm.is_hermitian(1e-12));
            assert!(dm.min_eigenvalue() >= -1e-9);
            let l = CircuitLabel::of(&dm);
            assert!(l.re >= -1e-12 && l.im.abs() < 1e-10);
        }
    }
}
