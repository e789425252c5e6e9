//! Brute-force density matrices from dense `2^n` gate operators, an
//! oracle for the statevector simulator. Shared with the acceptance suite.

use num_complex::Complex64;
use qfusion_core::circuit_ir::Circuit;

pub type Matrix = Vec<Vec<Complex64>>;

pub fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Dense `2^n` operator of one gate: entry `(r, c)` is the gate entry for the
/// local bits of `r` and `c` when all other bits agree, else zero.
pub fn full_operator(n: usize, local: &[Complex64], wires: &[usize]) -> Matrix {
    let dim = 1 << n;
    let local_index = |i: usize| {
        wires
            .iter()
            .enumerate()
            .map(|(k, &w)| ((i >> w) & 1) << k)
            .sum::<usize>()
    };
    let mask: usize = wires.iter().map(|&w| 1 << w).sum();
    let k = 1 << wires.len();
    (0..dim)
        .map(|r| {
            (0..dim)
                .map(|c| {
                    if r & !mask == c & !mask {
                        local[local_index(r) * k + local_index(c)]
                    } else {
                        zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let d = a.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// `rho = U e0 e0^T U^dagger` with `U` the product of the dense gate operators.
pub fn oracle_density(c: &Circuit) -> Matrix {
    let n = c.num_qubits();
    let dim = 1 << n;
    let mut u: Matrix = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        Complex64::new(1.0, 0.0)
                    } else {
                        zero()
                    }
                })
                .collect()
        })
        .collect();
    for g in c.gates() {
        let def = c.definition(g);
        u = matmul(&full_operator(n, &def.unitary(&g.params), &g.wires), &u);
    }
    let psi: Vec<Complex64> = (0..dim).map(|i| u[i][0]).collect();
    (0..dim)
        .map(|i| (0..dim).map(|j| psi[i] * psi[j].conj()).collect())
        .collect()
}
