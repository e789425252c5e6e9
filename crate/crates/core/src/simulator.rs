//! Dense pure-state simulation.
//!
//! Basis indices are little-endian: qubit 0 is the least significant bit.
//! Density matrices are built as `|psi><psi|` only when a label or a metric
//! needs them, since they cost `4^n` memory.

use std::fmt;

use num_complex::Complex64;

use crate::circuit_ir::{Circuit, GateInstance};

pub const DEFAULT_MAX_QUBITS: usize = 10;
pub const MAX_QUBITS_ENV: &str = "QFUSION_MAX_QUBITS";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{num_qubits} qubits exceeds the simulator cap of {max} (set {env} to raise it)", env = MAX_QUBITS_ENV)]
    QubitBound { num_qubits: usize, max: usize },
    #[error("state dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
}

/// Simulator cap from `QFUSION_MAX_QUBITS`, or the default of 10.
pub fn max_qubits_from_env() -> usize {
    std::env::var(MAX_QUBITS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_QUBITS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn zero(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        StateVector {
            num_qubits,
            amplitudes,
        }
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        assert!(
            amplitudes.len().is_power_of_two(),
            "amplitude count must be 2^n"
        );
        let num_qubits = amplitudes.len().trailing_zeros() as usize;
        StateVector {
            num_qubits,
            amplitudes,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a `2^k x 2^k` row-major matrix to the listed wires, with
    /// `wires[0]` as the least significant local bit.
    pub fn apply(&mut self, matrix: &[Complex64], wires: &[usize]) {
        match wires {
            [w] => self.apply_one(matrix, *w),
            [a, b] => self.apply_two(matrix, *a, *b),
            _ => panic!("gates act on one or two wires"),
        }
    }

    fn apply_one(&mut self, m: &[Complex64], w: usize) {
        let bit = 1usize << w;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | bit]);
                self.amplitudes[i] = m[0] * a0 + m[1] * a1;
                self.amplitudes[i | bit] = m[2] * a0 + m[3] * a1;
            }
        }
    }

    fn apply_two(&mut self, m: &[Complex64], a: usize, b: usize) {
        let (ba, bb) = (1usize << a, 1usize << b);
        let idx = |base: usize, k: usize| {
            base | if k & 1 != 0 { ba } else { 0 } | if k & 2 != 0 { bb } else { 0 }
        };
        for base in 0..self.amplitudes.len() {
            if base & (ba | bb) != 0 {
                continue;
            }
            let local: [Complex64; 4] = std::array::from_fn(|k| self.amplitudes[idx(base, k)]);
            for r in 0..4 {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, v) in local.iter().enumerate() {
                    acc += m[r * 4 + k] * v;
                }
                self.amplitudes[idx(base, r)] = acc;
            }
        }
    }
}

/// `rho = |psi><psi|`, row-major `2^n x 2^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_state(state: &StateVector) -> Self {
        let amps = state.amplitudes();
        let dim = amps.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for a in amps {
            for b in amps {
                entries.push(a * b.conj());
            }
        }
        DensityMatrix {
            num_qubits: state.num_qubits(),
            entries,
        }
    }

    /// Wraps a row-major square matrix of side `2^n`.
    pub fn from_entries(num_qubits: usize, entries: Vec<Complex64>) -> Self {
        assert_eq!(entries.len(), 1 << (2 * num_qubits));
        DensityMatrix {
            num_qubits,
            entries,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (i..d).all(|j| (self.get(i, j) - self.get(j, i).conj()).norm() <= tol))
    }

    /// Smallest eigenvalue of the Hermitian part, via Jacobi rotations on the
    /// real symmetric embedding `[[A, -B], [B, A]]` of `A + iB`.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let n = 2 * d;
        let mut m = vec![0.0; n * n];
        for i in 0..d {
            for j in 0..d {
                let h = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                m[i * n + j] = h.re;
                m[(i + d) * n + (j + d)] = h.re;
                m[i * n + (j + d)] = -h.im;
                m[(i + d) * n + j] = h.im;
            }
        }
        jacobi_eigenvalues(&mut m, n)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Number of entries with modulus above `tol`.
    pub fn count_nonzero(&self, tol: f64) -> usize {
        self.entries.iter().filter(|e| e.norm() > tol).count()
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                let e = self.get(i, j);
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{:+.6}{:+.6}i", e.re, e.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn jacobi_eigenvalues(m: &mut [f64], n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

/// Complex sum of all density-matrix entries, used as the conditioning label.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CircuitLabel {
    pub re: f64,
    pub im: f64,
}

impl CircuitLabel {
    pub fn new(re: f64, im: f64) -> Self {
        CircuitLabel { re, im }
    }

    pub fn of(dm: &DensityMatrix) -> Self {
        let s: Complex64 = dm.entries().iter().sum();
        CircuitLabel { re: s.re, im: s.im }
    }
}

/// Meaningfulness predicate: at least `threshold` entries with modulus above `tol`.
pub fn is_meaningful(dm: &DensityMatrix, threshold: usize, tol: f64) -> bool {
    dm.count_nonzero(tol) >= threshold
}

pub const MEANINGFUL_THRESHOLD: usize = 10;
pub const NONZERO_TOL: f64 = 1e-8;

/// `|<a|b>|^2`, clamped into `[0, 1]`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64, SimError> {
    if a.num_qubits() != b.num_qubits() {
        return Err(SimError::DimensionMismatch(a.num_qubits(), b.num_qubits()));
    }
    let overlap: Complex64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(overlap.norm_sqr().clamp(0.0, 1.0))
}

/// Circuit simulator with a qubit cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulator {
    pub max_qubits: usize,
}

impl Default for Simulator {
    /// Cap taken from `QFUSION_MAX_QUBITS` when set.
    fn default() -> Self {
        Simulator {
            max_qubits: max_qubits_from_env(),
        }
    }
}

impl Simulator {
    pub fn with_max_qubits(max_qubits: usize) -> Self {
        Simulator { max_qubits }
    }

    fn check(&self, circuit: &Circuit) -> Result<(), SimError> {
        if circuit.num_qubits() > self.max_qubits {
            return Err(SimError::QubitBound {
                num_qubits: circuit.num_qubits(),
                max: self.max_qubits,
            });
        }
        Ok(())
    }

    pub fn run_statevector(&self, circuit: &Circuit) -> Result<StateVector, SimError> {
        self.check(circuit)?;
        let set = circuit.gate_set();
        let mut state = StateVector::zero(circuit.num_qubits());
        for GateInstance {
            gate_index,
            wires,
            params,
        } in circuit.gates()
        {
            let def = set.get(*gate_index).expect("circuit validated");
            state.apply(&def.unitary(params), wires);
        }
        Ok(state)
    }

    pub fn density_matrix(&self, circuit: &Circuit) -> Result<DensityMatrix, SimError> {
        Ok(DensityMatrix::from_state(&self.run_statevector(circuit)?))
    }

    pub fn label(&self, circuit: &Circuit) -> Result<CircuitLabel, SimError> {
        Ok(CircuitLabel::of(&self.density_matrix(circuit)?))
    }
}

pub fn run_statevector(circuit: &Circuit) -> Result<StateVector, SimError> {
    Simulator::default().run_statevector(circuit)
}

pub fn density_matrix(circuit: &Circuit) -> Result<DensityMatrix, SimError> {
    Simulator::default().density_matrix(circuit)
}

pub fn label(circuit: &Circuit) -> Result<CircuitLabel, SimError> {
    Simulator::default().label(circuit)
}
