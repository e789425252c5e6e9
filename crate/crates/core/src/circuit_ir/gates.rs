//! Gate definitions and the three fixed gate sets.
//!
//! Two-qubit matrices are written in the little-endian local basis: for a gate
//! applied to `wires = (a, b)` the local basis index is `bit(a) + 2 * bit(b)`.
//! With this convention `wires[0]` is the control of every controlled gate and
//! the matrices coincide with the OpenQASM / Qiskit standard library.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::CircuitError;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Row-major square matrix builder for a gate, given its parameters.
pub type UnitaryFn = fn(&[f64]) -> Vec<Complex64>;

/// A named gate acting on one or two qubits.
#[derive(Clone, Copy)]
pub struct GateDefinition {
    pub name: &'static str,
    pub arity: usize,
    pub num_params: usize,
    unitary: UnitaryFn,
}

impl GateDefinition {
    /// Matrix of dimension `2^arity`, row-major.
    ///
    /// Panics if `params.len() != num_params`; callers validate first.
    pub fn unitary(&self, params: &[f64]) -> Vec<Complex64> {
        assert_eq!(
            params.len(),
            self.num_params,
            "gate {} parameter count",
            self.name
        );
        (self.unitary)(params)
    }

    pub fn dim(&self) -> usize {
        1 << self.arity
    }

    pub fn is_parametric(&self) -> bool {
        self.num_params > 0
    }
}

impl fmt::Debug for GateDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GateDefinition")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("num_params", &self.num_params)
            .finish()
    }
}

impl PartialEq for GateDefinition {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.arity == other.arity && self.num_params == other.num_params
    }
}

macro_rules! fixed {
    ($name:ident, $body:expr) => {
        fn $name(_: &[f64]) -> Vec<Complex64> {
            $body
        }
    };
}

fn diag4(d: [Complex64; 4]) -> Vec<Complex64> {
    let mut m = vec![ZERO; 16];
    for (k, v) in d.into_iter().enumerate() {
        m[k * 4 + k] = v;
    }
    m
}

/// Embed a single-qubit matrix as the target (wires[1]) of a gate controlled by wires[0].
fn controlled(u: [Complex64; 4]) -> Vec<Complex64> {
    let mut m = diag4([ONE, ZERO, ONE, ZERO]);
    // subspace where the control bit is set: local indices 1 (target 0) and 3 (target 1)
    m[4 + 1] = u[0];
    m[4 + 3] = u[1];
    m[3 * 4 + 1] = u[2];
    m[3 * 4 + 3] = u[3];
    m
}

fn sx_matrix() -> [Complex64; 4] {
    [c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)]
}

fixed!(x_u, vec![ZERO, ONE, ONE, ZERO]);
fixed!(y_u, vec![ZERO, -I, I, ZERO]);
fixed!(z_u, vec![ONE, ZERO, ZERO, -ONE]);
fixed!(h_u, {
    let h = c(FRAC_1_SQRT_2, 0.0);
    vec![h, h, h, -h]
});
fixed!(s_u, vec![ONE, ZERO, ZERO, I]);
fixed!(sdg_u, vec![ONE, ZERO, ZERO, -I]);
fixed!(
    t_u,
    vec![ONE, ZERO, ZERO, Complex64::from_polar(1.0, FRAC_PI_4)]
);
fixed!(
    tdg_u,
    vec![ONE, ZERO, ZERO, Complex64::from_polar(1.0, -FRAC_PI_4)]
);
fixed!(id_u, vec![ONE, ZERO, ZERO, ONE]);
fixed!(sx_u, sx_matrix().to_vec());
fixed!(
    sxdg_u,
    vec![c(0.5, -0.5), c(0.5, 0.5), c(0.5, 0.5), c(0.5, -0.5)]
);

fixed!(cx_u, controlled([ZERO, ONE, ONE, ZERO]));
fixed!(cy_u, controlled([ZERO, -I, I, ZERO]));
fixed!(cz_u, diag4([ONE, ONE, ONE, -ONE]));
fixed!(ch_u, {
    let h = c(FRAC_1_SQRT_2, 0.0);
    controlled([h, h, h, -h])
});
fixed!(cs_u, diag4([ONE, ONE, ONE, I]));
fixed!(csdg_u, diag4([ONE, ONE, ONE, -I]));
fixed!(csx_u, controlled(sx_matrix()));
fixed!(swap_u, {
    let mut m = diag4([ONE, ZERO, ZERO, ONE]);
    m[4 + 2] = ONE;
    m[2 * 4 + 1] = ONE;
    m
});
fixed!(iswap_u, {
    let mut m = diag4([ONE, ZERO, ZERO, ONE]);
    m[4 + 2] = I;
    m[2 * 4 + 1] = I;
    m
});
// CX(a->b) followed by CX(b->a)
fixed!(dcx_u, {
    let mut m = vec![ZERO; 16];
    m[0] = ONE;
    m[4 + 3] = ONE;
    m[2 * 4 + 1] = ONE;
    m[3 * 4 + 2] = ONE;
    m
});
fixed!(ecr_u, {
    let r = FRAC_1_SQRT_2;
    vec![
        ZERO,
        c(r, 0.0),
        ZERO,
        c(0.0, r),
        c(r, 0.0),
        ZERO,
        c(0.0, -r),
        ZERO,
        ZERO,
        c(0.0, r),
        ZERO,
        c(r, 0.0),
        c(0.0, -r),
        ZERO,
        c(r, 0.0),
        ZERO,
    ]
});

fn rz_u(p: &[f64]) -> Vec<Complex64> {
    let half = p[0] / 2.0;
    vec![
        Complex64::from_polar(1.0, -half),
        ZERO,
        ZERO,
        Complex64::from_polar(1.0, half),
    ]
}

const fn def(
    name: &'static str,
    arity: usize,
    num_params: usize,
    unitary: UnitaryFn,
) -> GateDefinition {
    GateDefinition {
        name,
        arity,
        num_params,
        unitary,
    }
}

static CUSTOM22: [GateDefinition; 22] = [
    def("X", 1, 0, x_u),
    def("Y", 1, 0, y_u),
    def("Z", 1, 0, z_u),
    def("H", 1, 0, h_u),
    def("S", 1, 0, s_u),
    def("T", 1, 0, t_u),
    def("ID", 1, 0, id_u),
    def("SXDG", 1, 0, sxdg_u),
    def("SDG", 1, 0, sdg_u),
    def("SX", 1, 0, sx_u),
    def("TDG", 1, 0, tdg_u),
    def("CX", 2, 0, cx_u),
    def("CY", 2, 0, cy_u),
    def("CZ", 2, 0, cz_u),
    def("SWAP", 2, 0, swap_u),
    def("DCX", 2, 0, dcx_u),
    def("ISWAP", 2, 0, iswap_u),
    def("CSDG", 2, 0, csdg_u),
    def("ECR", 2, 0, ecr_u),
    def("CH", 2, 0, ch_u),
    def("CS", 2, 0, cs_u),
    def("CSX", 2, 0, csx_u),
];

static HERON_NP: [GateDefinition; 4] = [
    def("X", 1, 0, x_u),
    def("SX", 1, 0, sx_u),
    def("ID", 1, 0, id_u),
    def("CZ", 2, 0, cz_u),
];

static HERON_P: [GateDefinition; 5] = [
    def("X", 1, 0, x_u),
    def("SX", 1, 0, sx_u),
    def("ID", 1, 0, id_u),
    def("CZ", 2, 0, cz_u),
    def("RZ", 1, 1, rz_u),
];

/// Identifier of one of the supported gate vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateSetId {
    Custom22,
    HeronNp,
    HeronP,
}

impl GateSetId {
    pub const ALL: [GateSetId; 3] = [GateSetId::Custom22, GateSetId::HeronNp, GateSetId::HeronP];

    pub fn as_str(self) -> &'static str {
        match self {
            GateSetId::Custom22 => "custom22",
            GateSetId::HeronNp => "heron_np",
            GateSetId::HeronP => "heron_p",
        }
    }

    pub fn gate_set(self) -> GateSet {
        GateSet::new(self)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            GateSetId::Custom22 => 0,
            GateSetId::HeronNp => 1,
            GateSetId::HeronP => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.code() == code)
    }
}

impl fmt::Display for GateSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateSetId {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "custom22" => Ok(GateSetId::Custom22),
            "heron_np" => Ok(GateSetId::HeronNp),
            "heron_p" => Ok(GateSetId::HeronP),
            _ => Err(CircuitError::UnknownGateSet(s.to_string())),
        }
    }
}

/// An ordered gate vocabulary. The order is the categorical vocabulary used by
/// the diffusion heads and must never change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSet {
    pub id: GateSetId,
    gates: &'static [GateDefinition],
}

impl GateSet {
    pub fn new(id: GateSetId) -> Self {
        let gates: &'static [GateDefinition] = match id {
            GateSetId::Custom22 => &CUSTOM22,
            GateSetId::HeronNp => &HERON_NP,
            GateSetId::HeronP => &HERON_P,
        };
        GateSet { id, gates }
    }

    pub fn gates(&self) -> &'static [GateDefinition] {
        self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&'static GateDefinition> {
        self.gates.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.gates
            .iter()
            .position(|g| g.name.eq_ignore_ascii_case(name))
    }

    /// Indices of gates usable on a register of `num_qubits` qubits.
    pub fn available_for(&self, num_qubits: usize) -> Vec<usize> {
        (0..self.gates.len())
            .filter(|&i| self.gates[i].arity <= num_qubits)
            .collect()
    }

    pub fn has_parametric(&self) -> bool {
        self.gates.iter().any(|g| g.is_parametric())
    }
}
