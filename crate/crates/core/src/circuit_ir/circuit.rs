use std::fmt::Write as _;

use super::{CircuitError, GateDefinition, GateSet, GateSetId};

/// Largest register the IR accepts at all. The simulator applies its own,
/// lower and configurable, cap.
pub const MAX_REGISTER: usize = 24;

/// One gate application: which gate, on which wires, with which angles.
#[derive(Debug, Clone, PartialEq)]
pub struct GateInstance {
    pub gate_index: usize,
    pub wires: Vec<usize>,
    pub params: Vec<f64>,
}

impl GateInstance {
    pub fn new(gate_index: usize, wires: Vec<usize>, params: Vec<f64>) -> Self {
        GateInstance {
            gate_index,
            wires,
            params,
        }
    }

    /// Convenience for parameter-free gates.
    pub fn fixed(gate_index: usize, wires: &[usize]) -> Self {
        GateInstance {
            gate_index,
            wires: wires.to_vec(),
            params: Vec::new(),
        }
    }
}

/// An ordered list of gate instances on `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    gateset_id: GateSetId,
    gates: Vec<GateInstance>,
}

impl Circuit {
    pub fn new(
        num_qubits: usize,
        gateset_id: GateSetId,
        gates: Vec<GateInstance>,
    ) -> Result<Self, CircuitError> {
        if num_qubits == 0 || num_qubits > MAX_REGISTER {
            return Err(CircuitError::QubitCount(num_qubits));
        }
        let set = gateset_id.gate_set();
        for (pos, g) in gates.iter().enumerate() {
            check_instance(&set, num_qubits, pos, g)?;
        }
        Ok(Circuit {
            num_qubits,
            gateset_id,
            gates,
        })
    }

    pub fn empty(num_qubits: usize, gateset_id: GateSetId) -> Result<Self, CircuitError> {
        Self::new(num_qubits, gateset_id, Vec::new())
    }

    /// Builds a circuit from `(name, wires)` pairs; handy in tests and examples.
    pub fn from_names(
        num_qubits: usize,
        gateset_id: GateSetId,
        ops: &[(&str, &[usize], &[f64])],
    ) -> Result<Self, CircuitError> {
        let set = gateset_id.gate_set();
        let gates = ops
            .iter()
            .map(|(name, wires, params)| {
                let gate_index = set
                    .index_of(name)
                    .ok_or_else(|| CircuitError::UnknownGate {
                        gateset: gateset_id,
                        name: name.to_string(),
                    })?;
                Ok(GateInstance::new(
                    gate_index,
                    wires.to_vec(),
                    params.to_vec(),
                ))
            })
            .collect::<Result<Vec<_>, CircuitError>>()?;
        Self::new(num_qubits, gateset_id, gates)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gateset_id(&self) -> GateSetId {
        self.gateset_id
    }

    pub fn gate_set(&self) -> GateSet {
        self.gateset_id.gate_set()
    }

    pub fn gates(&self) -> &[GateInstance] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn definition(&self, g: &GateInstance) -> &'static GateDefinition {
        self.gate_set()
            .get(g.gate_index)
            .expect("validated at construction")
    }

    pub fn num_parametric(&self) -> usize {
        self.gates.iter().filter(|g| !g.params.is_empty()).count()
    }

    /// Gate sequence seen by each wire, as `(gate_index, wires, params)` in time order.
    pub fn wire_sequences(&self) -> Vec<Vec<&GateInstance>> {
        let mut seqs = vec![Vec::new(); self.num_qubits];
        for g in &self.gates {
            for &w in &g.wires {
                seqs[w].push(g);
            }
        }
        seqs
    }

    /// Same circuit with new parameter values, consumed in gate order.
    pub fn with_params(&self, values: &[f64]) -> Result<Circuit, CircuitError> {
        let needed: usize = self.gates.iter().map(|g| g.params.len()).sum();
        if needed != values.len() {
            return Err(CircuitError::ParamCount {
                position: 0,
                expected: needed,
                found: values.len(),
            });
        }
        let mut it = values.iter().copied();
        let gates = self
            .gates
            .iter()
            .map(|g| GateInstance {
                gate_index: g.gate_index,
                wires: g.wires.clone(),
                params: g.params.iter().map(|_| it.next().unwrap()).collect(),
            })
            .collect();
        Ok(Circuit {
            num_qubits: self.num_qubits,
            gateset_id: self.gateset_id,
            gates,
        })
    }

    /// Line serialization: `n|NAME:w,w:p;NAME:w:;...`, params with 9 decimals.
    pub fn to_text(&self) -> String {
        let set = self.gate_set();
        let mut s = format!("{}|", self.num_qubits);
        for (k, g) in self.gates.iter().enumerate() {
            if k > 0 {
                s.push(';');
            }
            s.push_str(set.get(g.gate_index).unwrap().name);
            s.push(':');
            for (i, w) in g.wires.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                write!(s, "{w}").unwrap();
            }
            s.push(':');
            for (i, p) in g.params.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                s.push_str(&format_param(*p));
            }
        }
        s
    }

    pub fn from_text(text: &str, gateset_id: GateSetId) -> Result<Circuit, CircuitError> {
        let bad = |msg: &str| CircuitError::Parse(format!("{msg} in {text:?}"));
        let (head, body) = text
            .trim()
            .split_once('|')
            .ok_or_else(|| bad("missing '|'"))?;
        let num_qubits: usize = head.parse().map_err(|_| bad("bad qubit count"))?;
        let set = gateset_id.gate_set();
        let mut gates = Vec::new();
        if !body.is_empty() {
            for item in body.split(';') {
                let mut parts = item.split(':');
                let (Some(name), Some(wires), Some(params), None) =
                    (parts.next(), parts.next(), parts.next(), parts.next())
                else {
                    return Err(bad("gate field must be name:wires:params"));
                };
                let gate_index = set
                    .index_of(name)
                    .ok_or_else(|| CircuitError::UnknownGate {
                        gateset: gateset_id,
                        name: name.to_string(),
                    })?;
                let wires = split_list(wires)
                    .map(|w| w.parse::<usize>().map_err(|_| bad("bad wire")))
                    .collect::<Result<Vec<_>, _>>()?;
                let params = split_list(params)
                    .map(|p| p.parse::<f64>().map_err(|_| bad("bad parameter")))
                    .collect::<Result<Vec<_>, _>>()?;
                gates.push(GateInstance {
                    gate_index,
                    wires,
                    params,
                });
            }
        }
        Circuit::new(num_qubits, gateset_id, gates)
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').filter(|x| !x.is_empty())
}

pub(crate) fn format_param(p: f64) -> String {
    format!("{p:.9}")
}

/// Round an angle to the 9-decimal grid used by the text format so that
/// in-memory values survive a write/read cycle unchanged.
pub fn quantize_param(p: f64) -> f64 {
    format_param(p).parse().unwrap()
}

fn check_instance(
    set: &GateSet,
    n: usize,
    position: usize,
    g: &GateInstance,
) -> Result<(), CircuitError> {
    let def = set.get(g.gate_index).ok_or(CircuitError::GateIndex {
        position,
        index: g.gate_index,
        gateset: set.id,
    })?;
    if g.wires.len() != def.arity {
        return Err(CircuitError::Arity {
            position,
            gate: def.name,
            expected: def.arity,
            found: g.wires.len(),
        });
    }
    for (i, &w) in g.wires.iter().enumerate() {
        if w >= n {
            return Err(CircuitError::WireOutOfRange {
                position,
                wire: w,
                num_qubits: n,
            });
        }
        if g.wires[..i].contains(&w) {
            return Err(CircuitError::RepeatedWire { position, wire: w });
        }
    }
    if g.params.len() != def.num_params {
        return Err(CircuitError::ParamCount {
            position,
            expected: def.num_params,
            found: g.params.len(),
        });
    }
    if g.params.iter().any(|p| !p.is_finite()) {
        return Err(CircuitError::Parse(format!(
            "non-finite parameter at gate {position}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_instances() {
        let id = GateSetId::Custom22;
        assert!(matches!(
            Circuit::from_names(2, id, &[("CX", &[0, 2], &[])]),
            Err(CircuitError::WireOutOfRange { wire: 2, .. })
        ));
        assert!(matches!(
            Circuit::from_names(2, id, &[("CX", &[1, 1], &[])]),
            Err(CircuitError::RepeatedWire { .. })
        ));
        assert!(matches!(
            Circuit::from_names(2, id, &[("H", &[0, 1], &[])]),
            Err(CircuitError::Arity { .. })
        ));
        assert!(matches!(
            Circuit::from_names(2, id, &[("RZ", &[0], &[1.0])]),
            Err(CircuitError::UnknownGate { .. })
        ));
        assert!(matches!(
            Circuit::new(1, id, vec![GateInstance::fixed(99, &[0])]),
            Err(CircuitError::GateIndex { index: 99, .. })
        ));
        assert!(matches!(
            Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[])]),
            Err(CircuitError::ParamCount { .. })
        ));
        assert!(Circuit::empty(0, id).is_err());
    }

    #[test]
    fn text_format() {
        let c = Circuit::from_names(
            3,
            GateSetId::HeronP,
            &[
                ("X", &[0], &[]),
                ("CZ", &[2, 1], &[]),
                ("RZ", &[1], &[1.25]),
            ],
        )
        .unwrap();
        assert_eq!(c.to_text(), "3|X:0:;CZ:2,1:;RZ:1:1.250000000");
        assert_eq!(
            Circuit::from_text(&c.to_text(), GateSetId::HeronP).unwrap(),
            c
        );
        let empty = Circuit::empty(2, GateSetId::HeronNp).unwrap();
        assert_eq!(empty.to_text(), "2|");
        assert_eq!(Circuit::from_text("2|", GateSetId::HeronNp).unwrap(), empty);
        assert!(Circuit::from_text("2|X:0", GateSetId::HeronNp).is_err());
        assert!(Circuit::from_text("2|X:5:", GateSetId::HeronNp).is_err());
    }

    #[test]
    fn quantized_params_reload_bit_exact() {
        for p in [0.0, 1e-10, std::f64::consts::PI, 6.123456789, 0.1 + 0.2] {
            let q = quantize_param(p);
            let c = Circuit::from_names(1, GateSetId::HeronP, &[("RZ", &[0], &[q])]).unwrap();
            let back = Circuit::from_text(&c.to_text(), GateSetId::HeronP).unwrap();
            assert_eq!(back.gates()[0].params[0].to_bits(), q.to_bits());
        }
    }
}
