//! OpenQASM 2 export.

use std::fmt::Write as _;

use super::circuit::format_param;
use super::{Circuit, CircuitError};

/// QASM name of each gate, plus a definition for gates missing from `qelib1.inc`.
fn qasm_gate(name: &str) -> Option<(&'static str, Option<&'static str>)> {
    let entry = match name {
        "X" => ("x", None),
        "Y" => ("y", None),
        "Z" => ("z", None),
        "H" => ("h", None),
        "S" => ("s", None),
        "T" => ("t", None),
        "ID" => ("id", None),
        "SXDG" => ("sxdg", None),
        "SDG" => ("sdg", None),
        "SX" => ("sx", None),
        "TDG" => ("tdg", None),
        "CX" => ("cx", None),
        "CY" => ("cy", None),
        "CZ" => ("cz", None),
        "SWAP" => ("swap", None),
        "CH" => ("ch", None),
        "CSX" => ("csx", None),
        "RZ" => ("rz", None),
        "DCX" => ("dcx", Some("gate dcx a,b { cx a,b; cx b,a; }")),
        "ISWAP" => (
            "iswap",
            Some("gate iswap a,b { s a; s b; h a; cx a,b; cx b,a; h b; }"),
        ),
        "CS" => (
            "cs",
            Some("gate cs a,b { u1(pi/4) a; cx a,b; u1(-pi/4) b; cx a,b; u1(pi/4) b; }"),
        ),
        "CSDG" => (
            "csdg",
            Some("gate csdg a,b { u1(-pi/4) a; cx a,b; u1(pi/4) b; cx a,b; u1(-pi/4) b; }"),
        ),
        "ECR" => (
            "ecr",
            Some(
                "gate rzx(param0) a,b { h b; cx a,b; rz(param0) b; cx a,b; h b; }\n\
                 gate ecr a,b { rzx(pi/4) a,b; x a; rzx(-pi/4) a,b; }",
            ),
        ),
        _ => return None,
    };
    Some(entry)
}

/// Renders the circuit as an OpenQASM 2 program with one statement per gate,
/// in circuit order.
pub fn export_qasm(circuit: &Circuit) -> Result<String, CircuitError> {
    let set = circuit.gate_set();
    let mut unsupported: Vec<String> = Vec::new();
    let mut defs: Vec<&'static str> = Vec::new();
    let mut body = String::new();
    for g in circuit.gates() {
        let name = set.get(g.gate_index).unwrap().name;
        let Some((qname, def)) = qasm_gate(name) else {
            if !unsupported.iter().any(|u| u == name) {
                unsupported.push(name.to_string());
            }
            continue;
        };
        if let Some(def) = def {
            if !defs.contains(&def) {
                defs.push(def);
            }
        }
        body.push_str(qname);
        if !g.params.is_empty() {
            let ps: Vec<String> = g.params.iter().map(|p| format_param(*p)).collect();
            write!(body, "({})", ps.join(",")).unwrap();
        }
        let ws: Vec<String> = g.wires.iter().map(|w| format!("q[{w}]")).collect();
        writeln!(body, " {};", ws.join(",")).unwrap();
    }
    if !unsupported.is_empty() {
        return Err(CircuitError::UnsupportedQasm(unsupported));
    }
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    for d in defs {
        out.push_str(d);
        out.push('\n');
    }
    writeln!(out, "qreg q[{}];", circuit.num_qubits()).unwrap();
    out.push_str(&body);
    Ok(out)
}
