//! Sample files: a `QFSAMPLES v1` header line, then one line per draw,
//! `ok <circuit text>` or `invalid <qubits> <rule,rule,..>`.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use qfusion_core::circuit_ir::{Circuit, GateSetId};
use qfusion_core::eval::BatchEntry;
use qfusion_core::sampler::SampledCircuit;

pub const MAGIC: &str = "QFSAMPLES v1";

pub struct SampleFile {
    pub gateset_id: GateSetId,
    pub entries: Vec<BatchEntry>,
}

/// `header` holds the `key=value` fields after the magic, in order.
pub fn render(
    gateset_id: GateSetId,
    header: &[(&str, String)],
    samples: &[SampledCircuit],
) -> String {
    let mut out = format!("{MAGIC} gateset={gateset_id}");
    for (k, v) in header {
        write!(out, " {}={v}", k.replace('-', "_")).unwrap();
    }
    out.push('\n');
    for s in samples {
        match &s.circuit {
            Some(c) => writeln!(out, "ok {}", c.to_text()).unwrap(),
            None => {
                let rules: Vec<&str> = s.report.rules().into_iter().map(|r| r.as_str()).collect();
                writeln!(out, "invalid {} {}", s.dag.num_qubits, rules.join(",")).unwrap();
            }
        }
    }
    out
}

pub fn parse(text: &str) -> Result<SampleFile> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty sample file"))?;
    let fields = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| anyhow!("missing '{MAGIC}' header"))?;
    let gateset = fields
        .split_whitespace()
        .find_map(|f| f.strip_prefix("gateset="))
        .ok_or_else(|| anyhow!("header lacks gateset="))?;
    let gateset_id: GateSetId = gateset.parse()?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let entry = if let Some(text) = line.strip_prefix("ok ") {
            BatchEntry::valid(
                Circuit::from_text(text, gateset_id).with_context(|| format!("line {lineno}"))?,
            )
        } else if let Some(rest) = line.strip_prefix("invalid ") {
            let n = rest.split_whitespace().next().and_then(|n| n.parse().ok());
            BatchEntry::invalid(n.ok_or_else(|| anyhow!("line {lineno}: missing qubit count"))?)
        } else if line.trim().is_empty() {
            continue;
        } else {
            bail!("line {lineno}: expected 'ok' or 'invalid'");
        };
        entries.push(entry);
    }
    Ok(SampleFile {
        gateset_id,
        entries,
    })
}
