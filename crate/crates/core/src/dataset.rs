//! Random training circuits and the line-oriented dataset file.
//!
//! File layout:
//!
//! ```text
//! QFDS v1 gateset=<id> seed=<u64>
//! <label_re> <label_im> <circuit line>
//! ...
//! ```
//!
//! Labels are written with 12 significant digits and circuit angles with
//! 9 decimals; generated records are pre-rounded to that precision so a
//! write/load cycle reproduces them exactly.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit_ir::{
    quantize_param, validate_dag, Circuit, CircuitDag, CircuitError, GateInstance, GateSetId,
};
use crate::simulator::{CircuitLabel, SimError, Simulator};

pub const HEADER_MAGIC: &str = "QFDS v1";
pub const LABEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("cannot place a gate on {num_qubits} qubit(s) with gate set {gateset}")]
    NoUsableGate {
        gateset: GateSetId,
        num_qubits: usize,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(
        "line {line}: stored label ({stored_re}, {stored_im}) differs from recomputed ({re}, {im})"
    )]
    LabelMismatch {
        line: usize,
        stored_re: f64,
        stored_im: f64,
        re: f64,
        im: f64,
    },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub gateset_id: GateSetId,
    pub qubit_counts: Vec<usize>,
    pub gates_per_circuit: usize,
    pub num_samples: usize,
    pub param_range: (f64, f64),
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(
        gateset_id: GateSetId,
        qubit_counts: Vec<usize>,
        gates_per_circuit: usize,
        num_samples: usize,
        seed: u64,
    ) -> Self {
        DatasetSpec {
            gateset_id,
            qubit_counts,
            gates_per_circuit,
            num_samples,
            param_range: (0.0, TAU),
            seed,
        }
    }

    pub fn validate(&self, max_qubits: usize) -> Result<(), DatasetError> {
        if self.qubit_counts.is_empty() {
            return Err(DatasetError::Spec("no qubit counts".into()));
        }
        if let Some(&n) = self
            .qubit_counts
            .iter()
            .find(|&&n| n == 0 || n > max_qubits)
        {
            return Err(DatasetError::Spec(format!(
                "qubit count {n} outside 1..={max_qubits}"
            )));
        }
        let (lo, hi) = self.param_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DatasetError::Spec(format!(
                "bad parameter range [{lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Independent, reproducible stream for record `index` of a dataset.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform gate, uniform ordered distinct wires, uniform angles.
pub fn generate_random_circuit<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    rng: &mut R,
) -> Result<Circuit, DatasetError> {
    let n = spec.qubit_counts[rng.random_range(0..spec.qubit_counts.len())];
    let set = spec.gateset_id.gate_set();
    let usable = set.available_for(n);
    if usable.is_empty() && spec.gates_per_circuit > 0 {
        return Err(DatasetError::NoUsableGate {
            gateset: spec.gateset_id,
            num_qubits: n,
        });
    }
    let (lo, hi) = spec.param_range;
    let mut gates = Vec::with_capacity(spec.gates_per_circuit);
    for _ in 0..spec.gates_per_circuit {
        let gate_index = usable[rng.random_range(0..usable.len())];
        let def = set.get(gate_index).unwrap();
        let wires = distinct_wires(rng, n, def.arity);
        let params = (0..def.num_params)
            .map(|_| quantize_param(rng.random_range(lo..hi)))
            .collect();
        gates.push(GateInstance::new(gate_index, wires, params));
    }
    Ok(Circuit::new(n, spec.gateset_id, gates)?)
}

/// Uniformly random ordered tuple of `k` distinct wires out of `n`.
pub fn distinct_wires<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    (0..k)
        .map(|_| pool.swap_remove(rng.random_range(0..pool.len())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub circuit: Circuit,
    pub label: CircuitLabel,
}

impl DatasetRecord {
    /// Simulates the circuit and stores its label at file precision.
    pub fn labelled(circuit: Circuit, sim: &Simulator) -> Result<Self, DatasetError> {
        let label = round_label(sim.label(&circuit)?);
        Ok(DatasetRecord { circuit, label })
    }
}

fn format_label_part(x: f64) -> String {
    format!("{x:.11e}")
}

/// Rounds both parts to 12 significant digits.
pub fn round_label(l: CircuitLabel) -> CircuitLabel {
    let r = |x: f64| format_label_part(x).parse::<f64>().unwrap();
    CircuitLabel::new(r(l.re), r(l.im))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub gateset_id: GateSetId,
    pub seed: u64,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    /// Generates `spec.num_samples` labelled records, in parallel by index.
    pub fn generate(spec: &DatasetSpec, sim: &Simulator) -> Result<Dataset, DatasetError> {
        spec.validate(sim.max_qubits)?;
        let records = (0..spec.num_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = record_rng(spec.seed, i as u64);
                let circuit = generate_random_circuit(spec, &mut rng)?;
                DatasetRecord::labelled(circuit, sim)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            gateset_id: spec.gateset_id,
            seed: spec.seed,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{HEADER_MAGIC} gateset={} seed={}",
            self.gateset_id, self.seed
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{} {} {}",
                format_label_part(r.label.re),
                format_label_part(r.label.im),
                r.circuit.to_text()
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parses and revalidates every record; every 100th label (1%) is
    /// recomputed and must agree within 1e-6.
    pub fn parse(text: &str, sim: &Simulator) -> Result<Dataset, DatasetError> {
        let mut lines = text.lines().enumerate();
        let (gateset_id, seed) = match lines.next() {
            Some((_, header)) => parse_header(header)?,
            None => {
                return Err(DatasetError::Format {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        };
        let mut records = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |message: String| DatasetError::Format {
                line: lineno,
                message,
            };
            let mut parts = line.splitn(3, ' ');
            let (Some(re), Some(im), Some(text)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(fmt_err("expected `label_re label_im circuit`".into()));
            };
            let re: f64 = re
                .parse()
                .map_err(|_| fmt_err(format!("bad label {re:?}")))?;
            let im: f64 = im
                .parse()
                .map_err(|_| fmt_err(format!("bad label {im:?}")))?;
            let circuit =
                Circuit::from_text(text, gateset_id).map_err(|e| fmt_err(e.to_string()))?;
            let report = validate_dag(&CircuitDag::from_circuit(&circuit));
            if !report.is_valid() {
                return Err(fmt_err(report.to_string()));
            }
            if records.len() % 100 == 0 {
                let l = sim.label(&circuit).map_err(|e| fmt_err(e.to_string()))?;
                if (l.re - re).abs() > LABEL_TOLERANCE || (l.im - im).abs() > LABEL_TOLERANCE {
                    return Err(DatasetError::LabelMismatch {
                        line: lineno,
                        stored_re: re,
                        stored_im: im,
                        re: l.re,
                        im: l.im,
                    });
                }
            }
            records.push(DatasetRecord {
                circuit,
                label: CircuitLabel::new(re, im),
            });
        }
        Ok(Dataset {
            gateset_id,
            seed,
            records,
        })
    }

    pub fn load(path: &Path, sim: &Simulator) -> Result<Dataset, DatasetError> {
        Self::parse(&fs::read_to_string(path)?, sim)
    }

    /// Number of labels [`Dataset::parse`] recomputes for `len` records.
    pub fn checksum_count(len: usize) -> usize {
        len.div_ceil(100)
    }
}

fn parse_header(line: &str) -> Result<(GateSetId, u64), DatasetError> {
    let err = |m: &str| DatasetError::Format {
        line: 1,
        message: m.to_string(),
    };
    let rest = line
        .strip_prefix(HEADER_MAGIC)
        .ok_or_else(|| err("missing `QFDS v1` header"))?;
    let mut gateset = None;
    let mut seed = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("gateset", v)) => {
                gateset = Some(v.parse::<GateSetId>().map_err(|e| err(&e.to_string()))?)
            }
            Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|_| err("bad seed"))?),
            _ => return Err(err(&format!("unknown header field {field:?}"))),
        }
    }
    Ok((
        gateset.ok_or_else(|| err("header lacks gateset"))?,
        seed.ok_or_else(|| err("header lacks seed"))?,
    ))
}

/// Generates a dataset and writes it to `path`.
pub fn build_dataset(
    spec: &DatasetSpec,
    path: &Path,
    sim: &Simulator,
) -> Result<Dataset, DatasetError> {
    let ds = Dataset::generate(spec, sim)?;
    ds.save(path)?;
    Ok(ds)
}

pub fn load_dataset(path: &Path, sim: &Simulator) -> Result<Dataset, DatasetError> {
    Dataset::load(path, sim)
}
