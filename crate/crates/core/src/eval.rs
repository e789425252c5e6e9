//! Batch statistics over sampled circuits: validity, uniqueness,
//! meaningfulness and expressibility.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit_ir::{canonical_form, Circuit};
use crate::sampler::SampledCircuit;
use crate::simulator::{
    fidelity, is_meaningful, SimError, Simulator, MEANINGFUL_THRESHOLD, NONZERO_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("expressibility needs at least one pair and one bin")]
    BadEstimator,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One batch member; `circuit` is `None` for an invalid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub num_qubits: usize,
    pub circuit: Option<Circuit>,
}

impl BatchEntry {
    pub fn valid(circuit: Circuit) -> Self {
        BatchEntry {
            num_qubits: circuit.num_qubits(),
            circuit: Some(circuit),
        }
    }

    pub fn invalid(num_qubits: usize) -> Self {
        BatchEntry {
            num_qubits,
            circuit: None,
        }
    }
}

impl From<&SampledCircuit> for BatchEntry {
    fn from(s: &SampledCircuit) -> Self {
        BatchEntry {
            num_qubits: s.dag.num_qubits,
            circuit: s.circuit.clone(),
        }
    }
}

fn valid_circuits(batch: &[BatchEntry]) -> Vec<&Circuit> {
    batch.iter().filter_map(|e| e.circuit.as_ref()).collect()
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

pub fn percent_valid(batch: &[BatchEntry]) -> Result<f64, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    Ok(pct(valid_circuits(batch).len(), batch.len()))
}

/// Distinct canonical forms among `circuits`, as a percentage of their count.
pub fn percent_distinct(circuits: &[&Circuit]) -> Option<f64> {
    if circuits.is_empty() {
        return None;
    }
    let forms: HashSet<String> = circuits.iter().map(|c| canonical_form(c)).collect();
    Some(pct(forms.len(), circuits.len()))
}

/// Unique fraction of the valid circuits; `None` when none are valid.
pub fn percent_unique(batch: &[BatchEntry]) -> Result<Option<f64>, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    Ok(percent_distinct(&valid_circuits(batch)))
}

/// Meaningful fraction of the valid circuits; `None` when none are valid.
pub fn percent_meaningful(batch: &[BatchEntry], sim: &Simulator) -> Result<Option<f64>, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let valid = valid_circuits(batch);
    if valid.is_empty() {
        return Ok(None);
    }
    let flags = meaningful_flags(&valid, sim)?;
    Ok(Some(pct(flags.iter().filter(|&&m| m).count(), valid.len())))
}

fn meaningful_flags(circuits: &[&Circuit], sim: &Simulator) -> Result<Vec<bool>, EvalError> {
    circuits
        .par_iter()
        .map(|c| {
            Ok(is_meaningful(
                &sim.density_matrix(c)?,
                MEANINGFUL_THRESHOLD,
                NONZERO_TOL,
            ))
        })
        .collect()
}

/// Probability mass of each of `num_bins` equal fidelity bins on `[0, 1]`
/// under the Haar distribution for `num_qubits` qubits,
/// `P(F) = (N - 1)(1 - F)^(N - 2)` with `N = 2^n`.
pub fn haar_bin_masses(num_qubits: usize, num_bins: usize) -> Vec<f64> {
    let e = (1u64 << num_qubits) as f64 - 1.0;
    (0..num_bins)
        .map(|i| {
            let a = i as f64 / num_bins as f64;
            let b = (i + 1) as f64 / num_bins as f64;
            (1.0 - a).powf(e) - (1.0 - b).powf(e)
        })
        .collect()
}

/// Histogram bin of a fidelity; `F = 1` falls in the last bin.
pub fn fidelity_bin(f: f64, num_bins: usize) -> usize {
    ((f.clamp(0.0, 1.0) * num_bins as f64) as usize).min(num_bins - 1)
}

/// `KL(empirical || Haar)` of a fidelity sample; empty bins contribute 0.
pub fn expressibility_from_fidelities(
    fidelities: &[f64],
    num_qubits: usize,
    num_bins: usize,
) -> Result<f64, EvalError> {
    if fidelities.is_empty() || num_bins == 0 {
        return Err(EvalError::BadEstimator);
    }
    let mut counts = vec![0usize; num_bins];
    for &f in fidelities {
        counts[fidelity_bin(f, num_bins)] += 1;
    }
    let haar = haar_bin_masses(num_qubits, num_bins);
    let total = fidelities.len() as f64;
    let kl = counts
        .iter()
        .zip(&haar)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &q)| {
            let p = c as f64 / total;
            // a bin with negligible reference mass still has a finite (large) cost
            p * (p / q.max(f64::MIN_POSITIVE)).ln()
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Expressibility of a parameterized template: fidelities between output
/// states of `num_pairs` pairs of independent uniform `[0, 2pi)` parameter
/// draws, compared against the Haar distribution.
pub fn expressibility<R: Rng + ?Sized>(
    circuit: &Circuit,
    num_pairs: usize,
    num_bins: usize,
    rng: &mut R,
    sim: &Simulator,
) -> Result<f64, EvalError> {
    if num_pairs == 0 || num_bins == 0 {
        return Err(EvalError::BadEstimator);
    }
    let k = circuit.num_parametric();
    let draw = |rng: &mut R| -> Vec<f64> {
        (0..k)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect()
    };
    let mut fids = Vec::with_capacity(num_pairs);
    for _ in 0..num_pairs {
        let a = circuit
            .with_params(&draw(rng))
            .expect("parameter count matches");
        let b = circuit
            .with_params(&draw(rng))
            .expect("parameter count matches");
        fids.push(fidelity(
            &sim.run_statevector(&a)?,
            &sim.run_statevector(&b)?,
        )?);
    }
    expressibility_from_fidelities(&fids, circuit.num_qubits(), num_bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub num_pairs: usize,
    pub num_bins: usize,
    pub seed: u64,
    /// Skip expressibility entirely (it dominates evaluation time).
    pub expressibility: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            num_pairs: 5000,
            num_bins: 75,
            seed: 0,
            expressibility: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub total: usize,
    pub valid: usize,
    pub pct_valid: f64,
    pub pct_unique: Option<f64>,
    pub pct_meaningful: Option<f64>,
    pub pct_unique_among_meaningful: Option<f64>,
    /// Mean over valid circuits with at least one parametric gate.
    pub expressibility_mean: Option<f64>,
    /// Same, restricted to meaningful circuits.
    pub expressibility_meaningful: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: GroupStats,
    /// Keyed by qubit count.
    pub per_qubit: BTreeMap<usize, GroupStats>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

struct Scored<'a> {
    circuit: &'a Circuit,
    meaningful: bool,
    expressibility: Option<f64>,
}

fn group(total: usize, scored: &[&Scored]) -> GroupStats {
    let valid: Vec<&Circuit> = scored.iter().map(|s| s.circuit).collect();
    let meaningful: Vec<&Circuit> = scored
        .iter()
        .filter(|s| s.meaningful)
        .map(|s| s.circuit)
        .collect();
    let any = !valid.is_empty();
    GroupStats {
        total,
        valid: valid.len(),
        pct_valid: if total == 0 {
            0.0
        } else {
            pct(valid.len(), total)
        },
        pct_unique: percent_distinct(&valid),
        pct_meaningful: any.then(|| pct(meaningful.len(), valid.len())),
        pct_unique_among_meaningful: percent_distinct(&meaningful),
        expressibility_mean: mean(scored.iter().filter_map(|s| s.expressibility)),
        expressibility_meaningful: mean(
            scored
                .iter()
                .filter(|s| s.meaningful)
                .filter_map(|s| s.expressibility),
        ),
    }
}

/// Aggregates all statistics. Each parametric circuit's expressibility uses
/// its own random stream, so the report is deterministic given the batch and
/// seed regardless of thread count.
pub fn evaluate_run(
    batch: &[BatchEntry],
    options: &EvalOptions,
    sim: &Simulator,
) -> Result<EvalReport, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let valid: Vec<(usize, &Circuit)> = batch
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.circuit.as_ref().map(|c| (i, c)))
        .collect();
    let scored: Vec<Scored> = valid
        .par_iter()
        .map(|&(i, c)| {
            let meaningful =
                is_meaningful(&sim.density_matrix(c)?, MEANINGFUL_THRESHOLD, NONZERO_TOL);
            let expressibility = if options.expressibility && c.num_parametric() > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(i as u64);
                Some(expressibility(
                    c,
                    options.num_pairs,
                    options.num_bins,
                    &mut rng,
                    sim,
                )?)
            } else {
                None
            };
            Ok(Scored {
                circuit: c,
                meaningful,
                expressibility,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let all: Vec<&Scored> = scored.iter().collect();
    let overall = group(batch.len(), &all);
    let mut per_qubit = BTreeMap::new();
    let qubit_counts: std::collections::BTreeSet<usize> =
        batch.iter().map(|e| e.num_qubits).collect();
    for n in qubit_counts {
        let total = batch.iter().filter(|e| e.num_qubits == n).count();
        let members: Vec<&Scored> = scored
            .iter()
            .filter(|s| s.circuit.num_qubits() == n)
            .collect();
        per_qubit.insert(n, group(total, &members));
    }
    Ok(EvalReport { overall, per_qubit })
}

pub const REPORT_COLUMNS: [&str; 5] = [
    "statistic",
    "% valid",
    "% unique",
    "% meaningful",
    "expressibility",
];

impl EvalReport {
    fn rows(&self, absent: &str) -> Vec<[String; 5]> {
        let p = |x: Option<f64>| x.map_or_else(|| absent.to_string(), |v| format!("{v:.2}"));
        let e = |x: Option<f64>| x.map_or_else(|| absent.to_string(), |v| format!("{v:.3}"));
        let o = &self.overall;
        let meaningful_valid = o.pct_meaningful.filter(|&m| m > 0.0).map(|_| 100.0);
        let mut rows = vec![
            [
                format!("all (n={})", o.total),
                p(Some(o.pct_valid)),
                p(o.pct_unique),
                p(o.pct_meaningful),
                e(o.expressibility_mean),
            ],
            [
                "meaningful subset".to_string(),
                p(meaningful_valid),
                p(o.pct_unique_among_meaningful),
                p(meaningful_valid),
                e(o.expressibility_meaningful),
            ],
        ];
        for (q, g) in &self.per_qubit {
            rows.push([
                format!("{q} qubits (n={})", g.total),
                p(Some(g.pct_valid)),
                p(g.pct_unique),
                p(g.pct_meaningful),
                e(g.expressibility_mean),
            ]);
        }
        rows
    }

    /// Fixed-width table.
    pub fn to_text(&self) -> String {
        let rows = self.rows("-");
        let mut widths: Vec<usize> = REPORT_COLUMNS.iter().map(|c| c.len()).collect();
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |cells: &[&str], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&REPORT_COLUMNS, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for r in &rows {
            line(&r.iter().map(String::as_str).collect::<Vec<_>>(), &mut out);
        }
        out
    }

    /// Comma-separated, absent values left empty.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for r in self.rows("") {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}
