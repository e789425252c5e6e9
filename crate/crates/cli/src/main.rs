//! `qfusion`: dataset generation, training, sampling, evaluation and export.
//!
//! Every subcommand accepts `--config FILE` with `key = value` lines using the
//! long flag names; flags override the file, unknown keys are rejected, and the
//! fully resolved settings are logged to stderr. Failures print one
//! `error: ...` line and exit nonzero.

mod samples;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qfusion_core::circuit_ir::{export_qasm, Circuit, GateSetId};
use qfusion_core::dataset::{build_dataset, load_dataset, DatasetSpec};
use qfusion_core::eval::{evaluate_run, EvalOptions};
use qfusion_core::model::{train_with_progress, ModelCheckpoint, ModelConfig, TrainConfig};
use qfusion_core::sampler::{sample_circuits, EdgeMode, LabelSource, SamplerConfig, WireMode};
use qfusion_core::simulator::{CircuitLabel, Simulator};

use settings::{LabelArg, QubitList, Settings};

#[derive(Parser)]
#[command(
    name = "qfusion",
    version,
    about = "Layerwise discrete diffusion for quantum circuits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled random-circuit dataset.
    GenDataset(GenDatasetArgs),
    /// Train a model on a dataset; writes a checkpoint and a loss log.
    Train(TrainArgs),
    /// Draw circuits from a checkpoint.
    Sample(SampleArgs),
    /// Evaluate a sample file (validity, uniqueness, meaningfulness, expressibility).
    Eval(EvalArgs),
    /// Write the valid circuits of a sample or dataset file as OpenQASM 2.
    Export(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    gateset: Option<GateSetId>,
    /// Register sizes, e.g. `2` or `1-5` or `1,3`.
    #[arg(long)]
    qubits: Option<QubitList>,
    #[arg(long)]
    gates: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checked against the dataset when given.
    #[arg(long)]
    gateset: Option<GateSetId>,
    /// Largest register the model supports (default: largest in the dataset).
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Diffusion steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-epoch loss CSV (default: `<out>.loss.csv`).
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Checked against the checkpoint when given.
    #[arg(long)]
    gateset: Option<GateSetId>,
    /// Register sizes; `count` is split evenly between them.
    #[arg(long)]
    qubits: Option<QubitList>,
    #[arg(long)]
    count: Option<usize>,
    /// `wire_head` or `wire_free`.
    #[arg(long)]
    mode: Option<WireMode>,
    /// `constrained` or `free`.
    #[arg(long)]
    edge_mode: Option<EdgeMode>,
    #[arg(long)]
    max_layers: Option<usize>,
    /// Fixed conditioning label `re,im` (default: drawn from the training labels).
    #[arg(long)]
    label: Option<LabelArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Sample file written by `qfusion sample`.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Fidelity pairs per circuit.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `text` or `csv` (default: from the output extension).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    expressibility: Option<bool>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    /// Sample file or dataset file.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn log_resolved(command: &str, resolved: &[(&str, String)]) {
    eprintln!("qfusion {command}: resolved config");
    for (k, v) in resolved {
        eprintln!("  {k} = {v}");
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn gen_dataset(a: GenDatasetArgs, sim: &Simulator) -> Result<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let out = s.path("out", a.common.out, None)?;
    let gateset: GateSetId = s.get("gateset", a.gateset, None)?;
    let qubits: QubitList = s.get("qubits", a.qubits, Some(QubitList(vec![2])))?;
    let gates: usize = s.get("gates", a.gates, Some(8))?;
    let samples: usize = s.get("samples", a.samples, Some(1000))?;
    let seed: u64 = s.get("seed", a.seed, Some(0))?;
    log_resolved("gen-dataset", &s.finish()?);

    let spec = DatasetSpec::new(gateset, qubits.0, gates, samples, seed);
    let ds = build_dataset(&spec, &out, sim)?;
    eprintln!("wrote {} records to {}", ds.len(), out.display());
    Ok(())
}

fn train(a: TrainArgs, sim: &Simulator) -> Result<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let dataset = s.path("dataset", a.dataset, None)?;
    let out = s.path("out", a.common.out, None)?;
    let default_log = PathBuf::from(format!("{}.loss.csv", out.display()));
    let loss_log = s.path("loss-log", a.loss_log, Some(default_log))?;
    let gateset: Option<GateSetId> = s.get_opt("gateset", a.gateset)?;
    let defaults = TrainConfig::default();
    let epochs = s.get("epochs", a.epochs, Some(defaults.epochs))?;
    let steps = s.get("steps", a.steps, Some(defaults.steps))?;
    let batch_size = s.get("batch-size", a.batch_size, Some(defaults.batch_size))?;
    let learning_rate = s.get("lr", a.lr, Some(defaults.learning_rate))?;
    let seed = s.get("seed", a.seed, Some(defaults.seed))?;
    let ds =
        load_dataset(&dataset, sim).with_context(|| format!("dataset {}", dataset.display()))?;
    let largest = ds
        .records
        .iter()
        .map(|r| r.circuit.num_qubits())
        .max()
        .unwrap_or(1);
    let max_qubits: usize = s.get("qubits", a.qubits, Some(largest))?;
    log_resolved("train", &s.finish()?);

    if let Some(g) = gateset {
        if g != ds.gateset_id {
            bail!(
                "gateset {g} does not match dataset gateset {}",
                ds.gateset_id
            );
        }
    }
    let config = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        seed,
        steps,
        ..defaults
    };
    let model = ModelConfig::new(ds.gateset_id, max_qubits);
    let mut log = String::from("epoch,total,size,node,edge\n");
    let ckpt = train_with_progress(&ds, &model, &config, |epoch, l| {
        eprintln!(
            "epoch {:>4}  loss {:.6} (size {:.6}, node {:.6}, edge {:.6})",
            epoch + 1,
            l.total,
            l.size,
            l.node,
            l.edge
        );
        log.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            epoch + 1,
            l.total,
            l.size,
            l.node,
            l.edge
        ));
    })?;
    ckpt.save(&out)?;
    write_file(&loss_log, log)?;
    eprintln!(
        "wrote checkpoint {} and loss log {}",
        out.display(),
        loss_log.display()
    );
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let checkpoint = s.path("checkpoint", a.checkpoint, None)?;
    let out = s.path("out", a.common.out, None)?;
    let ckpt = ModelCheckpoint::load(&checkpoint)?;
    let gateset: Option<GateSetId> = s.get_opt("gateset", a.gateset)?;
    let mut pool: Vec<usize> = ckpt.label_pool.iter().map(|&(n, _)| n).collect();
    pool.sort_unstable();
    pool.dedup();
    let default_qubits = (!pool.is_empty()).then_some(QubitList(pool));
    let qubits: QubitList = s.get("qubits", a.qubits, default_qubits)?;
    let count: usize = s.get("count", a.count, Some(100))?;
    let mode: WireMode = s.get("mode", a.mode, Some(WireMode::WireHead))?;
    let edge_mode: EdgeMode = s.get("edge-mode", a.edge_mode, Some(EdgeMode::Constrained))?;
    let max_layers: usize = s.get(
        "max-layers",
        a.max_layers,
        Some(SamplerConfig::new(1, 0).max_layers),
    )?;
    let label: Option<LabelArg> = s.get_opt("label", a.label)?;
    let seed: u64 = s.get("seed", a.seed, Some(0))?;
    let resolved = s.finish()?;
    log_resolved("sample", &resolved);

    let label_source = label.map_or(LabelSource::Empirical, |l| {
        LabelSource::Fixed(CircuitLabel::new(l.0, l.1))
    });
    let mut all = Vec::with_capacity(count);
    for (k, &n) in qubits.0.iter().enumerate() {
        let share = count / qubits.0.len() + usize::from(k < count % qubits.0.len());
        let config = SamplerConfig {
            mode,
            edge_mode,
            max_layers,
            label_source,
            gateset_id: gateset,
            ..SamplerConfig::new(n, seed)
        };
        all.extend(sample_circuits(&ckpt, &config, share)?);
    }
    let header: Vec<(&str, String)> = resolved
        .iter()
        .filter(|(k, _)| !matches!(*k, "checkpoint" | "out" | "gateset"))
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    write_file(&out, samples::render(ckpt.gateset_id(), &header, &all))?;
    let valid = all.iter().filter(|c| c.is_valid()).count();
    eprintln!(
        "wrote {} samples ({valid} valid) to {}",
        all.len(),
        out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs, sim: &Simulator) -> Result<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input = s.path("samples", a.samples, None)?;
    let out = s.path("out", a.common.out, None)?;
    let defaults = EvalOptions::default();
    let num_pairs = s.get("pairs", a.pairs, Some(defaults.num_pairs))?;
    let num_bins = s.get("bins", a.bins, Some(defaults.num_bins))?;
    let seed = s.get("seed", a.seed, Some(defaults.seed))?;
    let expressibility = s.get("expressibility", a.expressibility, Some(true))?;
    let by_extension = if out.extension().is_some_and(|e| e == "csv") {
        "csv"
    } else {
        "text"
    };
    let format: String = s.get("format", a.format, Some(by_extension.to_string()))?;
    log_resolved("eval", &s.finish()?);

    let text =
        std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let file = samples::parse(&text).with_context(|| format!("sample file {}", input.display()))?;
    eprintln!(
        "evaluating {} {} samples",
        file.entries.len(),
        file.gateset_id
    );
    let options = EvalOptions {
        num_pairs,
        num_bins,
        seed,
        expressibility,
    };
    let report = evaluate_run(&file.entries, &options, sim)?;
    let rendered = match format.as_str() {
        "csv" => report.to_csv(),
        "text" => report.to_text(),
        other => bail!("unknown format '{other}' (expected text or csv)"),
    };
    write_file(&out, &rendered)?;
    print!("{}", report.to_text());
    Ok(())
}

fn export(a: ExportArgs, sim: &Simulator) -> Result<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    let input = s.path("input", a.input, None)?;
    let out = s.path("out", a.common.out, None)?;
    log_resolved("export", &s.finish()?);

    let text =
        std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let circuits: Vec<Option<Circuit>> = if text.starts_with(samples::MAGIC) {
        samples::parse(&text)?
            .entries
            .into_iter()
            .map(|e| e.circuit)
            .collect()
    } else {
        load_dataset(&input, sim)
            .with_context(|| format!("dataset {}", input.display()))?
            .records
            .into_iter()
            .map(|r| Some(r.circuit))
            .collect()
    };
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = 0;
    for (i, c) in circuits.iter().enumerate() {
        if let Some(c) = c {
            write_file(&out.join(format!("circuit_{i:05}.qasm")), export_qasm(c)?)?;
            written += 1;
        }
    }
    eprintln!(
        "wrote {written} of {} circuits to {}",
        circuits.len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let sim = Simulator::default();
    match cli.command {
        Command::GenDataset(a) => gen_dataset(a, &sim),
        Command::Train(a) => train(a, &sim),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a, &sim),
        Command::Export(a) => export(a, &sim),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: ").trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
