//! Teacher-forced training over DAG layers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{ModelCheckpoint, TrainingMeta};
use super::features::{wire_class, wire_vocab_size, GraphInput};
use super::network::Network;
use super::tape::{Grads, ParamId, ParamStore, Tape, Tensor, Var};
use super::{ModelConfig, ModelError};
use crate::circuit_ir::CircuitDag;
use crate::dataset::Dataset;
use crate::diffusion::{q_sample, CategoricalVar, NoiseSchedule, DEFAULT_STEPS};
use crate::simulator::CircuitLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// The step size follows a cosine from `learning_rate` down to
    /// `learning_rate * final_lr_fraction` over the run.
    pub final_lr_fraction: f64,
    pub seed: u64,
    /// Diffusion steps `T`.
    pub steps: usize,
}

impl TrainConfig {
    /// Step size for update `step` of `total`.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let progress = if total <= 1 {
            0.0
        } else {
            step as f64 / (total - 1) as f64
        };
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            final_lr_fraction: 0.05,
            seed: 0,
            steps: DEFAULT_STEPS,
        }
    }
}

/// One teacher-forced prediction target: the clean prefix below a layer and
/// that layer's contents. A layer of size 0 is the stop target after the
/// final layer.
#[derive(Debug, Clone)]
pub struct LayerItem {
    pub graph: GraphInput,
    pub num_qubits: usize,
    pub gates: Vec<usize>,
    pub wires: Vec<usize>,
    /// `edges[i * P + p] = 1` when prefix node `p` feeds new node `i`.
    pub edges: Vec<usize>,
}

impl LayerItem {
    pub fn size(&self) -> usize {
        self.gates.len()
    }
}

/// Layer targets of one DAG: one per gate layer plus the stop target.
pub fn layer_items(dag: &CircuitDag, label: CircuitLabel, max_qubits: usize) -> Vec<LayerItem> {
    let mut items = Vec::new();
    for (k, mut layer) in dag.gate_layers().into_iter().enumerate() {
        // canonical slot order within a layer: by lowest wire
        layer.sort_by_key(|&v| dag.nodes[v].wires.iter().copied().min());
        let graph = GraphInput::from_dag(dag, k + 1, label, max_qubits);
        let p = graph.len();
        let mut edges = vec![0; layer.len() * p];
        for (i, &v) in layer.iter().enumerate() {
            for e in dag.edges.iter().filter(|e| e.dst == v) {
                if let Some(j) = graph.node_ids.iter().position(|&id| id == e.src) {
                    edges[i * p + j] = 1;
                }
            }
        }
        items.push(LayerItem {
            num_qubits: dag.num_qubits,
            gates: layer
                .iter()
                .map(|&v| dag.nodes[v].gate_index.unwrap())
                .collect(),
            wires: layer
                .iter()
                .map(|&v| wire_class(&dag.nodes[v].wires))
                .collect(),
            edges,
            graph,
        });
    }
    items.push(LayerItem {
        num_qubits: dag.num_qubits,
        graph: GraphInput::from_dag(dag, usize::MAX, label, max_qubits),
        gates: Vec::new(),
        wires: Vec::new(),
        edges: Vec::new(),
    });
    items
}

/// Forward-noised copy of a layer's categories. Node attributes and edge
/// bits get independent steps.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyItem {
    pub t_node: usize,
    pub gates: Vec<usize>,
    pub wires: Vec<usize>,
    pub t_edge: usize,
    pub bits: Vec<usize>,
}

pub fn noise_item<R: Rng + ?Sized>(
    item: &LayerItem,
    num_gates: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> NoisyItem {
    let steps = schedule.total_steps();
    let kw = wire_vocab_size(item.num_qubits);
    let noise = |x: usize, k: usize, t: usize, rng: &mut R| {
        q_sample(CategoricalVar::new(k, x), t, schedule, rng)
            .expect("step in range")
            .value()
    };
    let t_node = rng.random_range(1..=steps);
    let gates = item
        .gates
        .iter()
        .map(|&g| noise(g, num_gates, t_node, rng))
        .collect();
    let wires = item
        .wires
        .iter()
        .map(|&w| noise(w, kw, t_node, rng))
        .collect();
    let t_edge = rng.random_range(1..=steps);
    let bits = item
        .edges
        .iter()
        .map(|&b| noise(b, 2, t_edge, rng))
        .collect();
    NoisyItem {
        t_node,
        gates,
        wires,
        t_edge,
        bits,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub size: f64,
    pub node: f64,
    pub edge: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.size.is_finite()
            && self.node.is_finite()
            && self.edge.is_finite()
    }
}

/// Mean per-target cross-entropies of a batch, summed over the three heads.
/// Returns the tape so the caller can backpropagate from the loss var.
pub fn batch_loss<'p>(
    net: &Network,
    params: &'p ParamStore,
    batch: &[(&LayerItem, &NoisyItem)],
) -> (Tape<'p>, Var, LossBreakdown) {
    let mut tape = Tape::new(params);
    let n_items = batch.len();
    let n_nodes: usize = batch.iter().map(|(it, _)| it.size()).sum();
    let n_pairs: usize = batch.iter().map(|(it, _)| it.edges.len()).sum();
    let (mut size_terms, mut node_terms, mut edge_terms) = (Vec::new(), Vec::new(), Vec::new());
    for &(item, noisy) in batch {
        let enc = net.encode(&mut tape, &item.graph);
        let logits = net.size_logits(&mut tape, &enc);
        let mask = net.size_mask(item.num_qubits);
        size_terms.push(tape.cross_entropy(
            logits,
            &[item.size()],
            Some(&mask),
            1.0 / n_items as f64,
        ));
        if item.size() == 0 {
            continue;
        }
        let s = item.size();
        let (gl, wl) = net.node_logits(&mut tape, &enc, noisy.t_node, &noisy.gates, &noisy.wires);
        let gm = net.gate_mask(item.num_qubits, s);
        let wm = net.wire_mask(item.num_qubits, s);
        node_terms.push(tape.cross_entropy(gl, &item.gates, Some(&gm), 1.0 / n_nodes as f64));
        node_terms.push(tape.cross_entropy(wl, &item.wires, Some(&wm), 1.0 / n_nodes as f64));
        let el = net.edge_logits(
            &mut tape,
            &enc,
            &item.graph,
            noisy.t_edge,
            &item.gates,
            &item.wires,
            &noisy.bits,
        );
        edge_terms.push(tape.cross_entropy(el, &item.edges, None, 1.0 / n_pairs as f64));
    }
    let mut group = |terms: &[Var]| {
        if terms.is_empty() {
            tape.constant(Tensor::zeros(1, 1))
        } else {
            tape.sum(terms)
        }
    };
    let size = group(&size_terms);
    let node = group(&node_terms);
    let edge = group(&edge_terms);
    let total = tape.sum(&[size, node, edge]);
    let breakdown = LossBreakdown {
        total: tape.value(total).scalar(),
        size: tape.value(size).scalar(),
        node: tape.value(node).scalar(),
        edge: tape.value(edge).scalar(),
    };
    (tape, total, breakdown)
}

/// Adam with bias correction; every parameter tensor has its own moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros = Grads::zeros_like(params).tensors;
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let id = ParamId(i);
            let g = &grads.get(id).data;
            let m = &mut self.m[id.0].data;
            let v = &mut self.v[id.0].data;
            let p = &mut params.get_mut(id).data;
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= self.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Per-epoch means of the batch losses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochLoss {
    pub total: f64,
    pub size: f64,
    pub node: f64,
    pub edge: f64,
}

pub fn train(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<ModelCheckpoint, ModelError> {
    train_with_progress(dataset, model, config, |_, _| {})
}

/// Trains from scratch; `progress(epoch, loss)` is called after each epoch.
pub fn train_with_progress(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &EpochLoss),
) -> Result<ModelCheckpoint, ModelError> {
    model.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if dataset.gateset_id != model.gateset_id {
        return Err(ModelError::GateSetMismatch {
            expected: model.gateset_id,
            found: dataset.gateset_id,
        });
    }
    if config.batch_size == 0 || config.steps == 0 {
        return Err(ModelError::Config(
            "batch_size and steps must be at least 1".into(),
        ));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(ModelError::Config("learning_rate must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.final_lr_fraction) {
        return Err(ModelError::Config(
            "final_lr_fraction must lie in [0, 1]".into(),
        ));
    }
    for r in &dataset.records {
        if r.circuit.gateset_id() != model.gateset_id {
            return Err(ModelError::GateSetMismatch {
                expected: model.gateset_id,
                found: r.circuit.gateset_id(),
            });
        }
        if r.circuit.num_qubits() > model.max_qubits {
            return Err(ModelError::QubitBound {
                num_qubits: r.circuit.num_qubits(),
                max: model.max_qubits,
            });
        }
    }

    let schedule = NoiseSchedule::cosine(config.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (net, mut params) = Network::init(model, &mut rng);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);

    let items: Vec<Vec<LayerItem>> = dataset
        .records
        .iter()
        .map(|r| {
            layer_items(
                &CircuitDag::from_circuit(&r.circuit),
                r.label,
                model.max_qubits,
            )
        })
        .collect();
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut grads = Grads::zeros_like(&params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let total_updates = config.epochs * items.len().div_ceil(config.batch_size);
    let mut update = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut noise_rng);
        let mut acc = EpochLoss::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let targets: Vec<&LayerItem> = chunk.iter().flat_map(|&r| items[r].iter()).collect();
            let noisy: Vec<NoisyItem> = targets
                .iter()
                .map(|it| noise_item(it, net.num_gates(), &schedule, &mut noise_rng))
                .collect();
            let batch: Vec<(&LayerItem, &NoisyItem)> =
                targets.iter().copied().zip(noisy.iter()).collect();
            let (tape, loss, parts) = batch_loss(&net, &params, &batch);
            if !parts.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("{parts:?}"),
                });
            }
            grads.clear();
            tape.backward(loss, &mut grads);
            drop(tape);
            if !grads.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: "non-finite gradient".into(),
                });
            }
            adam.learning_rate = config.learning_rate_at(update, total_updates);
            adam.step(&mut params, &grads);
            update += 1;
            acc.total += parts.total;
            acc.size += parts.size;
            acc.node += parts.node;
            acc.edge += parts.edge;
            batches += 1;
        }
        let k = batches as f64;
        let mean = EpochLoss {
            total: acc.total / k,
            size: acc.size / k,
            node: acc.node / k,
            edge: acc.edge / k,
        };
        progress(epoch, &mean);
        history.push(mean);
    }

    let meta = TrainingMeta {
        epochs: config.epochs,
        seed: config.seed,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        history,
    };
    let label_pool = dataset
        .records
        .iter()
        .map(|r| (r.circuit.num_qubits(), r.label))
        .collect();
    Ok(ModelCheckpoint {
        config: model.clone(),
        schedule,
        params,
        meta,
        label_pool,
    })
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `name[index]` of the worst scalar.
    pub worst: String,
    pub checked: usize,
}

/// Compares the tape gradient of `batch_loss` with central differences of
/// step `h` for every parameter scalar. The relative error is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn gradient_check(
    net: &Network,
    params: &ParamStore,
    batch: &[(&LayerItem, &NoisyItem)],
    h: f64,
    floor: f64,
) -> GradCheck {
    let mut grads = Grads::zeros_like(params);
    let (tape, loss, _) = batch_loss(net, params, batch);
    tape.backward(loss, &mut grads);
    drop(tape);

    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for i in 0..params.len() {
        let id = ParamId(i);
        for k in 0..params.get(id).data.len() {
            let x = params.get(id).data[k];
            probe.get_mut(id).data[k] = x + h;
            let up = batch_loss(net, &probe, batch).2.total;
            probe.get_mut(id).data[k] = x - h;
            let down = batch_loss(net, &probe, batch).2.total;
            probe.get_mut(id).data[k] = x;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).data[k];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            if err > out.max_rel_error || out.worst.is_empty() {
                out.max_rel_error = out.max_rel_error.max(err);
                out.worst = format!("{}[{k}]", params.name(id));
            }
            out.checked += 1;
        }
    }
    out
}
