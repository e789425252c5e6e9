use qfusion_core::circuit_ir::{CircuitDag, GateSetId};
use qfusion_core::dataset::{Dataset, DatasetSpec};
use qfusion_core::diffusion::NoiseSchedule;
use qfusion_core::model::*;
use qfusion_core::sampler::{sample_circuits, EdgeMode, SamplerConfig};
use qfusion_core::simulator::Simulator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(gateset: GateSetId, qubits: Vec<usize>, gates: usize, n: usize, seed: u64) -> Dataset {
    Dataset::generate(
        &DatasetSpec::new(gateset, qubits, gates, n, seed),
        &Simulator::with_max_qubits(10),
    )
    .unwrap()
}

fn small_config(gateset: GateSetId, max_qubits: usize) -> ModelConfig {
    ModelConfig {
        gateset_id: gateset,
        max_qubits,
        encoder: EncoderConfig {
            node_embed_dim: 6,
            wire_embed_dim: 3,
            message_rounds: 2,
            hidden_dim: 7,
            timestep_embed_dim: 4,
            label_embed_dim: 3,
        },
        head_embed_dim: 4,
        qubit_embed_dim: 3,
    }
}

fn micro_batch(
    ds: &Dataset,
    max_qubits: usize,
    num_gates: usize,
    seed: u64,
) -> (Vec<LayerItem>, Vec<NoisyItem>) {
    let schedule = NoiseSchedule::cosine(32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<LayerItem> = ds
        .records
        .iter()
        .flat_map(|r| layer_items(&CircuitDag::from_circuit(&r.circuit), r.label, max_qubits))
        .collect();
    let noisy = items
        .iter()
        .map(|it| noise_item(it, num_gates, &schedule, &mut rng))
        .collect();
    (items, noisy)
}

fn randomize(params: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..params.len() {
        for x in &mut params.get_mut(ParamId(i)).data {
            *x = rng.random_range(-0.5..0.5);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let config = small_config(GateSetId::HeronP, 3);
    let ds = dataset(GateSetId::HeronP, vec![2, 3], 4, 2, 8);
    let (net, mut params) = Network::init(&config, &mut ChaCha8Rng::seed_from_u64(1));
    // zero output layers would hide upstream gradient errors
    randomize(&mut params, 2);
    let (items, noisy) = micro_batch(&ds, 3, net.num_gates(), 3);
    let batch: Vec<_> = items.iter().zip(&noisy).collect();
    assert!(items.iter().any(|it| it.edges.contains(&1)));
    let check = gradient_check(&net, &params, &batch, 1e-5, 1e-4);
    assert_eq!(check.checked, params.num_scalars());
    assert!(check.max_rel_error <= 1e-5, "{check:?}");
}

#[test]
fn untrained_model_is_uniform_over_allowed_classes() {
    let config = ModelConfig::new(GateSetId::Custom22, 3);
    let ckpt = ModelCheckpoint::untrained(&config, NoiseSchedule::cosine(32), 4).unwrap();
    let net = ckpt.network();
    let ds = dataset(GateSetId::Custom22, vec![2], 5, 1, 1);
    let item = &layer_items(
        &CircuitDag::from_circuit(&ds.records[0].circuit),
        ds.records[0].label,
        3,
    )[1];
    let mut tape = Tape::new(&ckpt.params);
    let enc = net.encode(&mut tape, &item.graph);
    let size = net.size_logits(&mut tape, &enc);
    let size = tape.value(size).clone();
    assert_eq!(size.data.len(), 4);
    assert!(size.data.iter().all(|&x| x == size.data[0]));
    let (g, w) = net.node_logits(&mut tape, &enc, 7, &item.gates, &item.wires);
    assert!(tape.value(g).data.iter().all(|&x| x == 0.0));
    assert!(tape.value(w).data.iter().all(|&x| x == 0.0));
    // masks: 2 qubits allow sizes 0..=2 and wire classes 0..4
    let m = net.size_mask(2);
    assert_eq!(m.data.iter().filter(|x| x.is_finite()).count(), 3);
    let wm = net.wire_mask(2, 1);
    assert_eq!(wm.data.iter().filter(|x| x.is_finite()).count(), 4);
    // no two-qubit gates on a single qubit
    let gm = net.gate_mask(1, 1);
    assert_eq!(gm.data.iter().filter(|x| x.is_finite()).count(), 11);
}

/// Reorders the encoder's node list by `perm` (new position `i` holds old node `perm[i]`).
fn permute(g: &GraphInput, perm: &[usize]) -> GraphInput {
    let n = perm.len();
    let rows = |t: &Tensor| {
        let mut out = Tensor::zeros(t.rows, t.cols);
        for (i, &p) in perm.iter().enumerate() {
            out.data[i * t.cols..(i + 1) * t.cols]
                .copy_from_slice(&t.data[p * t.cols..(p + 1) * t.cols]);
        }
        out
    };
    let square = |t: &Tensor| {
        let mut out = Tensor::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = t.data[perm[i] * n + perm[j]];
            }
        }
        out
    };
    GraphInput {
        tokens: perm.iter().map(|&p| g.tokens[p]).collect(),
        wire_classes: perm.iter().map(|&p| g.wire_classes[p]).collect(),
        layers: perm.iter().map(|&p| g.layers[p]).collect(),
        wires: perm.iter().map(|&p| g.wires[p].clone()).collect(),
        node_ids: perm.iter().map(|&p| g.node_ids[p]).collect(),
        adj_in: square(&g.adj_in),
        adj_out: square(&g.adj_out),
        labels_in: rows(&g.labels_in),
        labels_out: rows(&g.labels_out),
        open: rows(&g.open),
        ..g.clone()
    }
}

#[test]
fn encoder_is_permutation_invariant_and_input_sensitive() {
    let config = ModelConfig::new(GateSetId::Custom22, 3);
    let ckpt = ModelCheckpoint::untrained(&config, NoiseSchedule::cosine(32), 9).unwrap();
    let net = ckpt.network();
    let ds = dataset(GateSetId::Custom22, vec![3], 8, 1, 2);
    let r = &ds.records[0];
    let items = layer_items(&CircuitDag::from_circuit(&r.circuit), r.label, 3);
    let g = &items.last().unwrap().graph;
    let n = g.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let shuffled = permute(g, &perm);

    let mut tape = Tape::new(&ckpt.params);
    let a = net.encode(&mut tape, g);
    let b = net.encode(&mut tape, &shuffled);
    let (ga, gb) = (tape.value(a.graph).clone(), tape.value(b.graph).clone());
    for (x, y) in ga.data.iter().zip(&gb.data) {
        assert!((x - y).abs() < 1e-12);
    }
    let d = config.encoder.node_embed_dim;
    let (na, nb) = (tape.value(a.nodes).clone(), tape.value(b.nodes).clone());
    for (i, &p) in perm.iter().enumerate() {
        for k in 0..d {
            assert!((nb.data[i * d + k] - na.data[p * d + k]).abs() < 1e-12);
        }
    }

    // changing one gate or the label changes the embedding
    let mut other = g.clone();
    let last = n - 1;
    other.tokens[last] = (other.tokens[last] + 1) % net.num_gates();
    let c = net.encode(&mut tape, &other);
    assert!(tape
        .value(c.graph)
        .data
        .iter()
        .zip(&ga.data)
        .any(|(x, y)| (x - y).abs() > 1e-9));
    let mut relabelled = g.clone();
    relabelled.label.re += 1.0;
    let c = net.encode(&mut tape, &relabelled);
    assert!(tape
        .value(c.graph)
        .data
        .iter()
        .zip(&ga.data)
        .any(|(x, y)| (x - y).abs() > 1e-9));
}

#[test]
fn heads_are_independently_parameterized() {
    let config = small_config(GateSetId::HeronNp, 2);
    let ds = dataset(GateSetId::HeronNp, vec![2], 6, 3, 5);
    let (net, mut params) = Network::init(&config, &mut ChaCha8Rng::seed_from_u64(1));
    randomize(&mut params, 6);
    let (items, noisy) = micro_batch(&ds, 2, net.num_gates(), 7);
    let batch: Vec<_> = items.iter().zip(&noisy).collect();
    let base = batch_loss(&net, &params, &batch).2;
    for group in [Group::SizeHead, Group::NodeHead, Group::EdgeHead] {
        let mut moved = params.clone();
        for i in 0..moved.len() {
            if moved.group(ParamId(i)) == group {
                moved
                    .get_mut(ParamId(i))
                    .data
                    .iter_mut()
                    .for_each(|x| *x += 0.3);
            }
        }
        let l = batch_loss(&net, &moved, &batch).2;
        let same = |a: f64, b: f64| a == b;
        assert_eq!(
            same(l.size, base.size),
            group != Group::SizeHead,
            "{group:?}"
        );
        assert_eq!(
            same(l.node, base.node),
            group != Group::NodeHead,
            "{group:?}"
        );
        assert_eq!(
            same(l.edge, base.edge),
            group != Group::EdgeHead,
            "{group:?}"
        );
    }
    // the gradient of each head's loss touches only its own head plus the encoder
    let mut grads = Grads::zeros_like(&params);
    let (tape, loss, _) = batch_loss(&net, &params, &batch);
    tape.backward(loss, &mut grads);
    for g in Group::ALL {
        let touched = (0..params.len())
            .filter(|&i| params.group(ParamId(i)) == g)
            .any(|i| grads.get(ParamId(i)).data.iter().any(|&x| x != 0.0));
        assert!(touched, "{g:?} receives no gradient");
    }
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let ds = dataset(GateSetId::HeronNp, vec![2], 5, 12, 3);
    let config = small_config(GateSetId::HeronNp, 2);
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 11,
        ..Default::default()
    };
    let a = train(&ds, &config, &tc).unwrap();
    let b = train(&ds, &config, &tc).unwrap();
    assert_eq!(a.meta.history, b.meta.history);
    assert_eq!(a.to_bytes(), b.to_bytes());
    let other = train(
        &ds,
        &config,
        &TrainConfig {
            seed: 12,
            ..tc.clone()
        },
    )
    .unwrap();
    assert_ne!(a.meta.history, other.meta.history);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    a.save(&path).unwrap();
    let back = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_bytes(), a.to_bytes());
    assert_eq!(back.label_pool.len(), 12);
    assert_eq!(back.meta.epochs, 3);

    let bytes = a.to_bytes();
    assert!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(ModelCheckpoint::from_bytes(&extra).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(ModelCheckpoint::from_bytes(&bad).is_err());
    assert!(ModelCheckpoint::from_bytes(&[]).is_err());
}

#[test]
fn training_rejects_bad_inputs() {
    let ds = dataset(GateSetId::HeronNp, vec![3], 4, 2, 3);
    let wrong_set = small_config(GateSetId::HeronP, 3);
    assert!(matches!(
        train(&ds, &wrong_set, &TrainConfig::default()),
        Err(ModelError::GateSetMismatch { .. })
    ));
    let too_small = small_config(GateSetId::HeronNp, 2);
    assert!(matches!(
        train(&ds, &too_small, &TrainConfig::default()),
        Err(ModelError::QubitBound { .. })
    ));
    let empty = Dataset {
        records: Vec::new(),
        ..ds.clone()
    };
    let ok = small_config(GateSetId::HeronNp, 3);
    assert!(matches!(
        train(&empty, &ok, &TrainConfig::default()),
        Err(ModelError::EmptyDataset)
    ));
    let bad_lr = TrainConfig {
        learning_rate: f64::NAN,
        ..Default::default()
    };
    assert!(matches!(
        train(&ds, &ok, &bad_lr),
        Err(ModelError::Config(_))
    ));
}

/// 600-record 2-qubit 8-gate run, then dataset-statistic oracles on the result.
#[test]
fn desk_training_run() {
    let ds = dataset(GateSetId::HeronNp, vec![2], 8, 600, 1);
    let config = ModelConfig::new(GateSetId::HeronNp, 2);
    let mut seen = 0;
    let ckpt = train_with_progress(
        &ds,
        &config,
        &TrainConfig {
            epochs: 20,
            seed: 7,
            ..Default::default()
        },
        |e, l| {
            assert_eq!(e, seen);
            assert!(l.total.is_finite());
            seen += 1;
        },
    )
    .unwrap();
    let h = &ckpt.meta.history;
    assert_eq!(h.len(), 20);
    assert!(
        h[19].total < 0.7 * h[0].total,
        "{} -> {}",
        h[0].total,
        h[19].total
    );

    // teacher-forced layer sizes
    let net = ckpt.network();
    let (mut expected, mut actual, mut layers) = (0.0, 0.0, 0usize);
    let (mut stops, mut confident_stops) = (0usize, 0usize);
    for r in &ds.records {
        for item in layer_items(&CircuitDag::from_circuit(&r.circuit), r.label, 2) {
            let mut tape = Tape::new(&ckpt.params);
            let enc = net.encode(&mut tape, &item.graph);
            let logits = net.size_logits(&mut tape, &enc);
            let probs = qfusion_core::diffusion::softmax_checked(&tape.value(logits).data).unwrap();
            if item.size() == 0 {
                stops += 1;
                confident_stops += usize::from(probs[0] >= 0.5);
            } else {
                expected += probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| k as f64 * p)
                    .sum::<f64>();
                actual += item.size() as f64;
                layers += 1;
            }
        }
    }
    let (expected, actual) = (expected / layers as f64, actual / layers as f64);
    assert!((expected - actual).abs() <= 1.0, "{expected} vs {actual}");
    assert!(
        confident_stops as f64 >= 0.8 * stops as f64,
        "{confident_stops}/{stops}"
    );

    // sampled gate marginal and gate count
    let train_marginal = gate_marginal(ds.records.iter().map(|r| r.circuit.clone()), 4);
    let out = sample_circuits(&ckpt, &SamplerConfig::new(2, 0), 500).unwrap();
    let circuits: Vec<_> = out.iter().map(|s| s.circuit.clone().unwrap()).collect();
    let sampled = gate_marginal(circuits.iter().cloned(), 4);
    let tv: f64 = 0.5
        * train_marginal
            .iter()
            .zip(&sampled)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    assert!(tv <= 0.15, "{tv}");
    let mean_gates = circuits.iter().map(|c| c.len()).sum::<usize>() as f64 / circuits.len() as f64;
    assert!((6.0..=10.0).contains(&mean_gates), "{mean_gates}");

    // free edges: single-qubit gates mostly receive exactly one edge
    let free = SamplerConfig {
        edge_mode: EdgeMode::Free,
        ..SamplerConfig::new(2, 1)
    };
    let (mut degree, mut nodes) = (0usize, 0usize);
    for s in sample_circuits(&ckpt, &free, 300).unwrap() {
        for (id, node) in s.dag.nodes.iter().enumerate() {
            if node.is_gate() && node.wires.len() == 1 {
                degree += s.dag.edges.iter().filter(|e| e.dst == id).count();
                nodes += 1;
            }
        }
    }
    let mean_degree = degree as f64 / nodes as f64;
    assert!((mean_degree - 1.0).abs() <= 0.3, "{mean_degree}");
}

fn gate_marginal(
    circuits: impl Iterator<Item = qfusion_core::circuit_ir::Circuit>,
    k: usize,
) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for c in circuits {
        for g in c.gates() {
            counts[g.gate_index] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

#[test]
fn learning_rate_decays_along_a_cosine() {
    let tc = TrainConfig {
        learning_rate: 1.0,
        final_lr_fraction: 0.1,
        ..Default::default()
    };
    assert_eq!(tc.learning_rate_at(0, 11), 1.0);
    assert!((tc.learning_rate_at(5, 11) - 0.55).abs() < 1e-12);
    assert!((tc.learning_rate_at(10, 11) - 0.1).abs() < 1e-12);
}
