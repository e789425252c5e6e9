//! Shared DAG encoder and the layer-size, node/wire and edge heads.

use rand::Rng;

use super::features::{sinusoidal, wire_tuple, wire_vocab_size, GraphInput};
use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use super::ModelConfig;
use crate::circuit_ir::GateSet;

#[derive(Debug, Clone)]
struct Round {
    w_self: ParamId,
    w_in: ParamId,
    w_out: ParamId,
    lab_in: ParamId,
    lab_out: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp {
    /// Hidden layer randomly initialised, output layer zero.
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        out: usize,
        rng: &mut R,
    ) -> Mlp {
        Mlp {
            w1: store.add_random(&format!("{prefix}.w1"), input, hidden, rng),
            b1: store.add_zeros(&format!("{prefix}.b1"), 1, hidden),
            w2: store.add_zeros(&format!("{prefix}.w2"), hidden, out),
            b2: store.add_zeros(&format!("{prefix}.b2"), 1, out),
        }
    }

    fn lookup(store: &ParamStore, prefix: &str) -> Mlp {
        let id = |s: &str| {
            store
                .id(&format!("{prefix}.{s}"))
                .unwrap_or_else(|| panic!("missing {prefix}.{s}"))
        };
        Mlp {
            w1: id("w1"),
            b1: id("b1"),
            w2: id("w2"),
            b2: id("b2"),
        }
    }

    fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.affine(x, self.w1, self.b1);
        let h = tape.tanh(h);
        tape.affine(h, self.w2, self.b2)
    }
}

/// Parameter handles; the tensors themselves live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    num_gates: usize,
    // encoder
    gate_emb: ParamId,
    wire_emb: ParamId,
    wire_proj: ParamId,
    open_proj: ParamId,
    rounds: Vec<Round>,
    label_w: ParamId,
    label_b: ParamId,
    qubit_emb: ParamId,
    // heads
    size_mlp: Mlp,
    node_gate_emb: ParamId,
    node_wire_emb: ParamId,
    node_size_emb: ParamId,
    node_slot_emb: ParamId,
    node_w1: ParamId,
    node_b1: ParamId,
    node_gate_out: ParamId,
    node_gate_bias: ParamId,
    node_wire_out: ParamId,
    node_wire_bias: ParamId,
    edge_gate_emb: ParamId,
    edge_wire_emb: ParamId,
    edge_bit_emb: ParamId,
    edge_mlp: Mlp,
}

/// Encoder output.
pub struct Encoding {
    /// `[1 x base_dim]`: pooled nodes, label, node count, qubit count and
    /// which wires were touched by the deepest layer.
    pub graph: Var,
    /// `[N x node_embed_dim]`
    pub nodes: Var,
    pub num_qubits: usize,
}

impl Network {
    pub fn max_width(&self) -> usize {
        self.config.max_qubits
    }

    pub fn num_gates(&self) -> usize {
        self.num_gates
    }

    pub fn wire_vocab(&self) -> usize {
        wire_vocab_size(self.config.max_qubits)
    }

    fn base_dim(c: &ModelConfig) -> usize {
        let e = &c.encoder;
        e.node_embed_dim
            + e.label_embed_dim
            + e.timestep_embed_dim
            + c.qubit_embed_dim
            + c.max_qubits
    }

    fn head_context_dim(c: &ModelConfig) -> usize {
        Self::base_dim(c) + c.encoder.timestep_embed_dim
    }

    /// Fresh parameters: embeddings and hidden layers random, head output
    /// layers zero (so an untrained model predicts uniformly).
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> (Network, ParamStore) {
        let mut s = ParamStore::new();
        let e = &config.encoder;
        let g = config.gateset_id.gate_set().len();
        let nq = config.max_qubits;
        let v = wire_vocab_size(nq);
        let d = e.node_embed_dim;
        let he = config.head_embed_dim;
        let hidden = e.hidden_dim;
        let ctx = Self::head_context_dim(config);

        s.add_random("encoder.gate_emb", g + 1, d, rng);
        s.add_random("encoder.wire_emb", v + 1, e.wire_embed_dim, rng);
        s.add_random("encoder.wire_proj", e.wire_embed_dim, d, rng);
        s.add_random("encoder.open_proj", nq, d, rng);
        for r in 0..e.message_rounds {
            s.add_random(&format!("encoder.r{r}.w_self"), d, d, rng);
            s.add_random(&format!("encoder.r{r}.w_in"), d, d, rng);
            s.add_random(&format!("encoder.r{r}.w_out"), d, d, rng);
            s.add_random(&format!("encoder.r{r}.lab_in"), nq, d, rng);
            s.add_random(&format!("encoder.r{r}.lab_out"), nq, d, rng);
            s.add_zeros(&format!("encoder.r{r}.bias"), 1, d);
        }
        s.add_random("encoder.label_w", 2, e.label_embed_dim, rng);
        s.add_zeros("encoder.label_b", 1, e.label_embed_dim);
        s.add_random("encoder.qubit_emb", nq + 1, config.qubit_embed_dim, rng);

        Mlp::new(&mut s, "size.mlp", ctx, hidden, nq + 1, rng);

        s.add_random("node.gate_emb", g, he, rng);
        s.add_random("node.wire_emb", v, he, rng);
        s.add_random("node.size_emb", nq + 1, he, rng);
        s.add_random("node.slot_emb", nq, he, rng);
        s.add_random("node.w1", ctx + 5 * he, hidden, rng);
        s.add_zeros("node.b1", 1, hidden);
        s.add_zeros("node.gate_out", hidden, g);
        s.add_zeros("node.gate_bias", 1, g);
        s.add_zeros("node.wire_out", hidden, v);
        s.add_zeros("node.wire_bias", 1, v);

        s.add_random("edge.gate_emb", g, he, rng);
        s.add_random("edge.wire_emb", v, he, rng);
        s.add_random("edge.bit_emb", 2, he, rng);
        Mlp::new(
            &mut s,
            "edge.mlp",
            ctx + d + nq + 2 + 2 * he,
            hidden,
            2,
            rng,
        );

        let net = Network::bind(config, &s);
        (net, s)
    }

    /// Resolves parameter handles by name, e.g. after loading a checkpoint.
    pub fn bind(config: &ModelConfig, s: &ParamStore) -> Network {
        let id = |n: &str| s.id(n).unwrap_or_else(|| panic!("missing parameter {n}"));
        let rounds = (0..config.encoder.message_rounds)
            .map(|r| Round {
                w_self: id(&format!("encoder.r{r}.w_self")),
                w_in: id(&format!("encoder.r{r}.w_in")),
                w_out: id(&format!("encoder.r{r}.w_out")),
                lab_in: id(&format!("encoder.r{r}.lab_in")),
                lab_out: id(&format!("encoder.r{r}.lab_out")),
                bias: id(&format!("encoder.r{r}.bias")),
            })
            .collect();
        Network {
            config: config.clone(),
            num_gates: config.gateset_id.gate_set().len(),
            gate_emb: id("encoder.gate_emb"),
            wire_emb: id("encoder.wire_emb"),
            wire_proj: id("encoder.wire_proj"),
            open_proj: id("encoder.open_proj"),
            rounds,
            label_w: id("encoder.label_w"),
            label_b: id("encoder.label_b"),
            qubit_emb: id("encoder.qubit_emb"),
            size_mlp: Mlp::lookup(s, "size.mlp"),
            node_gate_emb: id("node.gate_emb"),
            node_wire_emb: id("node.wire_emb"),
            node_size_emb: id("node.size_emb"),
            node_slot_emb: id("node.slot_emb"),
            node_w1: id("node.w1"),
            node_b1: id("node.b1"),
            node_gate_out: id("node.gate_out"),
            node_gate_bias: id("node.gate_bias"),
            node_wire_out: id("node.wire_out"),
            node_wire_bias: id("node.wire_bias"),
            edge_gate_emb: id("edge.gate_emb"),
            edge_wire_emb: id("edge.wire_emb"),
            edge_bit_emb: id("edge.bit_emb"),
            edge_mlp: Mlp::lookup(s, "edge.mlp"),
        }
    }

    pub fn encode(&self, tape: &mut Tape, g: &GraphInput) -> Encoding {
        let e = &self.config.encoder;
        let gate = tape.gather(self.gate_emb, &g.tokens);
        let wire = tape.gather(self.wire_emb, &g.wire_classes);
        let proj = tape.param(self.wire_proj);
        let wire = tape.matmul(wire, proj);
        let open = tape.constant(g.open.clone());
        let open_proj = tape.param(self.open_proj);
        let open = tape.matmul(open, open_proj);
        let pe = tape.constant(g.layer_encoding(e.node_embed_dim));
        let mut h = tape.add(gate, wire);
        h = tape.add(h, open);
        h = tape.add(h, pe);

        let a_in = tape.constant(g.adj_in.clone());
        let a_out = tape.constant(g.adj_out.clone());
        let c_in = tape.constant(g.labels_in.clone());
        let c_out = tape.constant(g.labels_out.clone());
        for r in &self.rounds {
            let w_self = tape.param(r.w_self);
            let w_in = tape.param(r.w_in);
            let w_out = tape.param(r.w_out);
            let lab_in = tape.param(r.lab_in);
            let lab_out = tape.param(r.lab_out);
            let mut m = tape.matmul(h, w_self);
            let hi = tape.matmul(h, w_in);
            let hi = tape.matmul(a_in, hi);
            m = tape.add(m, hi);
            let ho = tape.matmul(h, w_out);
            let ho = tape.matmul(a_out, ho);
            m = tape.add(m, ho);
            let li = tape.matmul(c_in, lab_in);
            m = tape.add(m, li);
            let lo = tape.matmul(c_out, lab_out);
            m = tape.add(m, lo);
            let b = tape.param(r.bias);
            m = tape.add_row(m, b);
            h = tape.tanh(m);
        }

        let pooled = tape.mean_rows(h);
        let label = tape.constant(Tensor::from_vec(1, 2, vec![g.label.re, g.label.im]));
        let label = tape.affine(label, self.label_w, self.label_b);
        let count = tape.constant(Tensor::from_vec(
            1,
            e.timestep_embed_dim,
            sinusoidal(g.len() as f64, e.timestep_embed_dim),
        ));
        let qubits = tape.gather(self.qubit_emb, &[g.num_qubits]);
        let recent = tape.constant(Tensor::from_vec(1, g.recent.len(), g.recent.clone()));
        let graph = tape.concat(&[pooled, label, count, qubits, recent]);
        Encoding {
            graph,
            nodes: h,
            num_qubits: g.num_qubits,
        }
    }

    fn context(&self, tape: &mut Tape, enc: &Encoding, t: usize, rows: usize) -> Var {
        let dim = self.config.encoder.timestep_embed_dim;
        let temb = tape.constant(Tensor::from_vec(1, dim, sinusoidal(t as f64, dim)));
        let ctx = tape.concat(&[enc.graph, temb]);
        tape.repeat(ctx, rows)
    }

    /// `[1 x (max_qubits + 1)]` logits over the next layer's size; 0 = stop.
    pub fn size_logits(&self, tape: &mut Tape, enc: &Encoding) -> Var {
        let ctx = self.context(tape, enc, 0, 1);
        self.size_mlp.forward(tape, ctx)
    }

    /// Gate and wire logits (`[s x |G|]`, `[s x max_qubits^2]`) for the `s`
    /// nodes of a new layer given their noisy categories at step `t`. Slot
    /// `i` is the node with the `i`-th lowest wire.
    pub fn node_logits(
        &self,
        tape: &mut Tape,
        enc: &Encoding,
        t: usize,
        gates: &[usize],
        wires: &[usize],
    ) -> (Var, Var) {
        let s = gates.len();
        assert!(s >= 1 && wires.len() == s);
        let ctx = self.context(tape, enc, t, s);
        let ge = tape.gather(self.node_gate_emb, gates);
        let we = tape.gather(self.node_wire_emb, wires);
        let both = tape.add(ge, we);
        let pooled = tape.mean_rows(both);
        let pooled = tape.repeat(pooled, s);
        let size = tape.gather(self.node_size_emb, &vec![s; s]);
        let slot = tape.gather(self.node_slot_emb, &(0..s).collect::<Vec<_>>());
        let x = tape.concat(&[ctx, ge, we, pooled, size, slot]);
        let h = tape.affine(x, self.node_w1, self.node_b1);
        let h = tape.tanh(h);
        let gate_logits = tape.affine(h, self.node_gate_out, self.node_gate_bias);
        let wire_logits = tape.affine(h, self.node_wire_out, self.node_wire_bias);
        (gate_logits, wire_logits)
    }

    /// `[s*P x 2]` logits for every (new node, prior node) pair, new-node
    /// major. Each pair also sees how many of the new node's wires the prior
    /// node holds open, and how many it acts on at all.
    #[allow(clippy::too_many_arguments)]
    pub fn edge_logits(
        &self,
        tape: &mut Tape,
        enc: &Encoding,
        graph: &GraphInput,
        t: usize,
        gates: &[usize],
        wires: &[usize],
        bits: &[usize],
    ) -> Var {
        let s = gates.len();
        let open = &graph.open;
        let p = open.rows;
        assert_eq!(bits.len(), s * p);
        let rows = s * p;
        let ctx = self.context(tape, enc, t, rows);
        let prior_idx: Vec<usize> = (0..rows).map(|r| r % p).collect();
        let new_idx: Vec<usize> = (0..rows).map(|r| r / p).collect();
        let hp = tape.select_rows(enc.nodes, &prior_idx);
        let open_rows: Vec<f64> = prior_idx
            .iter()
            .flat_map(|&i| open.row(i).iter().copied())
            .collect();
        let op = tape.constant(Tensor::from_vec(rows, open.cols, open_rows));
        let mut overlap = Vec::with_capacity(2 * rows);
        for r in 0..rows {
            let (i, j) = (new_idx[r], prior_idx[r]);
            let ws = wire_tuple(wires[i]);
            overlap.push(ws.iter().filter(|&&w| open.row(j)[w] > 0.0).count() as f64);
            overlap.push(ws.iter().filter(|w| graph.wires[j].contains(w)).count() as f64);
        }
        let overlap = tape.constant(Tensor::from_vec(rows, 2, overlap));
        let g: Vec<usize> = new_idx.iter().map(|&i| gates[i]).collect();
        let w: Vec<usize> = new_idx.iter().map(|&i| wires[i]).collect();
        let ge = tape.gather(self.edge_gate_emb, &g);
        let we = tape.gather(self.edge_wire_emb, &w);
        let v = tape.add(ge, we);
        let be = tape.gather(self.edge_bit_emb, bits);
        let x = tape.concat(&[ctx, hp, op, overlap, v, be]);
        self.edge_mlp.forward(tape, x)
    }

    /// Additive mask (0 / -inf) for size classes above the qubit count.
    pub fn size_mask(&self, num_qubits: usize) -> Tensor {
        let k = self.config.max_qubits + 1;
        Tensor::from_vec(
            1,
            k,
            (0..k)
                .map(|c| {
                    if c <= num_qubits {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect(),
        )
    }

    /// Gates wider than the register are excluded.
    pub fn gate_mask(&self, num_qubits: usize, rows: usize) -> Tensor {
        let set = GateSet::new(self.config.gateset_id);
        let row: Vec<f64> = set
            .gates()
            .iter()
            .map(|d| {
                if d.arity <= num_qubits {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        Tensor::from_vec(rows, row.len(), row.repeat(rows))
    }

    /// Wire classes beyond `num_qubits^2` are excluded.
    pub fn wire_mask(&self, num_qubits: usize, rows: usize) -> Tensor {
        let k = self.wire_vocab();
        let row: Vec<f64> = (0..k)
            .map(|c| {
                if c < wire_vocab_size(num_qubits) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        Tensor::from_vec(rows, k, row.repeat(rows))
    }
}
