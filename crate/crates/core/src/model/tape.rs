//! Minimal reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records operations on [`Var`]s in evaluation order; `backward`
//! walks it in reverse and accumulates parameter gradients into [`Grads`].
//! Parameter values are borrowed from a [`ParamStore`] and never copied.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar(&self) -> f64 {
        assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a [m x k] * b [k x n]`
fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let mut out = Tensor::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            if x == 0.0 {
                continue;
            }
            for (o, y) in orow.iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a^T [k x m] * b [m x n]` without materializing the transpose.
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows);
    let mut out = Tensor::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let brow = b.row(r);
        for (k, &x) in a.row(r).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, y) in out.data[k * b.cols..(k + 1) * b.cols].iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a [m x n] * b^T`, with `b` of shape `[k x n]`.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols);
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Which independently trained block a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Encoder,
    SizeHead,
    NodeHead,
    EdgeHead,
}

impl Group {
    pub const ALL: [Group; 4] = [
        Group::Encoder,
        Group::SizeHead,
        Group::NodeHead,
        Group::EdgeHead,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::SizeHead => "size",
            Group::NodeHead => "node",
            Group::EdgeHead => "edge",
        }
    }

    pub fn of_name(name: &str) -> Option<Group> {
        let head = name.split('.').next()?;
        Group::ALL.into_iter().find(|g| g.prefix() == head)
    }
}

/// Named parameter tensors. Names are `<group>.<tensor>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(
            Group::of_name(name).is_some(),
            "parameter {name} lacks a group prefix"
        );
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_random<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn group(&self, id: ParamId) -> Group {
        Group::of_name(&self.names[id.0]).unwrap()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// Gradient accumulator shaped like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            tensors: store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    Concat(Vec<Var>),
    MeanRows(Var),
    Repeat(Var),
    Gather(ParamId, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    /// Row-wise softmax cross-entropy, summed and scaled; softmax cached.
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor,
        scale: f64,
    },
    Sum(Vec<Var>),
}

struct Entry {
    op: Op,
    value: Option<Tensor>,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    entries: Vec<Entry>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            entries: Vec::with_capacity(128),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.entries[v.0] {
            Entry {
                op: Op::Param(id), ..
            } => self.params.get(*id),
            Entry { value: Some(t), .. } => t,
            _ => unreachable!("every non-parameter entry stores its value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.entries.push(Entry {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.entries.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.entries[v.0].needs_grad)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.entries.push(Entry {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        Var(self.entries.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Const, t, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        let g = self.grad_of(&[a, b]);
        self.push(Op::MatMul(a, b), v, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.grad_of(&[a, b]);
        self.push(Op::Add(a, b), v, g)
    }

    /// `a [r x c] + row [1 x c]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!((r.rows, r.cols), (1, v.cols));
        for chunk in v.data.chunks_mut(r.cols) {
            for (x, b) in chunk.iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        let g = self.grad_of(&[a, row]);
        self.push(Op::AddRow(a, row), v, g)
    }

    /// `x W + b` for a row-batch `x`.
    pub fn affine(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x = x.tanh());
        let g = self.grad_of(&[a]);
        self.push(Op::Tanh(a), v, g)
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat row mismatch");
            for r in 0..rows {
                v.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row(r));
            }
            off += t.cols;
        }
        let g = self.grad_of(parts);
        self.push(Op::Concat(parts.to_vec()), v, g)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut v = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, x) in v.data.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let inv = 1.0 / t.rows as f64;
        v.data.iter_mut().for_each(|x| *x *= inv);
        let g = self.grad_of(&[a]);
        self.push(Op::MeanRows(a), v, g)
    }

    /// Repeats a `[1 x c]` row `rows` times.
    pub fn repeat(&mut self, a: Var, rows: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows, 1);
        let data = t.data.iter().copied().cycle().take(rows * t.cols).collect();
        let v = Tensor::from_vec(rows, t.cols, data);
        let g = self.grad_of(&[a]);
        self.push(Op::Repeat(a), v, g)
    }

    /// Rows of a parameter table (embedding lookup).
    pub fn gather(&mut self, table: ParamId, idx: &[usize]) -> Var {
        let t = self.params.get(table);
        let mut v = Tensor::zeros(idx.len(), t.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(t.row(i));
        }
        self.push(Op::Gather(table, idx.to_vec()), v, true)
    }

    /// Rows `idx` of an intermediate value (repeats allowed).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let mut v = Tensor::zeros(idx.len(), t.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(t.row(i));
        }
        let g = self.grad_of(&[a]);
        self.push(Op::SelectRows(a, idx.to_vec()), v, g)
    }

    /// `scale * sum_r -log softmax(logits[r] + mask[r])[targets[r]]`.
    /// `mask` holds `0` for allowed and `-inf` for excluded classes.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: Option<&Tensor>,
        scale: f64,
    ) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len());
        let mut probs = Tensor::zeros(l.rows, l.cols);
        let mut total = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row: Vec<f64> = match mask {
                Some(m) => l.row(r).iter().zip(m.row(r)).map(|(a, b)| a + b).collect(),
                None => l.row(r).to_vec(),
            };
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - mx).exp()).sum();
            for (p, x) in probs.data[r * l.cols..(r + 1) * l.cols]
                .iter_mut()
                .zip(&row)
            {
                *p = (x - mx).exp() / z;
            }
            total += mx + z.ln() - row[target];
        }
        let g = self.grad_of(&[logits]);
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                scale,
            },
            Tensor::from_vec(1, 1, vec![scale * total]),
            g,
        )
    }

    /// Sum of `[1 x 1]` scalars.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let s = parts.iter().map(|&p| self.value(p).scalar()).sum();
        let g = self.grad_of(parts);
        self.push(Op::Sum(parts.to_vec()), Tensor::from_vec(1, 1, vec![s]), g)
    }

    /// Accumulates `d loss / d param` into `grads`. `loss` must be `[1 x 1]`.
    pub fn backward(&self, loss: Var, grads: &mut Grads) {
        let mut adj: Vec<Option<Tensor>> = (0..self.entries.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::from_vec(1, 1, vec![1.0]));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let entry = &self.entries[i];
            if !entry.needs_grad {
                continue;
            }
            let send = |v: Var, t: Tensor, adj: &mut Vec<Option<Tensor>>| {
                if !self.entries[v.0].needs_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            match &entry.op {
                Op::Param(id) => grads.tensors[id.0].add_assign(&g),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    if self.entries[a.0].needs_grad {
                        send(*a, matmul_nt(&g, self.value(*b)), &mut adj);
                    }
                    if self.entries[b.0].needs_grad {
                        send(*b, matmul_tn(self.value(*a), &g), &mut adj);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut adj);
                    send(*b, g, &mut adj);
                }
                Op::AddRow(a, row) => {
                    let mut rg = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in rg.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    send(*row, rg, &mut adj);
                    send(*a, g, &mut adj);
                }
                Op::Tanh(a) => {
                    let y = entry.value.as_ref().unwrap();
                    let mut d = g;
                    for (x, yv) in d.data.iter_mut().zip(&y.data) {
                        *x *= 1.0 - yv * yv;
                    }
                    send(*a, d, &mut adj);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = self.value(p).cols;
                        let mut d = Tensor::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            d.data[r * cols..(r + 1) * cols]
                                .copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        send(p, d, &mut adj);
                    }
                }
                Op::MeanRows(a) => {
                    let rows = self.value(*a).rows;
                    let inv = 1.0 / rows as f64;
                    let data = g
                        .data
                        .iter()
                        .map(|x| x * inv)
                        .cycle()
                        .take(rows * g.cols)
                        .collect();
                    send(*a, Tensor::from_vec(rows, g.cols, data), &mut adj);
                }
                Op::Repeat(a) => {
                    let mut d = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, x) in d.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    send(*a, d, &mut adj);
                }
                Op::Gather(table, idx) => {
                    let t = &mut grads.tensors[table.0];
                    for (r, &row) in idx.iter().enumerate() {
                        for (o, x) in t.data[row * t.cols..(row + 1) * t.cols]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *o += x;
                        }
                    }
                }
                Op::SelectRows(a, idx) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows, src.cols);
                    for (r, &row) in idx.iter().enumerate() {
                        for (o, x) in d.data[row * d.cols..(row + 1) * d.cols]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *o += x;
                        }
                    }
                    send(*a, d, &mut adj);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    scale,
                } => {
                    let s = g.scalar() * scale;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d.data[r * d.cols + t] -= 1.0;
                    }
                    d.data.iter_mut().for_each(|x| *x *= s);
                    send(*logits, d, &mut adj);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        send(p, g.clone(), &mut adj);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Every op on one graph, checked against central differences.
    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let emb = store.add_random("encoder.emb", 5, 3, &mut rng);
        let w = store.add_random("encoder.w", 6, 4, &mut rng);
        let b = store.add_random("encoder.b", 1, 4, &mut rng);
        let adj = Tensor::from_vec(3, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        let mut mask = Tensor::zeros(3, 4);
        mask.data[2] = f64::NEG_INFINITY;

        let loss_of = |store: &ParamStore, grads: Option<&mut Grads>| {
            let mut tape = Tape::new(store);
            let h = tape.gather(emb, &[0, 3, 3]);
            let a = tape.constant(adj.clone());
            let m = tape.matmul(a, h);
            let hm = tape.add(h, m);
            let mean = tape.mean_rows(hm);
            let rep = tape.repeat(mean, 3);
            let x = tape.concat(&[hm, rep]);
            let y = tape.affine(x, w, b);
            let y = tape.tanh(y);
            let y = tape.select_rows(y, &[2, 0, 0]);
            let l1 = tape.cross_entropy(y, &[1, 3, 0], Some(&mask), 0.5);
            let l2 = tape.cross_entropy(y, &[2, 2, 2], None, 0.25);
            let l = tape.sum(&[l1, l2]);
            if let Some(g) = grads {
                tape.backward(l, g);
            }
            tape.value(l).scalar()
        };
        let mut grads = Grads::zeros_like(&store);
        loss_of(&store, Some(&mut grads));
        let h = 1e-5;
        for id in store.ids() {
            for k in 0..store.get(id).data.len() {
                let mut up = store.clone();
                up.get_mut(id).data[k] += h;
                let mut dn = store.clone();
                dn.get_mut(id).data[k] -= h;
                let fd = (loss_of(&up, None) - loss_of(&dn, None)) / (2.0 * h);
                let an = grads.get(id).data[k];
                assert!(
                    (fd - an).abs() <= 1e-7 * (1.0 + fd.abs()),
                    "{}[{k}]: {fd} vs {an}",
                    store.name(id)
                );
            }
        }
    }

    #[test]
    fn groups_from_names() {
        assert_eq!(Group::of_name("edge.w1"), Some(Group::EdgeHead));
        assert_eq!(Group::of_name("misc.w1"), None);
    }
}
