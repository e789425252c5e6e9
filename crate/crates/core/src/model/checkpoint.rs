//! Versioned binary checkpoints.
//!
//! Layout (all integers u32 little-endian unless noted):
//! `QFCKPT` magic, u16 version, u8 gate-set code, then length-prefixed
//! sections: `key=value` config text, schedule keep probabilities, label
//! pool `(u32 qubits, f64 re, f64 im)`, training metadata text, loss history
//! `(total, size, node, edge)`, and named tensors `(name, rows, cols, f64...)`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::tape::{ParamStore, Tensor};
use super::train::EpochLoss;
use super::{ModelConfig, ModelError};
use crate::circuit_ir::GateSetId;
use crate::diffusion::NoiseSchedule;
use crate::simulator::CircuitLabel;

const MAGIC: &[u8; 6] = b"QFCKPT";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub history: Vec<EpochLoss>,
}

impl TrainingMeta {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|l| l.total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub schedule: NoiseSchedule,
    pub params: ParamStore,
    pub meta: TrainingMeta,
    /// `(qubit count, label)` of every training record, for empirical
    /// conditioning at sampling time.
    pub label_pool: Vec<(usize, CircuitLabel)>,
}

impl ModelCheckpoint {
    /// Freshly initialised (untrained) model.
    pub fn untrained(
        config: &ModelConfig,
        schedule: NoiseSchedule,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (_, params) = Network::init(config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(ModelCheckpoint {
            config: config.clone(),
            schedule,
            params,
            meta: TrainingMeta {
                epochs: 0,
                seed,
                batch_size: 0,
                learning_rate: 0.0,
                history: Vec::new(),
            },
            label_pool: Vec::new(),
        })
    }

    pub fn gateset_id(&self) -> GateSetId {
        self.config.gateset_id
    }

    pub fn network(&self) -> Network {
        Network::bind(&self.config, &self.params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.config.gateset_id.code());

        let config: String = self
            .config
            .to_pairs()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        put_bytes(&mut out, config.as_bytes());

        let keep = self.schedule.keep_probabilities();
        put_u32(&mut out, keep.len());
        keep.iter().for_each(|&x| put_f64(&mut out, x));

        put_u32(&mut out, self.label_pool.len());
        for &(n, l) in &self.label_pool {
            put_u32(&mut out, n);
            put_f64(&mut out, l.re);
            put_f64(&mut out, l.im);
        }

        let m = &self.meta;
        let meta = format!(
            "epochs={}\nseed={}\nbatch_size={}\n",
            m.epochs, m.seed, m.batch_size
        );
        put_bytes(&mut out, meta.as_bytes());
        put_f64(&mut out, m.learning_rate);
        put_u32(&mut out, m.history.len());
        for h in &m.history {
            for x in [h.total, h.size, h.node, h.edge] {
                put_f64(&mut out, x);
            }
        }

        put_u32(&mut out, self.params.len());
        for id in self.params.ids() {
            put_bytes(&mut out, self.params.name(id).as_bytes());
            let t = self.params.get(id);
            put_u32(&mut out, t.rows);
            put_u32(&mut out, t.cols);
            t.data.iter().for_each(|&x| put_f64(&mut out, x));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(ModelError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let code = r.take(1)?[0];
        let gateset = GateSetId::from_code(code)
            .ok_or_else(|| ModelError::Format(format!("unknown gate set code {code}")))?;

        let config = ModelConfig::from_pairs(&parse_pairs(&r.string()?)?)?;
        if config.gateset_id != gateset {
            return Err(ModelError::Format(
                "gate set header disagrees with config".into(),
            ));
        }

        let n = r.u32()?;
        let keep = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let schedule = NoiseSchedule::from_keep_probabilities(keep)
            .map_err(|e| ModelError::Format(e.to_string()))?;

        let n = r.u32()?;
        let mut label_pool = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let q = r.u32()?;
            label_pool.push((q, CircuitLabel::new(r.f64()?, r.f64()?)));
        }

        let meta_pairs = parse_pairs(&r.string()?)?;
        let meta_num = |k: &str| -> Result<u64, ModelError> {
            meta_pairs
                .iter()
                .find(|(key, _)| key == k)
                .and_then(|(_, v)| v.parse().ok())
                .ok_or_else(|| ModelError::Format(format!("missing or bad metadata {k}")))
        };
        let (epochs, seed, batch_size) = (
            meta_num("epochs")? as usize,
            meta_num("seed")?,
            meta_num("batch_size")? as usize,
        );
        let learning_rate = r.f64()?;
        let n = r.u32()?;
        let mut history = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            history.push(EpochLoss {
                total: r.f64()?,
                size: r.f64()?,
                node: r.f64()?,
                edge: r.f64()?,
            });
        }

        let n = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = r.string()?;
            let (rows, cols) = (r.u32()?, r.u32()?);
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| ModelError::Format("tensor too large".into()))?;
            if len > (bytes.len() - r.pos) / 8 {
                return Err(ModelError::Format(format!("tensor {name} is truncated")));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            if super::tape::Group::of_name(&name).is_none() || params.id(&name).is_some() {
                return Err(ModelError::Format(format!("bad tensor name {name:?}")));
            }
            params.add(&name, Tensor::from_vec(rows, cols, data));
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Format("trailing bytes".into()));
        }

        // shapes must match what the config implies
        let (_, reference) = Network::init(&config, &mut ChaCha8Rng::seed_from_u64(0));
        if reference.len() != params.len() {
            return Err(ModelError::Format(
                "parameter set does not match the config".into(),
            ));
        }
        for id in reference.ids() {
            let name = reference.name(id);
            let t = params.id(name).map(|p| params.get(p));
            let want = reference.get(id);
            if t.map(|t| (t.rows, t.cols)) != Some((want.rows, want.cols)) {
                return Err(ModelError::Format(format!(
                    "tensor {name} missing or misshapen"
                )));
            }
        }

        Ok(ModelCheckpoint {
            config,
            schedule,
            params,
            meta: TrainingMeta {
                epochs,
                seed,
                batch_size,
                learning_rate,
                history,
            },
            label_pool,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&u32::try_from(x).expect("section too large").to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len());
    out.extend_from_slice(b);
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ModelError> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| ModelError::Format(format!("bad key=value line {l:?}")))
        })
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| ModelError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelError::Format("invalid UTF-8".into()))
    }
}
