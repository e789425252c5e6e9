//! Layerwise denoising model: a message-passing DAG encoder shared by three
//! independently parameterized heads (layer size, node gate/wire, edges),
//! trained with a small reverse-mode autodiff engine and Adam.

mod checkpoint;
mod features;
mod network;
mod tape;
mod train;

pub use checkpoint::{ModelCheckpoint, TrainingMeta};
pub use features::{sinusoidal, wire_class, wire_tuple, wire_vocab_size, GraphInput};
pub use network::{Encoding, Network};
pub use tape::{Grads, Group, ParamId, ParamStore, Tape, Tensor, Var};
pub use train::{
    batch_loss, gradient_check, layer_items, noise_item, train, train_with_progress, Adam,
    EpochLoss, GradCheck, LayerItem, LossBreakdown, NoisyItem, TrainConfig,
};

use crate::circuit_ir::GateSetId;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("gate set mismatch: expected {expected}, found {found}")]
    GateSetMismatch {
        expected: GateSetId,
        found: GateSetId,
    },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("circuit with {num_qubits} qubits exceeds the model's {max} qubits")]
    QubitBound { num_qubits: usize, max: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub node_embed_dim: usize,
    pub wire_embed_dim: usize,
    pub message_rounds: usize,
    /// Hidden width of the head MLPs.
    pub hidden_dim: usize,
    pub timestep_embed_dim: usize,
    /// Output width of the affine label map.
    pub label_embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            node_embed_dim: 64,
            wire_embed_dim: 16,
            message_rounds: 2,
            hidden_dim: 128,
            timestep_embed_dim: 16,
            label_embed_dim: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub gateset_id: GateSetId,
    /// Largest register the model handles; fixes the wire vocabulary
    /// (`max_qubits^2`) and the layer-size range `0..=max_qubits`.
    pub max_qubits: usize,
    pub encoder: EncoderConfig,
    pub head_embed_dim: usize,
    pub qubit_embed_dim: usize,
}

impl ModelConfig {
    pub fn new(gateset_id: GateSetId, max_qubits: usize) -> Self {
        ModelConfig {
            gateset_id,
            max_qubits,
            encoder: EncoderConfig::default(),
            head_embed_dim: 32,
            qubit_embed_dim: 8,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let e = &self.encoder;
        let dims = [
            ("max_qubits", self.max_qubits),
            ("node_embed_dim", e.node_embed_dim),
            ("wire_embed_dim", e.wire_embed_dim),
            ("message_rounds", e.message_rounds),
            ("hidden_dim", e.hidden_dim),
            ("timestep_embed_dim", e.timestep_embed_dim),
            ("label_embed_dim", e.label_embed_dim),
            ("head_embed_dim", self.head_embed_dim),
            ("qubit_embed_dim", self.qubit_embed_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.max_qubits > crate::circuit_ir::MAX_REGISTER {
            return Err(ModelError::Config(format!(
                "max_qubits {} is too large",
                self.max_qubits
            )));
        }
        Ok(())
    }

    pub(crate) fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let e = &self.encoder;
        vec![
            ("gateset", self.gateset_id.to_string()),
            ("max_qubits", self.max_qubits.to_string()),
            ("node_embed_dim", e.node_embed_dim.to_string()),
            ("wire_embed_dim", e.wire_embed_dim.to_string()),
            ("message_rounds", e.message_rounds.to_string()),
            ("hidden_dim", e.hidden_dim.to_string()),
            ("timestep_embed_dim", e.timestep_embed_dim.to_string()),
            ("label_embed_dim", e.label_embed_dim.to_string()),
            ("head_embed_dim", self.head_embed_dim.to_string()),
            ("qubit_embed_dim", self.qubit_embed_dim.to_string()),
        ]
    }

    pub(crate) fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ModelError> {
        let get = |k: &str| {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| ModelError::Format(format!("missing config key {k}")))
        };
        let num = |k: &str| -> Result<usize, ModelError> {
            get(k)?
                .parse()
                .map_err(|_| ModelError::Format(format!("bad value for {k}")))
        };
        let gateset_id = get("gateset")?
            .parse()
            .map_err(|_| ModelError::Format("bad gateset".into()))?;
        let config = ModelConfig {
            gateset_id,
            max_qubits: num("max_qubits")?,
            encoder: EncoderConfig {
                node_embed_dim: num("node_embed_dim")?,
                wire_embed_dim: num("wire_embed_dim")?,
                message_rounds: num("message_rounds")?,
                hidden_dim: num("hidden_dim")?,
                timestep_embed_dim: num("timestep_embed_dim")?,
                label_embed_dim: num("label_embed_dim")?,
            },
            head_embed_dim: num("head_embed_dim")?,
            qubit_embed_dim: num("qubit_embed_dim")?,
        };
        config
            .validate()
            .map_err(|e| ModelError::Format(e.to_string()))?;
        Ok(config)
    }
}
