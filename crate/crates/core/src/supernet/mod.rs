//! Weight-sharing supernet over a [`SearchSpace`].
//!
//! Every allowed `(edge, operation)` pair owns its own parameters; the output
//! node feeds a linear classifier head. Architectures are evaluated either
//! through the softmax-mixed forward pass (training) or by selecting one
//! operation per edge (fitness evaluation).

mod forward;
mod train;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archspace::{ArchError, OpKind, SearchSpace};
use crate::rng::seeded;

pub use forward::{softmax_weights, ForwardPass};
pub use train::{cosine_lr, evaluate_fitness, sgd_step, train_supernet, TrainConfig, TrainStats};

#[derive(Debug, Error)]
pub enum SupernetError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("reduced space is not a subspace of the parent supernet's space")]
    NotSubspace,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learnable parameters of one operation instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpParams {
    Empty,
    /// `y = W x + b`; `weight` is `d x d` row-major (`weight[r * d + c]`).
    Affine { weight: Vec<f64>, bias: Vec<f64> },
    Scale { scale: f64 },
}

impl OpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            OpParams::Empty => vec![],
            OpParams::Affine { weight, bias } => vec![weight, bias],
            OpParams::Scale { scale } => vec![std::slice::from_ref(scale)],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            OpParams::Empty => vec![],
            OpParams::Affine { weight, bias } => vec![weight, bias],
            OpParams::Scale { scale } => vec![std::slice::from_mut(scale)],
        }
    }

    fn zeros_like(&self) -> OpParams {
        match self {
            OpParams::Empty => OpParams::Empty,
            OpParams::Affine { weight, bias } => {
                OpParams::Affine { weight: vec![0.0; weight.len()], bias: vec![0.0; bias.len()] }
            }
            OpParams::Scale { .. } => OpParams::Scale { scale: 0.0 },
        }
    }

    fn matches_kind(&self, kind: OpKind, d: usize) -> bool {
        match (self, kind) {
            (OpParams::Empty, OpKind::Zero | OpKind::Skip) => true,
            (OpParams::Affine { weight, bias }, OpKind::Linear | OpKind::LinearRelu) => {
                weight.len() == d * d && bias.len() == d
            }
            (OpParams::Scale { .. }, OpKind::Scale) => true,
            _ => false,
        }
    }
}

/// All learnable tensors of a supernet. Also used for gradients and
/// momentum buffers, which share the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// Indexed `[edge][catalog op]`; `Some` exactly for allowed operations.
    pub ops: Vec<Vec<Option<OpParams>>>,
    /// `class_count x d`, row-major.
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            ops: self
                .ops
                .iter()
                .map(|row| row.iter().map(|p| p.as_ref().map(OpParams::zeros_like)).collect())
                .collect(),
            head_weight: vec![0.0; self.head_weight.len()],
            head_bias: vec![0.0; self.head_bias.len()],
        }
    }

    /// Every tensor in a fixed order: op parameters by edge then catalog
    /// index, then head weight and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.ops.iter().flatten().flatten().flat_map(OpParams::tensors).collect();
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> =
            self.ops.iter_mut().flatten().flatten().flat_map(OpParams::tensors_mut).collect();
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn op(&self, edge: usize, op: usize) -> Option<&OpParams> {
        self.ops.get(edge)?.get(op)?.as_ref()
    }
}

/// How a discrete architecture is applied in the supernet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Only the selected operation runs on each edge, with weight 1.
    #[default]
    Hard,
    /// The one-hot selection is softmax-normalized over the edge's allowed
    /// operations, so unselected operations keep a small equal weight.
    SoftmaxOneHot,
}

/// Whether a reduced supernet copies the parent's weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InheritMode {
    Inherit,
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Supernet {
    space: SearchSpace,
    feature_dim: usize,
    class_count: usize,
    #[serde(default)]
    selection: SelectionMode,
    params: ParamSet,
}

fn uniform_vec<R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

impl Supernet {
    /// Fresh supernet. Matrices are uniform on `[-1/sqrt(d), 1/sqrt(d))`,
    /// biases zero, scales one.
    pub fn new(space: SearchSpace, feature_dim: usize, class_count: usize, seed: u64) -> Result<Self, SupernetError> {
        if feature_dim == 0 || class_count < 2 {
            return Err(SupernetError::DimensionMismatch(format!(
                "need feature_dim >= 1 and class_count >= 2, got {feature_dim} and {class_count}"
            )));
        }
        let mut rng = seeded(seed);
        let d = feature_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let catalog = space.catalog();
        let ops = (0..space.num_edges())
            .map(|e| {
                (0..catalog.len())
                    .map(|op| {
                        space.is_allowed(e, op).then(|| match catalog.kind(op) {
                            OpKind::Zero | OpKind::Skip => OpParams::Empty,
                            OpKind::Linear | OpKind::LinearRelu => OpParams::Affine {
                                weight: uniform_vec(&mut rng, d * d, bound),
                                bias: vec![0.0; d],
                            },
                            OpKind::Scale => OpParams::Scale { scale: 1.0 },
                        })
                    })
                    .collect()
            })
            .collect();
        let head_weight = uniform_vec(&mut rng, class_count * d, bound);
        Ok(Supernet {
            space,
            feature_dim,
            class_count,
            selection: SelectionMode::Hard,
            params: ParamSet { ops, head_weight, head_bias: vec![0.0; class_count] },
        })
    }

    pub fn with_selection(mut self, mode: SelectionMode) -> Self {
        self.selection = mode;
        self
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn selection(&self) -> SelectionMode {
        self.selection
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Checks that parameters exist exactly for the allowed operations and
    /// have the shapes their kinds require.
    pub fn validate(&self) -> Result<(), SupernetError> {
        let d = self.feature_dim;
        let bad = |m: String| Err(SupernetError::Checkpoint(m));
        if self.params.ops.len() != self.space.num_edges() {
            return bad("parameter rows do not match edge count".into());
        }
        for (e, row) in self.params.ops.iter().enumerate() {
            if row.len() != self.space.catalog().len() {
                return bad(format!("edge {e} has {} parameter slots", row.len()));
            }
            for (op, p) in row.iter().enumerate() {
                match (self.space.is_allowed(e, op), p) {
                    (true, Some(p)) if p.matches_kind(self.space.catalog().kind(op), d) => {}
                    (false, None) => {}
                    _ => return bad(format!("parameters for ({e},{op}) do not match the space")),
                }
            }
        }
        if self.params.head_weight.len() != self.class_count * d || self.params.head_bias.len() != self.class_count {
            return bad("head shape".into());
        }
        if !self.params.all_finite() {
            return Err(SupernetError::NonFinite("parameters".into()));
        }
        Ok(())
    }

    /// Writes a JSON checkpoint with the space, every parameter at full
    /// precision, the training seed and optionally the seed of the run that
    /// produced it.
    pub fn save_checkpoint<W: Write>(&self, train_seed: u64, run_seed: Option<u64>, out: W) -> Result<(), SupernetError> {
        serde_json::to_writer_pretty(out, &CheckpointRef { format: CHECKPOINT_FORMAT, run_seed, train_seed, net: self })?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Supernet::save_checkpoint`]; returns
    /// the net and its training seed.
    pub fn load_checkpoint<R: Read>(input: R) -> Result<(Supernet, u64), SupernetError> {
        let ckpt: Checkpoint = serde_json::from_reader(input)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(SupernetError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        ckpt.net.validate()?;
        Ok((ckpt.net, ckpt.train_seed))
    }
}

const CHECKPOINT_FORMAT: &str = "supernet-checkpoint/1";

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    run_seed: Option<u64>,
    train_seed: u64,
    net: &'a Supernet,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    #[serde(default, rename = "run_seed")]
    _run_seed: Option<u64>,
    train_seed: u64,
    net: Supernet,
}

/// Builds the supernet for a reduced space. `Inherit` copies the head and
/// every retained operation's parameters from `parent`; `Fresh`
/// re-initializes everything from `seed`.
pub fn inherit_weights(
    parent: &Supernet,
    reduced: &SearchSpace,
    mode: InheritMode,
    seed: u64,
) -> Result<Supernet, SupernetError> {
    if !reduced.is_subspace_of(&parent.space) {
        return Err(SupernetError::NotSubspace);
    }
    match mode {
        InheritMode::Fresh => {
            Ok(Supernet::new(reduced.clone(), parent.feature_dim, parent.class_count, seed)?.with_selection(parent.selection))
        }
        InheritMode::Inherit => {
            let ops = parent
                .params
                .ops
                .iter()
                .enumerate()
                .map(|(e, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(op, p)| if reduced.is_allowed(e, op) { p.clone() } else { None })
                        .collect()
                })
                .collect();
            Ok(Supernet {
                space: reduced.clone(),
                feature_dim: parent.feature_dim,
                class_count: parent.class_count,
                selection: parent.selection,
                params: ParamSet {
                    ops,
                    head_weight: parent.params.head_weight.clone(),
                    head_bias: parent.params.head_bias.clone(),
                },
            })
        }
    }
}
