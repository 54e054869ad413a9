//! Two-layer GCN backbone `H = Â·ReLU(Â·X·W₁)·W₂` and sum-pooling readout.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hetgraph::HeteroGraph;

pub const DEFAULT_HIDDEN_DIM: usize = 64;

/// Encoder weights. `w1` is `d × dₕ`, `w2` is `dₕ × dₕ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: Tensor,
    pub w2: Tensor,
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    #[default]
    Glorot,
    /// Identity weights; requires `d == dₕ`. Hidden dimensions then start out
    /// aligned with input feature dimensions.
    Identity,
}

impl GcnParams {
    pub fn init(input_dim: usize, hidden_dim: usize, init: Init, rng: &mut impl Rng) -> Result<Self> {
        match init {
            Init::Glorot => {
                let mut glorot = |rows: usize, cols: usize| {
                    let bound = (6.0 / (rows + cols) as f64).sqrt();
                    let values = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
                    Tensor::matrix(rows, cols, values)
                };
                Ok(GcnParams {
                    w1: glorot(input_dim, hidden_dim)?,
                    w2: glorot(hidden_dim, hidden_dim)?,
                })
            }
            Init::Identity => {
                if input_dim != hidden_dim {
                    return Err(Error::Config(format!(
                        "identity init needs feature dim {input_dim} == hidden dim {hidden_dim}"
                    )));
                }
                Ok(GcnParams {
                    w1: Tensor::identity(hidden_dim),
                    w2: Tensor::identity(hidden_dim),
                })
            }
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    fn validate(&self) -> Result<()> {
        let (s1, s2) = (self.w1.shape(), self.w2.shape());
        if s1.len() != 2 || s2.len() != 2 || s1[1] != s2[0] || s2[0] != s2[1] {
            return Err(Error::Dimension {
                op: "gcn params",
                left: s1.to_vec(),
                right: s2.to_vec(),
            });
        }
        if !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::Validation("non-finite encoder weight".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            params: self.clone(),
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        ckpt.params.validate()?;
        Ok(ckpt.params)
    }
}

const CHECKPOINT_FORMAT: &str = "gcn-checkpoint/v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    #[serde(flatten)]
    params: GcnParams,
}

/// Node embeddings aligned to node ids (`|V| × dₕ`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings(pub Tensor);

impl NodeEmbeddings {
    pub fn matrix(&self) -> &Tensor {
        &self.0
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.0.row(v)
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` over the symmetrized topology.
pub fn normalize_adjacency(g: &HeteroGraph) -> Tensor {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.neighbors(v).len() + 1) as f64).sqrt())
        .collect();
    let mut values = vec![0.0; n * n];
    for v in 0..n {
        values[v * n + v] = inv_sqrt[v] * inv_sqrt[v];
        for &u in g.neighbors(v) {
            values[v * n + u] = inv_sqrt[v] * inv_sqrt[u];
        }
    }
    Tensor::matrix(n, n, values).expect("square by construction")
}

/// Graph-dependent constants of the encoder, computed once per graph.
#[derive(Debug, Clone)]
pub struct GcnEncoder {
    adjacency: Tensor,
    propagated: Tensor,
}

impl GcnEncoder {
    pub fn new(g: &HeteroGraph) -> Self {
        let adjacency = normalize_adjacency(g);
        let propagated = adjacency
            .matmul(g.features())
            .expect("adjacency rows match feature rows");
        GcnEncoder {
            adjacency,
            propagated,
        }
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn input_dim(&self) -> usize {
        self.propagated.cols()
    }

    /// Records the forward pass on `tape` with weights `w1`, `w2`.
    pub fn forward(&self, tape: &mut Tape, w1: Var, w2: Var) -> Result<Var> {
        if tape.value(w1).rows() != self.input_dim() {
            return Err(Error::Dimension {
                op: "encode",
                left: vec![self.propagated.rows(), self.input_dim()],
                right: tape.value(w1).shape().to_vec(),
            });
        }
        let ax = tape.constant(self.propagated.clone());
        let adj = tape.constant(self.adjacency.clone());
        let z1 = tape.matmul(ax, w1)?;
        let h1 = tape.relu(z1);
        let p = tape.matmul(adj, h1)?;
        tape.matmul(p, w2)
    }

    pub fn encode(&self, params: &GcnParams) -> Result<NodeEmbeddings> {
        params.validate()?;
        let mut tape = Tape::new();
        let w1 = tape.constant(params.w1.clone());
        let w2 = tape.constant(params.w2.clone());
        let h = self.forward(&mut tape, w1, w2)?;
        Ok(NodeEmbeddings(tape.value(h).clone()))
    }
}

pub fn encode(g: &HeteroGraph, params: &GcnParams) -> Result<NodeEmbeddings> {
    GcnEncoder::new(g).encode(params)
}

/// Sum of the embedding rows of `nodes`.
pub fn readout_sum(emb: &NodeEmbeddings, nodes: &[usize]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(Error::EmptyReadout);
    }
    let mut out = vec![0.0; emb.dim()];
    for &v in nodes {
        if v >= emb.len() {
            return Err(Error::Index {
                index: v,
                len: emb.len(),
            });
        }
        for (o, &x) in out.iter_mut().zip(emb.row(v)) {
            *o += x;
        }
    }
    Ok(out)
}
