//! Mask-gradient importance of prompt units, thresholding, compaction.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::prompting::{
    record_loss, record_prompts, LabeledSet, MaskInputs, PromptContext, PromptLayout, PromptPair,
};

pub const DEFAULT_BLOCKS: usize = 16;
pub const DEFAULT_DELTA: f64 = 0.6;
pub const DEFAULT_BETA: f64 = 0.4;

/// `dim` feature-prompt entries split into `blocks` equal contiguous runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    dim: usize,
    blocks: usize,
}

impl BlockPartition {
    pub fn new(dim: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || dim % blocks != 0 {
            return Err(Error::Partition { blocks, dim });
        }
        Ok(BlockPartition { dim, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.dim / self.blocks
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        let b = self.block_size();
        block * b..(block + 1) * b
    }

    pub fn block_of(&self, dim: usize) -> usize {
        dim / self.block_size()
    }

    /// `blocks × dim` indicator; `η · E` broadcasts block masks to dims.
    pub fn expansion(&self) -> Tensor {
        let mut values = vec![0.0; self.blocks * self.dim];
        for j in 0..self.blocks {
            for k in self.range(j) {
                values[j * self.dim + k] = 1.0;
            }
        }
        Tensor::matrix(self.blocks, self.dim, values).expect("shape by construction")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskState {
    pub lambda: Vec<bool>,
    pub eta: Vec<bool>,
}

impl MaskState {
    pub fn ones(view_count: usize, blocks: usize) -> Self {
        MaskState {
            lambda: vec![true; view_count],
            eta: vec![true; blocks],
        }
    }

    pub fn retained_tokens(&self) -> usize {
        self.lambda.iter().filter(|&&x| x).count()
    }

    pub fn retained_blocks(&self) -> usize {
        self.eta.iter().filter(|&&x| x).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.lambda.iter().chain(&self.eta).all(|&x| x)
    }

    pub fn inputs(&self, partition: BlockPartition) -> MaskInputs {
        let f = |v: &[bool]| v.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
        MaskInputs {
            lambda: f(&self.lambda),
            eta: f(&self.eta),
            partition,
        }
    }

    /// Trainable prompt entries left after compaction.
    pub fn parameter_count(&self, partition: &BlockPartition) -> usize {
        partition.block_size() * self.retained_blocks() + self.retained_tokens()
    }
}

/// Mean over `data` pairs of `|∂L(x)/∂λ_i|` and `|∂L(x)/∂η_j|`, masks at 1.
/// Prototypes come from `support`; each pair gets its own backward pass.
pub fn mask_sensitivities(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
    data: &LabeledSet,
    tau: f64,
    partition: BlockPartition,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Contract("importance over an empty labeled set".into()));
    }
    if partition.dim() != prompts.layout.hidden_dim {
        return Err(Error::Partition {
            blocks: partition.blocks(),
            dim: prompts.layout.hidden_dim,
        });
    }
    let masks = MaskInputs::ones(prompts.layout.view_count, partition);
    let table = ctx.readouts(support.nodes().chain(data.nodes()), &prompts.layout)?;
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, Some(&masks), false)?;
    let loss = record_loss(&mut tape, &vars, &table, support, data, tau)?;
    let (lambda, eta) = (vars.lambda.expect("masks recorded"), vars.eta.expect("masks recorded"));

    let mut semantic = vec![0.0; masks.lambda.len()];
    let mut feature = vec![0.0; masks.eta.len()];
    for &root in &loss.per_pair {
        let grads = tape.backward(root)?;
        for (acc, g) in semantic.iter_mut().zip(grads.values_or_zero(lambda)) {
            *acc += g.abs();
        }
        for (acc, g) in feature.iter_mut().zip(grads.values_or_zero(eta)) {
            *acc += g.abs();
        }
    }
    let n = data.len() as f64;
    semantic.iter_mut().chain(feature.iter_mut()).for_each(|x| *x /= n);
    Ok((semantic, feature))
}

pub fn semantic_importance(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
    data: &LabeledSet,
    tau: f64,
) -> Result<Vec<f64>> {
    let partition = BlockPartition::new(prompts.layout.hidden_dim, 1)?;
    Ok(mask_sensitivities(ctx, prompts, support, data, tau, partition)?.0)
}

pub fn feature_importance(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
    data: &LabeledSet,
    tau: f64,
    partition: BlockPartition,
) -> Result<Vec<f64>> {
    Ok(mask_sensitivities(ctx, prompts, support, data, tau, partition)?.1)
}

/// `(x - mean) / std` with the population std; all zeros when std < 1e-12.
pub fn zscore(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= 1e-12) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|x| (x - mean) / std).collect()
}

fn keep_at_least_one(z: &[f64], threshold: f64) -> Vec<bool> {
    let mut keep: Vec<bool> = z.iter().map(|&x| x >= threshold).collect();
    if !keep.is_empty() && !keep.iter().any(|&k| k) {
        let mut best = 0;
        for (i, &x) in z.iter().enumerate() {
            if x > z[best] {
                best = i;
            }
        }
        keep[best] = true;
    }
    keep
}

/// Keeps entries whose z-score reaches the threshold. A mask that would be
/// empty keeps its highest-scoring entry.
pub fn threshold_masks(z_s: &[f64], z_f: &[f64], delta: f64, beta: f64) -> MaskState {
    MaskState {
        lambda: keep_at_least_one(z_s, delta),
        eta: keep_at_least_one(z_f, beta),
    }
}

/// Drops pruned entries; the layout records where survivors came from.
pub fn apply_masks(
    prompts: &PromptPair,
    masks: &MaskState,
    partition: &BlockPartition,
) -> Result<PromptPair> {
    let layout = &prompts.layout;
    if !layout.is_full() {
        return Err(Error::Contract("prompts are already compacted".into()));
    }
    if masks.lambda.len() != layout.view_count
        || masks.eta.len() != partition.blocks()
        || partition.dim() != layout.hidden_dim
    {
        return Err(Error::Dimension {
            op: "apply_masks",
            left: vec![masks.lambda.len(), masks.eta.len(), partition.dim()],
            right: vec![layout.view_count, partition.blocks(), layout.hidden_dim],
        });
    }
    if masks.retained_blocks() == 0 {
        return Err(Error::Contract("every feature block was pruned".into()));
    }
    let feature_dims: Vec<usize> = (0..layout.hidden_dim)
        .filter(|&k| masks.eta[partition.block_of(k)])
        .collect();
    let semantic_tokens: Vec<usize> = (0..layout.view_count).filter(|&i| masks.lambda[i]).collect();
    Ok(PromptPair {
        feature: feature_dims.iter().map(|&k| prompts.feature[k]).collect(),
        semantic: semantic_tokens.iter().map(|&i| prompts.semantic[i]).collect(),
        layout: PromptLayout {
            hidden_dim: layout.hidden_dim,
            view_count: layout.view_count,
            feature_dims,
            semantic_tokens,
        },
    })
}

/// Same number of pruned tokens and blocks as `like`, positions uniform.
pub fn random_masks(like: &MaskState, rng: &mut impl Rng) -> MaskState {
    let pick = |rng: &mut dyn rand::RngCore, len: usize, keep: usize| {
        let mut mask = vec![false; len];
        for i in sample(rng, len, keep) {
            mask[i] = true;
        }
        mask
    };
    MaskState {
        lambda: pick(rng, like.lambda.len(), like.retained_tokens()),
        eta: pick(rng, like.eta.len(), like.retained_blocks()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub delta: f64,
    pub beta: f64,
    pub blocks: usize,
    pub tau: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            delta: DEFAULT_DELTA,
            beta: DEFAULT_BETA,
            blocks: DEFAULT_BLOCKS,
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub semantic_raw: Vec<f64>,
    pub feature_raw: Vec<f64>,
    pub semantic_z: Vec<f64>,
    pub feature_z: Vec<f64>,
    pub delta: f64,
    pub beta: f64,
    pub blocks: usize,
    pub masks: MaskState,
    pub feature_dims: Vec<usize>,
    pub semantic_tokens: Vec<usize>,
    pub parameters_before: usize,
    pub parameters_after: usize,
    /// Number of labeled pairs the scores average over.
    pub pairs: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Scores, normalizes and thresholds, then compacts the prompts.
pub fn evaluate_and_prune(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
    data: &LabeledSet,
    config: &PruneConfig,
    seed: u64,
) -> Result<(ImportanceReport, PromptPair)> {
    let partition = BlockPartition::new(prompts.layout.hidden_dim, config.blocks)?;
    let (semantic_raw, feature_raw) =
        mask_sensitivities(ctx, prompts, support, data, config.tau, partition)?;
    let semantic_z = zscore(&semantic_raw);
    let feature_z = zscore(&feature_raw);
    let masks = threshold_masks(&semantic_z, &feature_z, config.delta, config.beta);
    let pruned = apply_masks(prompts, &masks, &partition)?;
    let report = ImportanceReport {
        semantic_raw,
        feature_raw,
        semantic_z,
        feature_z,
        delta: config.delta,
        beta: config.beta,
        blocks: config.blocks,
        feature_dims: pruned.layout.feature_dims.clone(),
        semantic_tokens: pruned.layout.semantic_tokens.clone(),
        parameters_before: prompts.parameter_count(),
        parameters_after: pruned.parameter_count(),
        masks,
        pairs: data.len(),
        seed,
    };
    Ok((report, pruned))
}
