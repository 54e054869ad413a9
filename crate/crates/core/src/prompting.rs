//! Feature and semantic prompts over a frozen encoder.
//!
//! For a node `v` with ego subgraph `S`, the prompted embedding is
//! `s_v = P_f ⊙ Σ_i (1 + p_s^i) · Σ_{u ∈ S ∩ view i} h_u`. The per-view sums
//! do not depend on the prompts, so they are computed once per node and kept
//! as a `views × dₕ` readout matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{cosine, Tape, Tensor, Var};
use crate::encoder::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::hetgraph::{apply_template, ego_subgraph, HeteroGraph, SubgraphSet};
use crate::optim::Adam;
use crate::pruning::BlockPartition;

/// Labeled nodes plus the class set they are drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub pairs: Vec<(usize, usize)>,
    pub classes: Vec<usize>,
}

impl LabeledSet {
    pub fn new(pairs: Vec<(usize, usize)>, classes: Vec<usize>) -> Result<Self> {
        let classes: Vec<usize> = classes
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(&(x, y)) = pairs.iter().find(|(_, y)| classes.binary_search(y).is_err()) {
            return Err(Error::Contract(format!(
                "node {x} has label {y} outside the class set {classes:?}"
            )));
        }
        Ok(LabeledSet { pairs, classes })
    }

    /// Class set taken from the labels present.
    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Self {
        let classes = pairs.iter().map(|&(_, y)| y).collect::<BTreeSet<_>>();
        LabeledSet {
            pairs,
            classes: classes.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|&(x, _)| x)
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|&(_, y)| y)
    }

    /// Pairs of both sets; the class sets are merged.
    pub fn concat(&self, other: &LabeledSet) -> LabeledSet {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        let classes: BTreeSet<usize> = self.classes.iter().chain(&other.classes).copied().collect();
        LabeledSet {
            pairs,
            classes: classes.into_iter().collect(),
        }
    }

    pub fn check(&self, g: &HeteroGraph) -> Result<()> {
        for &(x, y) in &self.pairs {
            g.check_node(x)?;
            if g.node_type(x) != g.target_type() {
                return Err(Error::Contract(format!(
                    "node {x} is not of the target type"
                )));
            }
            if self.classes.binary_search(&y).is_err() {
                return Err(Error::Contract(format!("label {y} outside the class set")));
            }
        }
        Ok(())
    }
}

/// Which feature dims and semantic tokens a prompt pair still carries.
/// A fresh layout covers everything; pruning keeps a subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub hidden_dim: usize,
    pub view_count: usize,
    pub feature_dims: Vec<usize>,
    pub semantic_tokens: Vec<usize>,
}

impl PromptLayout {
    pub fn full(hidden_dim: usize, view_count: usize) -> Self {
        PromptLayout {
            hidden_dim,
            view_count,
            feature_dims: (0..hidden_dim).collect(),
            semantic_tokens: (0..view_count).collect(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.feature_dims.len() == self.hidden_dim && self.semantic_tokens.len() == self.view_count
    }

    pub fn parameter_count(&self) -> usize {
        self.feature_dims.len() + self.semantic_tokens.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ascending = |v: &[usize], bound: usize| {
            v.windows(2).all(|w| w[0] < w[1]) && v.last().map_or(true, |&x| x < bound)
        };
        if !ascending(&self.feature_dims, self.hidden_dim) {
            return Err(Error::Contract("feature dim map must be ascending and in range".into()));
        }
        if !ascending(&self.semantic_tokens, self.view_count) {
            return Err(Error::Contract("token map must be ascending and in range".into()));
        }
        if self.feature_dims.is_empty() {
            return Err(Error::Contract("every feature dim was pruned".into()));
        }
        Ok(())
    }

    /// `tokens × views` 0/1 matrix placing each surviving token on its view.
    fn scatter(&self) -> Tensor {
        let v = self.view_count;
        let mut values = vec![0.0; self.semantic_tokens.len() * v];
        for (k, &token) in self.semantic_tokens.iter().enumerate() {
            values[k * v + token] = 1.0;
        }
        Tensor::matrix(self.semantic_tokens.len(), v, values).expect("shape by construction")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPair {
    pub feature: Vec<f64>,
    pub semantic: Vec<f64>,
    pub layout: PromptLayout,
}

impl PromptPair {
    /// `P_f = 1`, `P_s = 0`: reproduces the unprompted multi-view readout.
    pub fn neutral(hidden_dim: usize, view_count: usize) -> Self {
        PromptPair {
            feature: vec![1.0; hidden_dim],
            semantic: vec![0.0; view_count],
            layout: PromptLayout::full(hidden_dim, view_count),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.feature.len() != self.layout.feature_dims.len() {
            return Err(Error::Dimension {
                op: "feature prompt",
                left: vec![self.feature.len()],
                right: vec![self.layout.feature_dims.len()],
            });
        }
        if self.semantic.len() != self.layout.semantic_tokens.len() {
            return Err(Error::Dimension {
                op: "semantic prompt",
                left: vec![self.semantic.len()],
                right: vec![self.layout.semantic_tokens.len()],
            });
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.parameter_count()
    }

    /// Full-length prompts with pruned entries set to 0.
    pub fn expanded(&self) -> (Vec<f64>, Vec<f64>) {
        let mut f = vec![0.0; self.layout.hidden_dim];
        for (&d, &x) in self.layout.feature_dims.iter().zip(&self.feature) {
            f[d] = x;
        }
        let mut s = vec![0.0; self.layout.view_count];
        for (&t, &x) in self.layout.semantic_tokens.iter().zip(&self.semantic) {
            s[t] = x;
        }
        (f, s)
    }
}

/// Mask variables for the uncompacted prompts: `P̂_s = λ ⊙ P_s` and
/// `P̂_f = P_f ⊙ expand(η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskInputs {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub partition: BlockPartition,
}

impl MaskInputs {
    pub fn ones(view_count: usize, partition: BlockPartition) -> Self {
        MaskInputs {
            lambda: vec![1.0; view_count],
            eta: vec![1.0; partition.blocks()],
            partition,
        }
    }
}

/// Prompt leaves and derived quantities recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PromptVars {
    pub feature: Var,
    pub semantic: Var,
    pub lambda: Option<Var>,
    pub eta: Option<Var>,
    coefficients: Var,
    feature_scale: Var,
}

/// Records `prompts` (and optional masks) on `tape`. Prompts are leaves
/// with gradients when `trainable`; mask leaves always carry gradients.
pub fn record_prompts(
    tape: &mut Tape,
    prompts: &PromptPair,
    masks: Option<&MaskInputs>,
    trainable: bool,
) -> Result<PromptVars> {
    prompts.validate()?;
    let leaf = |tape: &mut Tape, values: &[f64]| {
        let t = Tensor::vector(values.to_vec());
        if trainable {
            tape.param(t)
        } else {
            tape.constant(t)
        }
    };
    let feature = leaf(tape, &prompts.feature);
    let semantic = leaf(tape, &prompts.semantic);
    let layout = &prompts.layout;

    let (mut semantic_eff, mut feature_scale) = (semantic, feature);
    let (mut lambda, mut eta) = (None, None);
    if let Some(m) = masks {
        if !layout.is_full() {
            return Err(Error::Contract("masks apply to uncompacted prompts only".into()));
        }
        if m.lambda.len() != layout.view_count || m.partition.dim() != layout.hidden_dim {
            return Err(Error::Dimension {
                op: "masks",
                left: vec![m.lambda.len(), m.partition.dim()],
                right: vec![layout.view_count, layout.hidden_dim],
            });
        }
        if m.eta.len() != m.partition.blocks() {
            return Err(Error::Dimension {
                op: "masks",
                left: vec![m.eta.len()],
                right: vec![m.partition.blocks()],
            });
        }
        let l = tape.param(Tensor::vector(m.lambda.clone()));
        let e = tape.param(Tensor::vector(m.eta.clone()));
        semantic_eff = tape.mul(semantic, l)?;
        let expand = tape.constant(m.partition.expansion());
        let eta_dims = tape.matmul(e, expand)?;
        feature_scale = tape.mul(feature, eta_dims)?;
        lambda = Some(l);
        eta = Some(e);
    }

    let scatter = tape.constant(layout.scatter());
    let placed = tape.matmul(semantic_eff, scatter)?;
    let ones = tape.constant(Tensor::filled(vec![layout.view_count], 1.0));
    let coefficients = tape.add(ones, placed)?;
    Ok(PromptVars {
        feature,
        semantic,
        lambda,
        eta,
        coefficients,
        feature_scale,
    })
}

impl PromptVars {
    /// Prompted embedding of a node given its (column-restricted) view readout.
    pub fn embed(&self, tape: &mut Tape, readout: &Tensor) -> Result<Var> {
        let r = tape.constant(readout.clone());
        let weighted = tape.matmul(self.coefficients, r)?;
        tape.mul(weighted, self.feature_scale)
    }
}

/// Per-node view readouts restricted to a layout's surviving dims.
#[derive(Debug, Clone)]
pub struct ReadoutTable {
    rows: HashMap<usize, Tensor>,
}

impl ReadoutTable {
    pub fn get(&self, v: usize) -> Result<&Tensor> {
        self.rows
            .get(&v)
            .ok_or_else(|| Error::Contract(format!("no readout cached for node {v}")))
    }
}

/// Frozen embeddings plus the graph template they are read out over.
#[derive(Debug, Clone)]
pub struct PromptContext<'g> {
    graph: &'g HeteroGraph,
    template: SubgraphSet,
    embeddings: NodeEmbeddings,
    hops: usize,
}

impl<'g> PromptContext<'g> {
    pub fn new(graph: &'g HeteroGraph, embeddings: NodeEmbeddings, hops: usize) -> Result<Self> {
        if embeddings.len() != graph.node_count() {
            return Err(Error::Dimension {
                op: "embeddings",
                left: vec![embeddings.len()],
                right: vec![graph.node_count()],
            });
        }
        Ok(PromptContext {
            graph,
            template: apply_template(graph),
            embeddings,
            hops,
        })
    }

    pub fn graph(&self) -> &HeteroGraph {
        self.graph
    }

    pub fn embeddings(&self) -> &NodeEmbeddings {
        &self.embeddings
    }

    pub fn hidden_dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn view_count(&self) -> usize {
        self.template.len()
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn neutral_prompts(&self) -> PromptPair {
        PromptPair::neutral(self.hidden_dim(), self.view_count())
    }

    /// `views × dₕ`; row `i` sums `h_u` over the ego nodes lying in view `i`.
    /// Views the ego subgraph misses stay zero and add nothing downstream.
    pub fn view_readout(&self, v: usize) -> Result<Tensor> {
        let ego = ego_subgraph(self.graph, v, self.hops)?;
        if ego.nodes.is_empty() {
            return Err(Error::EmptyReadout);
        }
        let d = self.hidden_dim();
        let mut values = vec![0.0; self.view_count() * d];
        for &u in &ego.nodes {
            let h = self.embeddings.row(u);
            for view in self.template.views_containing(u) {
                for (o, &x) in values[view * d..(view + 1) * d].iter_mut().zip(h) {
                    *o += x;
                }
            }
        }
        Tensor::matrix(self.view_count(), d, values)
    }

    pub fn readouts(
        &self,
        nodes: impl IntoIterator<Item = usize>,
        layout: &PromptLayout,
    ) -> Result<ReadoutTable> {
        let mut rows = HashMap::new();
        for v in nodes {
            if rows.contains_key(&v) {
                continue;
            }
            let full = self.view_readout(v)?;
            let r = if layout.feature_dims.len() == layout.hidden_dim {
                full
            } else {
                full.select_columns(&layout.feature_dims)?
            };
            rows.insert(v, r);
        }
        Ok(ReadoutTable { rows })
    }
}

pub fn prompted_subgraph_embedding(
    ctx: &PromptContext,
    prompts: &PromptPair,
    v: usize,
) -> Result<Vec<f64>> {
    let table = ctx.readouts([v], &prompts.layout)?;
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, None, false)?;
    let s = vars.embed(&mut tape, table.get(v)?)?;
    Ok(tape.value(s).values().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    pub classes: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
}

/// Loss pieces recorded on a tape.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub total: Var,
    pub per_pair: Vec<Var>,
    /// Unscaled cosine similarities to each prototype, one vector per pair.
    pub similarities: Vec<Var>,
    pub prototypes: Vec<Var>,
}

fn record_prototypes(
    tape: &mut Tape,
    vars: &PromptVars,
    table: &ReadoutTable,
    support: &LabeledSet,
    cache: &mut BTreeMap<usize, Var>,
) -> Result<Vec<Var>> {
    let mut protos = Vec::with_capacity(support.classes.len());
    for &c in &support.classes {
        let mut acc: Option<Var> = None;
        let mut count = 0usize;
        for (x, _) in support.pairs.iter().filter(|&&(_, y)| y == c) {
            let s = embed_cached(tape, vars, table, *x, cache)?;
            acc = Some(match acc {
                None => s,
                Some(a) => tape.add(a, s)?,
            });
            count += 1;
        }
        let sum = acc.ok_or(Error::MissingClass(c))?;
        protos.push(tape.scale(sum, 1.0 / count as f64));
    }
    Ok(protos)
}

fn embed_cached(
    tape: &mut Tape,
    vars: &PromptVars,
    table: &ReadoutTable,
    v: usize,
    cache: &mut BTreeMap<usize, Var>,
) -> Result<Var> {
    if let Some(&s) = cache.get(&v) {
        return Ok(s);
    }
    let s = vars.embed(tape, table.get(v)?)?;
    cache.insert(v, s);
    Ok(s)
}

/// Records prototypes from `support` and the summed loss over `pairs`.
pub fn record_loss(
    tape: &mut Tape,
    vars: &PromptVars,
    table: &ReadoutTable,
    support: &LabeledSet,
    pairs: &LabeledSet,
    tau: f64,
) -> Result<LossGraph> {
    let mut cache = BTreeMap::new();
    let prototypes = record_prototypes(tape, vars, table, support, &mut cache)?;
    let (per_pair, similarities) =
        record_pair_losses(tape, vars, table, &support.classes, &prototypes, pairs, tau, &mut cache)?;
    let stacked = tape.stack(&per_pair)?;
    let total = tape.sum(stacked);
    Ok(LossGraph {
        total,
        per_pair,
        similarities,
        prototypes,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_pair_losses(
    tape: &mut Tape,
    vars: &PromptVars,
    table: &ReadoutTable,
    classes: &[usize],
    prototypes: &[Var],
    pairs: &LabeledSet,
    tau: f64,
    cache: &mut BTreeMap<usize, Var>,
) -> Result<(Vec<Var>, Vec<Var>)> {
    if pairs.is_empty() {
        return Err(Error::Contract("loss over an empty labeled set".into()));
    }
    let mut out = Vec::with_capacity(pairs.len());
    let mut similarities = Vec::with_capacity(pairs.len());
    for &(x, y) in &pairs.pairs {
        let target = classes
            .binary_search(&y)
            .map_err(|_| Error::Contract(format!("label {y} has no prototype")))?;
        let s = embed_cached(tape, vars, table, x, cache)?;
        let sims = prototypes
            .iter()
            .map(|&p| tape.cosine_sim(s, p))
            .collect::<Result<Vec<_>>>()?;
        let stacked = tape.stack(&sims)?;
        let logits = tape.scale(stacked, 1.0 / tau);
        out.push(tape.softmax_nll(logits, target)?);
        similarities.push(stacked);
    }
    Ok((out, similarities))
}

/// Fraction of `pairs` whose most similar prototype (lowest index on ties)
/// is their own class.
fn accuracy_of(tape: &Tape, similarities: &[Var], classes: &[usize], pairs: &LabeledSet) -> f64 {
    let correct = similarities
        .iter()
        .zip(&pairs.pairs)
        .filter(|(&sims, &(_, y))| {
            let values = tape.value(sims).values();
            let mut best = 0;
            for (i, &v) in values.iter().enumerate() {
                if v > values[best] {
                    best = i;
                }
            }
            classes[best] == y
        })
        .count();
    correct as f64 / pairs.len() as f64
}

pub fn class_prototypes(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
) -> Result<Prototypes> {
    let table = ctx.readouts(support.nodes(), &prompts.layout)?;
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, None, false)?;
    let protos = record_prototypes(&mut tape, &vars, &table, support, &mut BTreeMap::new())?;
    Ok(Prototypes {
        classes: support.classes.clone(),
        vectors: protos.iter().map(|&p| tape.value(p).values().to_vec()).collect(),
    })
}

/// Class with the highest cosine similarity; the lowest class id wins ties.
pub fn predict(s: &[f64], protos: &Prototypes) -> Result<usize> {
    if protos.vectors.is_empty() {
        return Err(Error::Contract("no prototypes".into()));
    }
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (&c, p) in protos.classes.iter().zip(&protos.vectors) {
        let sim = cosine(s, p)?;
        if sim > best.0 || (sim == best.0 && c < best.1) {
            best = (sim, c);
        }
    }
    Ok(best.1)
}

/// Predicted class for each node in `nodes`.
pub fn classify(
    ctx: &PromptContext,
    prompts: &PromptPair,
    support: &LabeledSet,
    nodes: &[usize],
) -> Result<Vec<usize>> {
    let protos = class_prototypes(ctx, prompts, support)?;
    let table = ctx.readouts(nodes.iter().copied(), &prompts.layout)?;
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, None, false)?;
    nodes
        .iter()
        .map(|&v| {
            let s = vars.embed(&mut tape, table.get(v)?)?;
            predict(tape.value(s).values(), &protos)
        })
        .collect()
}

/// Summed loss over `pairs` against prototypes built from `support`.
pub fn downstream_loss(
    ctx: &PromptContext,
    prompts: &PromptPair,
    masks: Option<&MaskInputs>,
    support: &LabeledSet,
    pairs: &LabeledSet,
    tau: f64,
) -> Result<f64> {
    let table = ctx.readouts(support.nodes().chain(pairs.nodes()), &prompts.layout)?;
    let mut tape = Tape::new();
    let vars = record_prompts(&mut tape, prompts, masks, false)?;
    let loss = record_loss(&mut tape, &vars, &table, support, pairs, tau)?;
    Ok(tape.value(loss.total).item())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            epochs: 100,
            learning_rate: 1e-2,
            tau: 0.5,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneLogEntry {
    pub epoch: usize,
    pub loss: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    /// Prompts with the best validation accuracy, ties broken by lower
    /// validation loss.
    pub prompts: PromptPair,
    pub best_epoch: usize,
    pub log: Vec<TuneLogEntry>,
}

/// Adam on the support loss, starting from `init`, with the encoder frozen.
/// Each epoch's prompts are scored on `validation` (on `support` when
/// `validation` is empty) before the update, so epoch 0 is `init` itself.
pub fn tune_prompts(
    ctx: &PromptContext,
    init: &PromptPair,
    support: &LabeledSet,
    validation: &LabeledSet,
    config: &TuneConfig,
) -> Result<TuneOutcome> {
    config.validate()?;
    init.validate()?;
    let table = ctx.readouts(support.nodes().chain(validation.nodes()), &init.layout)?;
    let mut prompts = init.clone();
    let mut opt = Adam::new(config.learning_rate, &[prompts.feature.len(), prompts.semantic.len()]);
    let mut best = prompts.clone();
    let mut best_epoch = 0;
    let mut best_score = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut log = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..=config.epochs {
        let diverged = |e: Error| match e {
            Error::NonFinite { .. } | Error::DegenerateVector { .. } => Error::Training {
                epoch,
                message: e.to_string(),
            },
            other => other,
        };
        let mut tape = Tape::new();
        let vars = record_prompts(&mut tape, &prompts, None, true)?;
        let loss = record_loss(&mut tape, &vars, &table, support, support, config.tau).map_err(diverged)?;
        let loss_value = tape.value(loss.total).item();
        let (validation_loss, validation_accuracy) = if validation.is_empty() {
            (loss_value, accuracy_of(&tape, &loss.similarities, &support.classes, support))
        } else {
            let mut cache = BTreeMap::new();
            let (per_pair, sims) = record_pair_losses(
                &mut tape,
                &vars,
                &table,
                &support.classes,
                &loss.prototypes,
                validation,
                config.tau,
                &mut cache,
            )
            .map_err(diverged)?;
            (
                per_pair.iter().map(|&v| tape.value(v).item()).sum(),
                accuracy_of(&tape, &sims, &support.classes, validation),
            )
        };
        if !loss_value.is_finite() || !validation_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss is {loss_value}, validation loss is {validation_loss}"),
            });
        }
        log.push(TuneLogEntry {
            epoch,
            loss: loss_value,
            validation_loss,
            validation_accuracy,
        });
        let score = (validation_accuracy, -validation_loss);
        if score > best_score {
            best_score = score;
            best = prompts.clone();
            best_epoch = epoch;
        }
        if epoch == config.epochs {
            break;
        }

        let grads = tape.backward(loss.total)?;
        let gf = grads.values_or_zero(vars.feature);
        let gs = grads.values_or_zero(vars.semantic);
        opt.step(&mut [&mut prompts.feature, &mut prompts.semantic], &[&gf, &gs]);
        if prompts.feature.iter().chain(&prompts.semantic).any(|x| !x.is_finite()) {
            return Err(Error::Training {
                epoch,
                message: "non-finite prompts after update".into(),
            });
        }
    }

    Ok(TuneOutcome {
        prompts: best,
        best_epoch,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptProvenance {
    pub seed: u64,
    pub epochs: usize,
    pub loss_curve: Vec<f64>,
}

/// On-disk prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFile {
    pub prompts: PromptPair,
    pub provenance: PromptProvenance,
}

impl PromptFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PromptFile = serde_json::from_str(&text)?;
        file.prompts.validate()?;
        Ok(file)
    }
}
