//! Link-prediction pre-training: for triplets `(v, a, b)` with `(v, a)` an
//! edge and `(v, b)` not, push `sim(s_v, s_a)` above `sim(s_v, s_b)` where
//! `s_x` is the sum readout of the encoder output over `x`'s ego subgraph.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoder::{GcnEncoder, GcnParams, Init, NodeEmbeddings, DEFAULT_HIDDEN_DIM};
use crate::error::{Error, Result};
use crate::hetgraph::{ego_subgraph, HeteroGraph};
use crate::optim::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub tau: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub negatives_per_anchor: usize,
    /// Total number of triplets drawn before the held-out split.
    pub triplets: usize,
    pub holdout_fraction: f64,
    pub hops: usize,
    pub hidden_dim: usize,
    pub init: Init,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            tau: 0.5,
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
            negatives_per_anchor: 1,
            triplets: 512,
            holdout_fraction: 0.1,
            hops: 1,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            init: Init::Glorot,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.negatives_per_anchor == 0 {
            return Err(Error::Config("negatives_per_anchor must be at least 1".into()));
        }
        if self.triplets < 2 {
            return Err(Error::Config("need at least 2 triplets for a held-out split".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Draws `count` triplets. Each anchor/positive draw is paired with
/// `negatives_per_anchor` negatives, sampled uniformly from the anchor's
/// non-neighbors.
pub fn sample_triplets(
    g: &HeteroGraph,
    count: usize,
    negatives_per_anchor: usize,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let n = g.node_count();
    let anchors: Vec<usize> = (0..n)
        .filter(|&v| {
            let deg = g.neighbors(v).len();
            deg > 0 && deg < n - 1
        })
        .collect();
    if anchors.is_empty() {
        return Err(if g.edges().is_empty() {
            Error::Validation("pre-training needs at least one edge".into())
        } else {
            Error::NoNegative
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let per = negatives_per_anchor.max(1);
    while out.len() < count {
        let &anchor = anchors.choose(&mut rng).expect("non-empty");
        let &positive = g.neighbors(anchor).choose(&mut rng).expect("anchor has a neighbor");
        let candidates: Vec<usize> = (0..n)
            .filter(|&u| u != anchor && !g.is_adjacent(anchor, u))
            .collect();
        for _ in 0..per {
            if out.len() == count {
                break;
            }
            let &negative = candidates.choose(&mut rng).expect("anchor has a non-neighbor");
            out.push(Triplet {
                anchor,
                positive,
                negative,
            });
        }
    }
    Ok(out)
}

/// Triplet loss with the ego readouts precomputed as a constant indicator
/// matrix, so one epoch costs a single extra matmul.
#[derive(Debug, Clone)]
pub struct TripletObjective {
    indicator: Tensor,
    rows: BTreeMap<usize, usize>,
    triplets: Vec<Triplet>,
    tau: f64,
}

impl TripletObjective {
    pub fn new(g: &HeteroGraph, triplets: &[Triplet], tau: f64, hops: usize) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for t in triplets {
            for v in [t.anchor, t.positive, t.negative] {
                g.check_node(v)?;
                let next = rows.len();
                rows.entry(v).or_insert(next);
            }
        }
        let n = g.node_count();
        let mut values = vec![0.0; rows.len() * n];
        for (&v, &r) in &rows {
            for u in ego_subgraph(g, v, hops)?.nodes {
                values[r * n + u] = 1.0;
            }
        }
        Ok(TripletObjective {
            indicator: Tensor::matrix(rows.len(), n, values)?,
            rows,
            triplets: triplets.to_vec(),
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Per-triplet losses, recorded on `tape` against embeddings `h`.
    pub fn per_triplet(&self, tape: &mut Tape, h: Var) -> Result<Vec<Var>> {
        let ind = tape.constant(self.indicator.clone());
        let readouts = tape.matmul(ind, h)?;
        let mut row_vars = BTreeMap::new();
        for (&v, &r) in &self.rows {
            row_vars.insert(v, tape.row(readouts, r)?);
        }
        self.triplets
            .iter()
            .map(|t| {
                let sv = row_vars[&t.anchor];
                let pos = tape.cosine_sim(sv, row_vars[&t.positive])?;
                let neg = tape.cosine_sim(sv, row_vars[&t.negative])?;
                let logits = tape.stack(&[pos, neg])?;
                let scaled = tape.scale(logits, 1.0 / self.tau);
                tape.softmax_nll(scaled, 0)
            })
            .collect()
    }

    /// Summed loss over all triplets.
    pub fn loss(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let parts = self.per_triplet(tape, h)?;
        let stacked = tape.stack(&parts)?;
        Ok(tape.sum(stacked))
    }

    /// `(sim(s_v, s_a), sim(s_v, s_b))` per triplet.
    pub fn similarities(&self, emb: &NodeEmbeddings) -> Result<Vec<(f64, f64)>> {
        let mut tape = Tape::new();
        let ind = tape.constant(self.indicator.clone());
        let h = tape.constant(emb.matrix().clone());
        let readouts = tape.matmul(ind, h)?;
        let mut out = Vec::with_capacity(self.triplets.len());
        for t in &self.triplets {
            let sv = tape.row(readouts, self.rows[&t.anchor])?;
            let sa = tape.row(readouts, self.rows[&t.positive])?;
            let sb = tape.row(readouts, self.rows[&t.negative])?;
            let pos = tape.cosine_sim(sv, sa)?;
            let neg = tape.cosine_sim(sv, sb)?;
            out.push((tape.value(pos).item(), tape.value(neg).item()));
        }
        Ok(out)
    }

    pub fn loss_value(&self, emb: &NodeEmbeddings) -> Result<f64> {
        let mut tape = Tape::new();
        let h = tape.constant(emb.matrix().clone());
        let loss = self.loss(&mut tape, h)?;
        Ok(tape.value(loss).item())
    }
}

/// Summed triplet loss of fixed embeddings.
pub fn pretrain_loss(
    g: &HeteroGraph,
    emb: &NodeEmbeddings,
    triplets: &[Triplet],
    tau: f64,
    hops: usize,
) -> Result<f64> {
    TripletObjective::new(g, triplets, tau, hops)?.loss_value(emb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLogEntry {
    pub epoch: usize,
    pub loss: f64,
    pub heldout_loss: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Parameters with the lowest held-out loss.
    pub params: GcnParams,
    pub best_epoch: usize,
    pub log: Vec<PretrainLogEntry>,
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Training {
            epoch,
            message: e.to_string(),
        },
        Error::DegenerateVector { norm } if !norm.is_finite() => Error::Training {
            epoch,
            message: e.to_string(),
        },
        other => other,
    }
}

pub fn run_pretrain(g: &HeteroGraph, config: &PretrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    let triplets = sample_triplets(g, config.triplets, config.negatives_per_anchor, config.seed)?;
    let heldout_len = ((triplets.len() as f64 * config.holdout_fraction).ceil() as usize)
        .clamp(1, triplets.len() - 1);
    let (train, heldout) = triplets.split_at(triplets.len() - heldout_len);
    let train_obj = TripletObjective::new(g, train, config.tau, config.hops)?;
    let heldout_obj = TripletObjective::new(g, heldout, config.tau, config.hops)?;

    let encoder = GcnEncoder::new(g);
    // Offset so weight init does not share a stream with triplet sampling.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut params = GcnParams::init(g.feature_dim(), config.hidden_dim, config.init, &mut rng)?;
    let mut opt = Adam::new(config.learning_rate, &[params.w1.len(), params.w2.len()]);

    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;
    let mut log = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..=config.epochs {
        let mut tape = Tape::new();
        let w1 = tape.param(params.w1.clone());
        let w2 = tape.param(params.w2.clone());
        let h = encoder.forward(&mut tape, w1, w2)?;
        let loss = train_obj.loss(&mut tape, h).map_err(diverged(epoch))?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("loss is {loss_value}"),
            });
        }

        let emb = NodeEmbeddings(tape.value(h).clone());
        let heldout_loss = heldout_obj.loss_value(&emb).map_err(diverged(epoch))?;
        let sims = heldout_obj.similarities(&emb).map_err(diverged(epoch))?;
        let correct = sims.iter().filter(|(p, n)| p > n).count();
        log.push(PretrainLogEntry {
            epoch,
            loss: loss_value,
            heldout_loss,
            heldout_accuracy: correct as f64 / sims.len() as f64,
        });
        if heldout_loss < best_loss {
            best_loss = heldout_loss;
            best = params.clone();
            best_epoch = epoch;
        }
        if epoch == config.epochs {
            break;
        }

        let grads = tape.backward(loss)?;
        let g1 = grads.values_or_zero(w1);
        let g2 = grads.values_or_zero(w2);
        let mut v1 = params.w1.clone().into_values();
        let mut v2 = params.w2.clone().into_values();
        opt.step(&mut [&mut v1, &mut v2], &[&g1, &g2]);
        params.w1 = Tensor::new(params.w1.shape().to_vec(), v1)?;
        params.w2 = Tensor::new(params.w2.shape().to_vec(), v2)?;
        if !params.w1.is_finite() || !params.w2.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite weights after update".into(),
            });
        }
    }

    Ok(PretrainOutcome {
        params: best,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{Edge, GraphParts};

    fn graph(n: usize, edges: &[(usize, usize)]) -> HeteroGraph {
        HeteroGraph::new(GraphParts {
            type_names: vec!["a".into(), "b".into()],
            edge_type_names: vec!["e".into()],
            target_type: 0,
            node_types: (0..n).map(|v| v % 2).collect(),
            edges: edges
                .iter()
                .map(|&(src, dst)| Edge { src, dst, edge_type: 0 })
                .collect(),
            features: Tensor::from_rows(&(0..n).map(|v| vec![1.0 + v as f64, 0.5]).collect::<Vec<_>>())
                .unwrap(),
            labels: vec![None; n],
            class_names: vec![],
        })
        .unwrap()
    }

    #[test]
    fn path_triplets_are_forced() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let ts = sample_triplets(&g, 20, 1, 7).unwrap();
        for t in ts {
            assert_eq!(t.positive, 1);
            assert!(
                (t.anchor == 0 && t.negative == 2) || (t.anchor == 2 && t.negative == 0),
                "{t:?}"
            );
        }
    }

    #[test]
    fn triangle_has_no_negatives() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        assert!(matches!(sample_triplets(&g, 1, 1, 0), Err(Error::NoNegative)));
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let edges: Vec<_> = (0..12).map(|i| (i, (i + 1) % 12)).chain([(0, 6), (3, 9)]).collect();
        let g = graph(12, &edges);
        let a = sample_triplets(&g, 50, 2, 42).unwrap();
        let b = sample_triplets(&g, 50, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        for t in &a {
            assert!(g.is_adjacent(t.anchor, t.positive));
            assert!(!g.is_adjacent(t.anchor, t.negative));
            assert!(t.anchor != t.negative && t.anchor != t.positive && t.positive != t.negative);
        }
        assert_ne!(a, sample_triplets(&g, 50, 2, 43).unwrap());
    }

    #[test]
    fn tied_similarities_cost_ln_two() {
        // anchor 0 sees nodes 1 and 2 with identical ego readouts
        let g = graph(5, &[(0, 1), (3, 2)]);
        let emb = NodeEmbeddings(
            Tensor::from_rows(&[
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.5, 0.5],
                vec![-0.5, 0.5],
                vec![1.0, 1.0],
            ])
            .unwrap(),
        );
        let t = Triplet {
            anchor: 4,
            positive: 0,
            negative: 2,
        };
        // s_4 = [1,1]; s_0 = h0+h1 = [1,1]; s_2 = h2+h3 = [0,1]
        let loss = pretrain_loss(&g, &emb, &[t], 0.5, 1);
        // 4 is isolated here, so it is not a valid triplet for sampling, but the
        // loss itself is still defined.
        let loss = loss.unwrap();
        let sa = 1.0;
        let sb = 1.0 / 2f64.sqrt();
        let expected = (1.0 + ((sb - sa) / 0.5f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-12);

        let tie = Triplet {
            anchor: 4,
            positive: 0,
            negative: 0,
        };
        let loss = pretrain_loss(&g, &emb, &[tie, tie], 0.5, 1).unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        let g = graph(10, &edges);
        let cfg = PretrainConfig {
            epochs: 0,
            hidden_dim: 4,
            triplets: 20,
            seed: 3,
            ..Default::default()
        };
        let out = run_pretrain(&g, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3u64.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let init = GcnParams::init(2, 4, Init::Glorot, &mut rng).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn planted_blocks_are_learned() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let block = |v: usize| v * 2 / n;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if block(u) == block(v) { 0.25 } else { 0.01 };
                if rng.random::<f64>() < p {
                    edges.push(Edge { src: u, dst: v, edge_type: 0 });
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let g = HeteroGraph::new(GraphParts {
            type_names: vec!["a".into(), "b".into()],
            edge_type_names: vec!["e".into()],
            target_type: 0,
            node_types: (0..n).map(|v| v % 2).collect(),
            edges,
            features: Tensor::from_rows(&rows).unwrap(),
            labels: vec![None; n],
            class_names: vec![],
        })
        .unwrap();
        let cfg = PretrainConfig {
            hidden_dim: 16,
            triplets: 2000,
            seed: 1,
            ..Default::default()
        };
        assert_eq!(cfg.epochs, 200);
        let out = run_pretrain(&g, &cfg).unwrap();
        let last = out.log.last().unwrap();
        assert!(last.heldout_accuracy > 0.9, "{last:?}");
        assert!(last.heldout_accuracy > out.log[0].heldout_accuracy);

        let triplets = sample_triplets(&g, 200, 1, 99).unwrap();
        let obj = TripletObjective::new(&g, &triplets, cfg.tau, cfg.hops).unwrap();
        let sims = obj.similarities(&crate::encoder::encode(&g, &out.params).unwrap()).unwrap();
        let mean = |f: fn(&(f64, f64)) -> f64| sims.iter().map(f).sum::<f64>() / sims.len() as f64;
        assert!(mean(|s| s.0) > mean(|s| s.1));
    }

    #[test]
    fn rejects_bad_config() {
        let g = graph(4, &[(0, 1)]);
        let cfg = PretrainConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(matches!(run_pretrain(&g, &cfg), Err(Error::Config(_))));
    }
}
