//! Planted-partition heterogeneous graphs with known informative dims/types.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::hetgraph::{Edge, GraphParts, HeteroGraph};

/// Generator parameters.
///
/// Every node of every type draws a latent class. Edge probability between
/// types `a` and `b` averages `edge_density[a][b]`, split so that a fraction
/// `homophily` of the expected edges join same-class endpoints. On nodes of
/// the informative types, informative dim `k` carries `signal` when
/// [`SynthSpec::dim_class`] of `k` is the node's class. Everything else is Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub type_nodes: Vec<usize>,
    pub target_type: usize,
    pub classes: usize,
    pub informative_dims: usize,
    pub noise_dims: usize,
    /// Width of the runs of informative dims sharing a class.
    pub group_size: usize,
    pub informative_types: Vec<usize>,
    pub edge_density: Vec<Vec<f64>>,
    pub homophily: f64,
    pub signal: f64,
    /// Std of the noise added to informative dims.
    pub signal_noise: f64,
    /// Mean and std of the pure-noise dims; the mean is shared by every
    /// node, so it carries no class information.
    pub noise_mean: f64,
    pub noise_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let types = 4;
        SynthSpec {
            type_nodes: vec![100; types],
            target_type: 0,
            classes: 3,
            informative_dims: 16,
            noise_dims: 48,
            group_size: 1,
            informative_types: vec![0, 1],
            edge_density: vec![vec![0.02; types]; types],
            homophily: 0.8,
            signal: 1.0,
            signal_noise: 0.5,
            noise_mean: 0.0,
            noise_scale: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn type_count(&self) -> usize {
        self.type_nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.informative_dims + self.noise_dims
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.type_count();
        let fail = |m: String| Err(Error::Spec(m));
        if t == 0 || self.type_nodes.iter().any(|&n| n == 0) {
            return fail("every node type needs at least one node".into());
        }
        if self.target_type >= t {
            return fail(format!("target type {} out of range", self.target_type));
        }
        if self.classes < 2 {
            return fail("need at least 2 classes".into());
        }
        if self.group_size == 0 {
            return fail("group size must be at least 1".into());
        }
        if self.feature_dim() == 0 {
            return fail("feature dimension is zero".into());
        }
        if let Some(&bad) = self.informative_types.iter().find(|&&i| i >= t) {
            return fail(format!("informative type {bad} out of range"));
        }
        if self.edge_density.len() != t || self.edge_density.iter().any(|r| r.len() != t) {
            return fail(format!("edge density must be {t}x{t}"));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return fail(format!("homophily {} outside [0, 1]", self.homophily));
        }
        for a in 0..t {
            for b in 0..t {
                let p = self.edge_density[a][b];
                if !(0.0..=1.0).contains(&p) {
                    return fail(format!("density {p} for types ({a}, {b}) outside [0, 1]"));
                }
                if p != self.edge_density[b][a] {
                    return fail(format!("density matrix not symmetric at ({a}, {b})"));
                }
                let (same, diff) = self.edge_probabilities(p);
                if same > 1.0 || diff > 1.0 {
                    return fail(format!(
                        "density {p} with homophily {} needs edge probability above 1",
                        self.homophily
                    ));
                }
            }
        }
        for (name, x) in [
            ("signal", self.signal),
            ("noise_mean", self.noise_mean.abs()),
            ("signal_noise", self.signal_noise),
            ("noise_scale", self.noise_scale),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                return fail(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn edge_probabilities(&self, density: f64) -> (f64, f64) {
        let c = self.classes as f64;
        (
            density * self.homophily * c,
            density * (1.0 - self.homophily) * c / (c - 1.0),
        )
    }

    /// Class an informative dim speaks for: runs of `group_size` dims take
    /// the classes in turn.
    pub fn dim_class(&self, k: usize) -> usize {
        (k / self.group_size) % self.classes
    }

    /// Feature dims carrying class signal.
    pub fn informative_range(&self) -> std::ops::Range<usize> {
        0..self.informative_dims
    }
}

pub fn synth_graph(spec: &SynthSpec, seed: u64) -> Result<HeteroGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = spec.type_count();

    let mut node_types = Vec::new();
    let mut classes = Vec::new();
    let mut offsets = Vec::with_capacity(t);
    for (ty, &n) in spec.type_nodes.iter().enumerate() {
        offsets.push(node_types.len());
        let mut cls: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        cls.shuffle(&mut rng);
        node_types.extend(std::iter::repeat_n(ty, n));
        classes.extend(cls);
    }

    let mut edge_type_names = Vec::new();
    let mut edges = Vec::new();
    for a in 0..t {
        for b in a..t {
            let density = spec.edge_density[a][b];
            if density == 0.0 {
                continue;
            }
            let edge_type = edge_type_names.len();
            edge_type_names.push(format!("t{a}-t{b}"));
            let (same, diff) = spec.edge_probabilities(density);
            for i in 0..spec.type_nodes[a] {
                let u = offsets[a] + i;
                let start = if a == b { i + 1 } else { 0 };
                for j in start..spec.type_nodes[b] {
                    let v = offsets[b] + j;
                    let p = if classes[u] == classes[v] { same } else { diff };
                    if rng.random::<f64>() < p {
                        edges.push(Edge {
                            src: u,
                            dst: v,
                            edge_type,
                        });
                    }
                }
            }
        }
    }
    if edge_type_names.is_empty() {
        return Err(Error::Spec("every edge density is zero".into()));
    }

    let d = spec.feature_dim();
    let signal_noise = Normal::new(0.0, spec.signal_noise).map_err(|e| Error::Spec(e.to_string()))?;
    let noise = Normal::new(spec.noise_mean, spec.noise_scale).map_err(|e| Error::Spec(e.to_string()))?;
    let mut values = Vec::with_capacity(node_types.len() * d);
    for (v, &ty) in node_types.iter().enumerate() {
        let informative = spec.informative_types.contains(&ty);
        for k in 0..d {
            let x = if k < spec.informative_dims {
                let planted = informative && spec.dim_class(k) == classes[v];
                let base = if planted { spec.signal } else { 0.0 };
                base + signal_noise.sample(&mut rng)
            } else {
                noise.sample(&mut rng)
            };
            values.push(x);
        }
    }

    let labels = node_types
        .iter()
        .zip(&classes)
        .map(|(&ty, &c)| (ty == spec.target_type).then_some(c))
        .collect();
    HeteroGraph::new(GraphParts {
        type_names: (0..t).map(|i| format!("t{i}")).collect(),
        edge_type_names,
        target_type: spec.target_type,
        node_types,
        edges,
        features: Tensor::matrix(values.len() / d, d, values)?,
        labels,
        class_names: (0..spec.classes).map(|c| format!("c{c}")).collect(),
    })
}
