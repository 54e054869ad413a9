//! k-shot task sampling.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::HeteroGraph;
use crate::prompting::LabeledSet;

/// One episode: `k` support and `k` validation nodes per class, the rest of
/// the labeled target nodes as queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub k: usize,
    pub support: LabeledSet,
    pub validation: LabeledSet,
    pub query: LabeledSet,
    pub seed: u64,
    pub index: usize,
}

impl TaskSpec {
    /// Support plus validation pairs.
    pub fn labeled(&self) -> LabeledSet {
        self.support.concat(&self.validation)
    }

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

/// Task `i` draws from ChaCha8 stream `i` of `seed`, so tasks do not depend
/// on how many are requested.
pub fn sample_tasks(g: &HeteroGraph, k: usize, n_tasks: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let by_class = g.labeled_targets_by_class();
    let required = 2 * k + 1;
    for (c, nodes) in by_class.iter().enumerate() {
        if nodes.len() < required {
            return Err(Error::TaskConstruction {
                class: g.class_names()[c].clone(),
                available: nodes.len(),
                required,
            });
        }
    }
    let classes: Vec<usize> = (0..by_class.len()).collect();
    (0..n_tasks)
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let (mut support, mut validation, mut query) = (Vec::new(), Vec::new(), Vec::new());
            for (c, nodes) in by_class.iter().enumerate() {
                let picked = sample(&mut rng, nodes.len(), 2 * k).into_vec();
                support.extend(picked[..k].iter().map(|&i| (nodes[i], c)));
                validation.extend(picked[k..].iter().map(|&i| (nodes[i], c)));
                let mut taken = picked;
                taken.sort_unstable();
                query.extend(
                    (0..nodes.len())
                        .filter(|i| taken.binary_search(i).is_err())
                        .map(|i| (nodes[i], c)),
                );
            }
            Ok(TaskSpec {
                k,
                support: LabeledSet::new(support, classes.clone())?,
                validation: LabeledSet::new(validation, classes.clone())?,
                query: LabeledSet::new(query, classes.clone())?,
                seed,
                index,
            })
        })
        .collect()
}
