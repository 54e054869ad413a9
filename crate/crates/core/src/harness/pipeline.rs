//! End-to-end runs: pre-train, tune, score and prune, retune, evaluate.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, GcnParams, Init, NodeEmbeddings, DEFAULT_HIDDEN_DIM};
use crate::error::{Error, Result};
use crate::harness::metrics::{compute_metrics, Metrics};
use crate::harness::synth::{synth_graph, SynthSpec};
use crate::harness::tasks::{sample_tasks, TaskSpec};
use crate::hetgraph::{load_graph, HeteroGraph};
use crate::pretrain::{run_pretrain, PretrainConfig};
use crate::prompting::{classify, tune_prompts, PromptContext, PromptPair, TuneConfig};
use crate::pruning::{
    apply_masks, evaluate_and_prune, random_masks, BlockPartition, ImportanceReport, MaskState,
    PruneConfig, DEFAULT_BETA, DEFAULT_BLOCKS, DEFAULT_DELTA,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Tune, score and prune, retune.
    #[default]
    Full,
    /// Tune only.
    #[serde(rename = "wo-rep")]
    WithoutRep,
    /// Tune, score and prune; no retuning.
    #[serde(rename = "wo-r")]
    WithoutR,
    /// Tune, then retune the unpruned prompts.
    #[serde(rename = "wo-ep")]
    WithoutEp,
    /// Prune as many tokens and blocks as `Full` would, chosen uniformly.
    RandomPruning,
    /// Prune semantic tokens only.
    PsOnly,
    /// Prune feature blocks only.
    PfOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::WithoutRep,
        Variant::WithoutR,
        Variant::WithoutEp,
        Variant::RandomPruning,
        Variant::PsOnly,
        Variant::PfOnly,
    ];

    pub fn prunes(self) -> bool {
        !matches!(self, Variant::WithoutRep | Variant::WithoutEp)
    }

    pub fn retunes(self) -> bool {
        !matches!(self, Variant::WithoutRep | Variant::WithoutR)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutRep => "wo-rep",
            Variant::WithoutR => "wo-r",
            Variant::WithoutEp => "wo-ep",
            Variant::RandomPruning => "random-pruning",
            Variant::PsOnly => "ps-only",
            Variant::PfOnly => "pf-only",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Every knob of a run. Deserializes from a single JSON document; missing
/// fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Graph file; when absent the graph is generated from `synth`.
    pub graph: Option<PathBuf>,
    pub synth: SynthSpec,
    pub synth_seed: u64,
    /// Encoder checkpoint; when absent each seed pre-trains its own.
    pub checkpoint: Option<PathBuf>,
    pub tau: f64,
    pub hops: usize,
    pub hidden_dim: usize,
    pub init: Init,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub triplets: usize,
    pub tune_epochs: usize,
    pub tune_learning_rate: f64,
    /// Defaults to half of `tune_epochs`.
    pub retune_epochs: Option<usize>,
    pub blocks: usize,
    pub delta: f64,
    pub beta: f64,
    pub variant: Variant,
    pub shots: usize,
    pub tasks: usize,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            graph: None,
            synth: SynthSpec::default(),
            synth_seed: 0,
            checkpoint: None,
            tau: 0.5,
            hops: 1,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            init: Init::Identity,
            pretrain_epochs: 20,
            pretrain_learning_rate: 3e-4,
            triplets: 512,
            tune_epochs: 100,
            tune_learning_rate: 3e-3,
            retune_epochs: None,
            blocks: DEFAULT_BLOCKS,
            delta: DEFAULT_DELTA,
            beta: DEFAULT_BETA,
            variant: Variant::Full,
            shots: 1,
            tasks: 10,
            seeds: vec![0],
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.tasks == 0 {
            return Err(Error::Config("need at least one task".into()));
        }
        BlockPartition::new(self.hidden_dim, self.blocks)?;
        self.tune_config().validate()?;
        self.pretrain_config(0).validate()
    }

    /// Loads or generates the graph named by the config.
    pub fn graph(&self) -> Result<HeteroGraph> {
        match &self.graph {
            Some(path) => load_graph(path),
            None => synth_graph(&self.synth, self.synth_seed),
        }
    }

    pub fn pretrain_config(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            tau: self.tau,
            epochs: self.pretrain_epochs,
            learning_rate: self.pretrain_learning_rate,
            seed,
            triplets: self.triplets,
            hops: self.hops,
            hidden_dim: self.hidden_dim,
            init: self.init,
            ..PretrainConfig::default()
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            epochs: self.tune_epochs,
            learning_rate: self.tune_learning_rate,
            tau: self.tau,
        }
    }

    pub fn retune_config(&self) -> TuneConfig {
        TuneConfig {
            epochs: self.retune_epochs.unwrap_or(self.tune_epochs / 2),
            ..self.tune_config()
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            delta: self.delta,
            beta: self.beta,
            blocks: self.blocks,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Tune,
    Importance,
    Prune,
    Retune,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Tune => "tune",
            Phase::Importance => "importance",
            Phase::Prune => "prune",
            Phase::Retune => "retune",
            Phase::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seed: u64,
    pub task: Option<usize>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub seed: u64,
    pub task: Option<usize>,
    pub phase: Phase,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub seed: u64,
    pub task: usize,
    pub variant: Variant,
    pub k: usize,
    pub metrics: Metrics,
    /// Trainable prompt entries of the evaluated prompts.
    pub parameters: usize,
    pub tune_best_epoch: usize,
    pub retune_best_epoch: Option<usize>,
    pub importance: Option<ImportanceReport>,
    /// Masks actually applied; differs from the report's for the random
    /// and single-prompt variants.
    pub masks: Option<MaskState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub micro_f: MeanStd,
    pub macro_f: MeanStd,
    pub parameters: MeanStd,
    pub records: usize,
}

impl Aggregate {
    pub fn of(records: &[&TaskRecord]) -> Self {
        let pick = |f: &dyn Fn(&TaskRecord) -> f64| MeanStd::of(&records.iter().map(|r| f(r)).collect::<Vec<_>>());
        Aggregate {
            micro_f: pick(&|r| r.metrics.micro_f),
            macro_f: pick(&|r| r.metrics.macro_f),
            parameters: pick(&|r| r.parameters as f64),
            records: records.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub blocks: usize,
    pub beta: f64,
    pub aggregate: Aggregate,
}

/// Everything reproducible about a run. Wall times live in [`RunOutput`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub records: Vec<TaskRecord>,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: Aggregate,
    #[serde(default)]
    pub shot_sweep: Vec<SweepPoint>,
    #[serde(default)]
    pub block_grid: Vec<GridPoint>,
}

impl RunSummary {
    pub fn from_records(config: RunConfig, records: Vec<TaskRecord>) -> Self {
        let per_seed = config
            .seeds
            .iter()
            .map(|&seed| {
                let mine: Vec<&TaskRecord> = records.iter().filter(|r| r.seed == seed).collect();
                SeedSummary {
                    seed,
                    aggregate: Aggregate::of(&mine),
                }
            })
            .collect();
        let all: Vec<&TaskRecord> = records.iter().collect();
        RunSummary {
            aggregate: Aggregate::of(&all),
            config,
            records,
            per_seed,
            shot_sweep: Vec::new(),
            block_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub timings: Vec<PhaseTiming>,
    pub audit: Vec<AuditEntry>,
}

/// Frozen embeddings for one seed.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub seed: u64,
    pub embeddings: NodeEmbeddings,
    pub seconds: f64,
}

/// Loads the configured checkpoint, or pre-trains once per seed.
pub fn encode_seeds(g: &HeteroGraph, config: &RunConfig) -> Result<Vec<Encoded>> {
    config.validate()?;
    let shared = match &config.checkpoint {
        Some(path) => Some(GcnParams::load(path)?),
        None => None,
    };
    config
        .seeds
        .iter()
        .map(|&seed| {
            let start = Instant::now();
            let params = match &shared {
                Some(p) => p.clone(),
                None => {
                    run_pretrain(g, &config.pretrain_config(seed))
                        .map_err(|e| e.in_phase("pretrain"))?
                        .params
                }
            };
            let embeddings = encode(g, &params).map_err(|e| e.in_phase("pretrain"))?;
            Ok(Encoded {
                seed,
                embeddings,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn run_pipeline(g: &HeteroGraph, config: &RunConfig) -> Result<RunOutput> {
    let encoded = encode_seeds(g, config)?;
    run_encoded(g, config, &encoded)
}

/// Runs every task of every seed on already-encoded graphs.
pub fn run_encoded(g: &HeteroGraph, config: &RunConfig, encoded: &[Encoded]) -> Result<RunOutput> {
    config.validate()?;
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut audit = Vec::new();
    for enc in encoded {
        if config.checkpoint.is_none() {
            audit.push(AuditEntry {
                seed: enc.seed,
                task: None,
                phase: Phase::Pretrain,
            });
        }
        timings.push(PhaseTiming {
            seed: enc.seed,
            task: None,
            phase: Phase::Pretrain,
            seconds: enc.seconds,
        });
        let ctx = PromptContext::new(g, enc.embeddings.clone(), config.hops)?;
        let tasks = sample_tasks(g, config.shots, config.tasks, enc.seed)?;
        let results: Vec<Result<TaskRun>> =
            tasks.par_iter().map(|t| run_task(&ctx, t, config)).collect();
        for r in results {
            let r = r?;
            records.push(r.record);
            timings.extend(r.timings);
            audit.extend(r.audit);
        }
    }
    Ok(RunOutput {
        summary: RunSummary::from_records(config.clone(), records),
        timings,
        audit,
    })
}

/// Outcome of one task under one variant.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub record: TaskRecord,
    pub prompts: PromptPair,
    pub timings: Vec<PhaseTiming>,
    pub audit: Vec<AuditEntry>,
}

struct Clock {
    seed: u64,
    task: usize,
    timings: Vec<PhaseTiming>,
    audit: Vec<AuditEntry>,
}

impl Clock {
    fn run<T>(&mut self, phase: Phase, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.audit.push(AuditEntry {
            seed: self.seed,
            task: Some(self.task),
            phase,
        });
        let start = Instant::now();
        let out = f().map_err(|e| e.in_phase(phase.name()))?;
        self.timings.push(PhaseTiming {
            seed: self.seed,
            task: Some(self.task),
            phase,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

const RANDOM_MASK_STREAM: u64 = 1 << 32;

pub fn run_task(ctx: &PromptContext, task: &TaskSpec, config: &RunConfig) -> Result<TaskRun> {
    let variant = config.variant;
    let mut clock = Clock {
        seed: task.seed,
        task: task.index,
        timings: Vec::new(),
        audit: Vec::new(),
    };

    let tuned = clock.run(Phase::Tune, || {
        tune_prompts(ctx, &ctx.neutral_prompts(), &task.support, &task.validation, &config.tune_config())
    })?;
    let mut prompts = tuned.prompts;
    let mut importance = None;
    let mut applied = None;

    if variant.prunes() {
        let labeled = task.labeled();
        let prune_config = config.prune_config();
        let (report, pruned) = clock.run(Phase::Importance, || {
            evaluate_and_prune(ctx, &prompts, &task.support, &labeled, &prune_config, task.seed)
        })?;
        let partition = BlockPartition::new(prompts.layout.hidden_dim, config.blocks)?;
        prompts = clock.run(Phase::Prune, || {
            let masks = match variant {
                Variant::RandomPruning => {
                    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
                    rng.set_stream(RANDOM_MASK_STREAM + task.index as u64);
                    random_masks(&report.masks, &mut rng)
                }
                Variant::PsOnly => MaskState {
                    eta: vec![true; report.masks.eta.len()],
                    ..report.masks.clone()
                },
                Variant::PfOnly => MaskState {
                    lambda: vec![true; report.masks.lambda.len()],
                    ..report.masks.clone()
                },
                _ => report.masks.clone(),
            };
            let p = if masks == report.masks {
                pruned
            } else {
                apply_masks(&prompts, &masks, &partition)?
            };
            applied = Some(masks);
            Ok(p)
        })?;
        importance = Some(report);
    }

    let mut retune_best_epoch = None;
    if variant.retunes() {
        let out = clock.run(Phase::Retune, || {
            tune_prompts(ctx, &prompts, &task.support, &task.validation, &config.retune_config())
        })?;
        prompts = out.prompts;
        retune_best_epoch = Some(out.best_epoch);
    }

    let metrics = clock.run(Phase::Eval, || {
        let nodes: Vec<usize> = task.query.nodes().collect();
        let truths: Vec<usize> = task.query.labels().collect();
        let predictions = classify(ctx, &prompts, &task.support, &nodes)?;
        compute_metrics(&predictions, &truths, &task.query.classes)
    })?;

    Ok(TaskRun {
        record: TaskRecord {
            seed: task.seed,
            task: task.index,
            variant,
            k: task.k,
            metrics,
            parameters: prompts.parameter_count(),
            tune_best_epoch: tuned.best_epoch,
            retune_best_epoch,
            importance,
            masks: applied,
        },
        prompts,
        timings: clock.timings,
        audit: clock.audit,
    })
}

/// Mean metrics for each shot count, reusing one encoding per seed.
pub fn shot_sweep(
    g: &HeteroGraph,
    config: &RunConfig,
    encoded: &[Encoded],
    shots: &[usize],
) -> Result<Vec<SweepPoint>> {
    shots
        .iter()
        .map(|&k| {
            let cfg = RunConfig {
                shots: k,
                ..config.clone()
            };
            let out = run_encoded(g, &cfg, encoded)?;
            Ok(SweepPoint {
                k,
                aggregate: out.summary.aggregate,
            })
        })
        .collect()
}

/// Mean metrics over a block-count by feature-threshold grid.
pub fn block_grid(
    g: &HeteroGraph,
    config: &RunConfig,
    encoded: &[Encoded],
    blocks: &[usize],
    betas: &[f64],
) -> Result<Vec<GridPoint>> {
    let mut out = Vec::new();
    for &t in blocks {
        for &beta in betas {
            let cfg = RunConfig {
                blocks: t,
                beta,
                ..config.clone()
            };
            out.push(GridPoint {
                blocks: t,
                beta,
                aggregate: run_encoded(g, &cfg, encoded)?.summary.aggregate,
            });
        }
    }
    Ok(out)
}
