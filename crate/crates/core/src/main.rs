use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use prompt_prune::encoder::{encode, GcnParams, Init, DEFAULT_HIDDEN_DIM};
use prompt_prune::harness::{
    block_grid, compute_metrics, emit_report, encode_seeds, run_encoded, sample_tasks, shot_sweep,
    synth_graph, RunConfig, SynthSpec, TaskSpec,
};
use prompt_prune::hetgraph::{load_graph, save_graph, HeteroGraph};
use prompt_prune::pretrain::{run_pretrain, PretrainConfig};
use prompt_prune::prompting::{
    classify, tune_prompts, PromptContext, PromptFile, PromptProvenance, TuneConfig, TuneOutcome,
};
use prompt_prune::pruning::{evaluate_and_prune, PruneConfig};
use prompt_prune::{Error, Result};

#[derive(Parser)]
#[command(name = "prompt-prune", version, about = "Graph prompt tuning, pruning and retuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic heterogeneous graph.
    Synth {
        /// Generator spec; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the encoder by link prediction; prints the training log.
    Pretrain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        hops: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = DEFAULT_HIDDEN_DIM)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 512)]
        triplets: usize,
        #[arg(long, default_value_t = 1)]
        negatives: usize,
        /// Use identity weights instead of Glorot.
        #[arg(long)]
        identity: bool,
    },
    /// Sample k-shot tasks into DIR/task-<i>.json.
    SampleTasks {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune prompts from the neutral initialization.
    Tune {
        #[command(flatten)]
        frozen: Frozen,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score prompt entries, threshold and compact.
    Prune {
        #[command(flatten)]
        frozen: Frozen,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        delta: f64,
        #[arg(long, default_value_t = 0.4)]
        beta: f64,
        #[arg(long, default_value_t = 16)]
        blocks: usize,
        #[arg(long)]
        report: PathBuf,
        /// Where to write the compacted prompts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Retune compacted prompts.
    Retune {
        #[command(flatten)]
        frozen: Frozen,
        #[arg(long)]
        pruned: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the query set and print metrics.
    Eval {
        #[command(flatten)]
        frozen: Frozen,
        #[arg(long)]
        prompts: PathBuf,
    },
    /// Full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also sweep these shot counts, e.g. 1,2,3,4,5.
        #[arg(long, value_delimiter = ',')]
        sweep_shots: Vec<usize>,
        /// Block counts for a block-count by beta grid.
        #[arg(long, value_delimiter = ',')]
        grid_blocks: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        grid_betas: Vec<f64>,
    },
}

/// Graph, frozen encoder and task shared by the prompt phases.
#[derive(Args)]
struct Frozen {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    task: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    hops: usize,
}

impl Frozen {
    fn load(&self) -> Result<(HeteroGraph, GcnParams, TaskSpec)> {
        let g = load_graph(&self.graph)?;
        let params = GcnParams::load(&self.ckpt)?;
        let task = TaskSpec::load(&self.task)?;
        task.labeled().check(&g)?;
        Ok((g, params, task))
    }
}

fn save_tuned(out: &Path, outcome: TuneOutcome, seed: u64, epochs: usize) -> Result<()> {
    PromptFile {
        prompts: outcome.prompts,
        provenance: PromptProvenance {
            seed,
            epochs,
            loss_curve: outcome.log.iter().map(|e| e.loss).collect(),
        },
    }
    .save(out)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, seed, out } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
                    serde_json::from_str(&text).map_err(|e| Error::Spec(e.to_string()))?
                }
                None => SynthSpec::default(),
            };
            save_graph(&synth_graph(&spec, seed)?, out)
        }
        Command::Pretrain {
            graph,
            out,
            tau,
            epochs,
            seed,
            hops,
            lr,
            hidden_dim,
            triplets,
            negatives,
            identity,
        } => {
            let g = load_graph(graph)?;
            let config = PretrainConfig {
                tau,
                epochs,
                learning_rate: lr,
                seed,
                negatives_per_anchor: negatives,
                triplets,
                hops,
                hidden_dim,
                init: if identity { Init::Identity } else { Init::Glorot },
                ..PretrainConfig::default()
            };
            let outcome = run_pretrain(&g, &config)?;
            outcome.params.save(out)?;
            println!("{}", serde_json::to_string_pretty(&outcome.log)?);
            Ok(())
        }
        Command::SampleTasks {
            graph,
            k,
            tasks,
            seed,
            out,
        } => {
            let g = load_graph(graph)?;
            std::fs::create_dir_all(&out).map_err(|source| Error::Io {
                path: out.clone(),
                source,
            })?;
            for task in sample_tasks(&g, k, tasks, seed)? {
                task.save(out.join(format!("task-{}.json", task.index)))?;
            }
            Ok(())
        }
        Command::Tune {
            frozen,
            out,
            epochs,
            lr,
            seed,
        } => {
            let (g, params, task) = frozen.load()?;
            let ctx = PromptContext::new(&g, encode(&g, &params)?, frozen.hops)?;
            let config = TuneConfig {
                epochs,
                learning_rate: lr,
                tau: frozen.tau,
            };
            let outcome = tune_prompts(&ctx, &ctx.neutral_prompts(), &task.support, &task.validation, &config)?;
            save_tuned(&out, outcome, seed, epochs)
        }
        Command::Prune {
            frozen,
            prompts,
            delta,
            beta,
            blocks,
            report,
            out,
        } => {
            let (g, params, task) = frozen.load()?;
            let ctx = PromptContext::new(&g, encode(&g, &params)?, frozen.hops)?;
            let file = PromptFile::load(prompts)?;
            let config = PruneConfig {
                delta,
                beta,
                blocks,
                tau: frozen.tau,
            };
            let (importance, pruned) =
                evaluate_and_prune(&ctx, &file.prompts, &task.support, &task.labeled(), &config, task.seed)?;
            importance.save(report)?;
            PromptFile {
                prompts: pruned,
                provenance: file.provenance,
            }
            .save(out)
        }
        Command::Retune {
            frozen,
            pruned,
            epochs,
            lr,
            out,
        } => {
            let (g, params, task) = frozen.load()?;
            let ctx = PromptContext::new(&g, encode(&g, &params)?, frozen.hops)?;
            let file = PromptFile::load(pruned)?;
            let config = TuneConfig {
                epochs,
                learning_rate: lr,
                tau: frozen.tau,
            };
            let outcome = tune_prompts(&ctx, &file.prompts, &task.support, &task.validation, &config)?;
            save_tuned(&out, outcome, file.provenance.seed, epochs)
        }
        Command::Eval { frozen, prompts } => {
            let (g, params, task) = frozen.load()?;
            let ctx = PromptContext::new(&g, encode(&g, &params)?, frozen.hops)?;
            let file = PromptFile::load(prompts)?;
            let nodes: Vec<usize> = task.query.nodes().collect();
            let truths: Vec<usize> = task.query.labels().collect();
            let predictions = classify(&ctx, &file.prompts, &task.support, &nodes)?;
            let metrics = compute_metrics(&predictions, &truths, &task.query.classes)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        Command::Run {
            config,
            out,
            sweep_shots,
            grid_blocks,
            grid_betas,
        } => {
            let config = RunConfig::load(config)?;
            let g = config.graph()?;
            let encoded = encode_seeds(&g, &config)?;
            let mut output = run_encoded(&g, &config, &encoded)?;
            if !sweep_shots.is_empty() {
                output.summary.shot_sweep = shot_sweep(&g, &config, &encoded, &sweep_shots)?;
            }
            if !grid_blocks.is_empty() {
                let betas = if grid_betas.is_empty() { vec![config.beta] } else { grid_betas };
                output.summary.block_grid = block_grid(&g, &config, &encoded, &grid_blocks, &betas)?;
            }
            for path in emit_report(&output, &out)? {
                println!("{}", path.display());
            }
            let micro = output.summary.aggregate.micro_f;
            eprintln!("micro-F {:.4} ± {:.4} over {} tasks", micro.mean, micro.std, output.summary.records.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
