//! Experiment driver: synthetic data, task sampling, metrics, variants and
//! report files.

pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod tasks;

pub use metrics::{compute_metrics, Metrics};
pub use pipeline::{
    block_grid, encode_seeds, run_encoded, run_pipeline, run_task, shot_sweep, Phase, RunConfig,
    RunOutput, RunSummary, TaskRecord, Variant,
};
pub use report::{emit_report, load_report};
pub use synth::{synth_graph, SynthSpec};
pub use tasks::{sample_tasks, TaskSpec};
