//! Report files: `summary.json` plus CSV tables for plotting.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::pipeline::{RunOutput, RunSummary};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct TaskRow<'a> {
    seed: u64,
    task: usize,
    variant: &'a str,
    k: usize,
    micro_f: f64,
    macro_f: f64,
    parameters: usize,
}

#[derive(Serialize)]
struct ImportanceRow<'a> {
    seed: u64,
    task: usize,
    kind: &'a str,
    index: usize,
    raw: f64,
    z: f64,
    kept: bool,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    seed: u64,
    task: Option<usize>,
    phase: &'a str,
    seconds: f64,
}

#[derive(Serialize)]
struct ShotRow {
    k: usize,
    micro_mean: f64,
    micro_std: f64,
    macro_mean: f64,
    macro_std: f64,
}

#[derive(Serialize)]
struct GridRow {
    blocks: usize,
    beta: f64,
    micro_mean: f64,
    micro_std: f64,
    parameters_mean: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Contract(format!("csv: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report into `dir`, creating it if needed. Returns the paths
/// written. Sweep and grid tables are written only when present.
pub fn emit_report(output: &RunOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let summary = &output.summary;
    if summary.records.is_empty() {
        return Err(Error::Contract("no records to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join("tasks.csv");
    write_csv(
        &path,
        summary.records.iter().map(|r| TaskRow {
            seed: r.seed,
            task: r.task,
            variant: r.variant.name(),
            k: r.k,
            micro_f: r.metrics.micro_f,
            macro_f: r.metrics.macro_f,
            parameters: r.parameters,
        }),
    )?;
    written.push(path);

    let importance: Vec<ImportanceRow> = summary
        .records
        .iter()
        .filter_map(|r| r.importance.as_ref().map(|rep| (r, rep)))
        .flat_map(|(r, rep)| {
            let sem = (0..rep.semantic_raw.len()).map(move |i| ImportanceRow {
                seed: r.seed,
                task: r.task,
                kind: "semantic",
                index: i,
                raw: rep.semantic_raw[i],
                z: rep.semantic_z[i],
                kept: rep.masks.lambda[i],
            });
            let feat = (0..rep.feature_raw.len()).map(move |j| ImportanceRow {
                seed: r.seed,
                task: r.task,
                kind: "feature",
                index: j,
                raw: rep.feature_raw[j],
                z: rep.feature_z[j],
                kept: rep.masks.eta[j],
            });
            sem.chain(feat)
        })
        .collect();
    if !importance.is_empty() {
        let path = dir.join("importance.csv");
        write_csv(&path, importance)?;
        written.push(path);
    }

    let path = dir.join("timings.csv");
    write_csv(
        &path,
        output.timings.iter().map(|t| TimingRow {
            seed: t.seed,
            task: t.task,
            phase: t.phase.name(),
            seconds: t.seconds,
        }),
    )?;
    written.push(path);

    if !summary.shot_sweep.is_empty() {
        let path = dir.join("shots.csv");
        write_csv(
            &path,
            summary.shot_sweep.iter().map(|p| ShotRow {
                k: p.k,
                micro_mean: p.aggregate.micro_f.mean,
                micro_std: p.aggregate.micro_f.std,
                macro_mean: p.aggregate.macro_f.mean,
                macro_std: p.aggregate.macro_f.std,
            }),
        )?;
        written.push(path);
    }
    if !summary.block_grid.is_empty() {
        let path = dir.join("blocks.csv");
        write_csv(
            &path,
            summary.block_grid.iter().map(|p| GridRow {
                blocks: p.blocks,
                beta: p.beta,
                micro_mean: p.aggregate.micro_f.mean,
                micro_std: p.aggregate.micro_f.std,
                parameters_mean: p.aggregate.parameters.mean,
            }),
        )?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(dir: impl AsRef<Path>) -> Result<RunSummary> {
    let path = dir.as_ref().join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
