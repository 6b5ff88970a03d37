use std::path::PathBuf;

use serde::Serialize;

use crate::cem::{Checkpoint, EpochStats};
use crate::error::{Error, Result};
use crate::jsonl::{read_catalog, read_sessions, write_catalog, write_sessions};
use crate::metrics::{write_reports, RunReport};
use crate::synth::{generate_corpus, generate_sessions, CorpusStats, GenConfig};

use super::config::{ExperimentConfig, Method, MethodSpec, SweepSpec};
use super::pipeline::{evaluate_all, run_sweep, train_method, Dataset, Ranker, SweepTable};

/// Generates the synthetic catalog and session log and writes both files.
pub fn cmd_generate(cfg: &ExperimentConfig, seed: Option<u64>) -> Result<CorpusStats> {
    let gen = GenConfig {
        seed: seed.unwrap_or(cfg.generator.seed),
        ..cfg.generator.clone()
    };
    let (catalog, _, world) = generate_corpus(&gen)?;
    let sessions = generate_sessions(&gen, &catalog, &world)?;
    write_catalog(&cfg.paths.catalog, &catalog)?;
    write_sessions(&cfg.paths.sessions, &sessions)?;
    Ok(CorpusStats::compute(&catalog, &sessions))
}

/// Reads the catalog and session files named in the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let catalog = read_catalog(&cfg.paths.catalog)?;
    let sessions = read_sessions(&cfg.paths.sessions)?;
    Dataset::build(catalog, &sessions, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub label: String,
    pub checkpoint: PathBuf,
    pub train_entries: usize,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
}

/// Trains one embedding method and writes `<checkpoints>/<label>.json`.
pub fn cmd_train(cfg: &ExperimentConfig, method: Method) -> Result<TrainSummary> {
    if !method.is_embedding() {
        return Err(Error::Argument(format!(
            "{method} has no trainable parameters"
        )));
    }
    let spec = cfg.method_spec(method);
    let ds = load_dataset(cfg)?;
    let outcome = train_method(&ds, cfg, &spec)?;
    let weights = spec.weights()?.expect("embedding methods have weights");
    let path = cfg.paths.checkpoint(&spec.label());
    Checkpoint::new(
        &outcome.store,
        weights,
        spec.train_config(&cfg.train),
        outcome.best_valid_mrr,
    )
    .save(&path)?;
    Ok(TrainSummary {
        label: spec.label(),
        checkpoint: path,
        train_entries: ds.train_entries.len(),
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        best_valid_mrr: outcome.best_valid_mrr,
    })
}

fn load_ranker(cfg: &ExperimentConfig, spec: &MethodSpec) -> Result<Ranker> {
    if !spec.method.is_embedding() {
        return Ranker::lexical(spec, cfg);
    }
    let path = cfg.paths.checkpoint(&spec.label());
    if !path.exists() {
        return Err(Error::Argument(format!(
            "no checkpoint for {} at {}; run `train --method {}` first",
            spec.label(),
            path.display(),
            spec.method
        )));
    }
    let ckpt = Checkpoint::load(&path)?;
    let expected = spec.weights()?.expect("embedding methods have weights");
    let dim = spec.train_config(&cfg.train).dim;
    if ckpt.weights()? != expected || ckpt.dim != dim {
        return Err(Error::Argument(format!(
            "checkpoint {} was trained with (λu={}, λc={}, dim={}) but {} expects (λu={}, λc={}, dim={})",
            path.display(),
            ckpt.lambda_u,
            ckpt.lambda_c,
            ckpt.dim,
            spec.label(),
            expected.lambda_u,
            expected.lambda_c,
            dim
        )));
    }
    Ranker::embedding(spec, ckpt.store()?)
}

/// Evaluates every configured method on the test entries and writes
/// `comparison.csv` and `comparison.json` to the reports directory.
pub fn cmd_evaluate(cfg: &ExperimentConfig, reference: Method) -> Result<Vec<RunReport>> {
    let mut specs = cfg.methods.clone();
    if !specs.iter().any(|m| m.method == reference) {
        specs.insert(0, reference.into());
    }
    let ds = load_dataset(cfg)?;
    let rankers = specs
        .iter()
        .map(|s| Ok((s.label(), load_ranker(cfg, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let reference = specs
        .iter()
        .find(|m| m.method == reference)
        .map(MethodSpec::label)
        .expect("reference method was inserted above");
    let reports = evaluate_all(&ds, &rankers, &reference)?;
    write_reports(&cfg.paths.reports, "comparison", &reports)?;
    Ok(reports)
}

/// Runs a sweep and writes `sweep_<param>.csv` and `.json`.
pub fn cmd_sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<SweepTable> {
    let ds = load_dataset(cfg)?;
    let table = run_sweep(&ds, cfg, spec)?;
    let dir = &cfg.paths.reports;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("sweep_{}", spec.param.name());
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&table).map_err(|e| Error::json("sweep table", e))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(table)
}
