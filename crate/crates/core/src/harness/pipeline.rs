use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::cem::{self, ContextWeights, EmbeddingStore, EpochStats, TrainOutcome};
use crate::error::{Error, Result};
use crate::lexical::{
    pop_rank, ql_rank, rand_rank, rm3_rank, LanguageModelIndex, PurchaseHistory, Rm3Params,
};
use crate::metrics::{aggregate, EntryResult, Metric, RunReport};
use crate::session::{
    entry_at, filter_sessions, split_subsessions, temporal_split, Catalog, ItemId, QuerySession,
    Split, TrainingEntry,
};
use crate::synth::{generate_corpus, generate_sessions, GenConfig};

use super::config::{ExperimentConfig, Method, MethodSpec, SweepSpec};

/// A split session log with its derived entries and lexical indexes.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Catalog with popularity counted on the training split.
    pub catalog: Catalog,
    pub split: Split,
    pub train_entries: Vec<TrainingEntry>,
    pub valid_entries: Vec<TrainingEntry>,
    /// Entries at `t_eval`; every method is scored on exactly these.
    pub test_entries: Vec<TrainingEntry>,
    pub index: LanguageModelIndex,
    pub history: PurchaseHistory,
}

fn entries_at(sessions: &[QuerySession], t: usize, k: usize) -> Vec<TrainingEntry> {
    sessions
        .iter()
        .filter(|s| t < s.num_pages())
        .filter_map(|s| entry_at(s, t, k).ok().flatten())
        .collect()
}

impl Dataset {
    pub fn build(
        mut catalog: Catalog,
        log: &[QuerySession],
        cfg: &ExperimentConfig,
    ) -> Result<Self> {
        catalog.check_sessions(log)?;
        let usable = filter_sessions(log);
        let split = temporal_split(&usable, cfg.train_frac, cfg.valid_frac)?;
        catalog.set_popularity_from(&split.train);
        let train_entries: Vec<TrainingEntry> = split
            .train
            .iter()
            .flat_map(|s| split_subsessions(s, cfg.k))
            .collect();
        let valid_entries = entries_at(&split.valid, cfg.t_eval, cfg.k);
        let test_entries = entries_at(&split.test, cfg.t_eval, cfg.k);
        if test_entries.is_empty() {
            return Err(Error::Data(format!(
                "no test entries at t={} in {} test sessions",
                cfg.t_eval,
                split.test.len()
            )));
        }
        Ok(Self {
            index: LanguageModelIndex::build(&catalog),
            history: PurchaseHistory::build(&split.train),
            catalog,
            split,
            train_entries,
            valid_entries,
            test_entries,
        })
    }

    /// Generates a corpus in memory with `config.generator` and `seed`.
    pub fn synthetic(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let gen = GenConfig {
            seed,
            ..cfg.generator.clone()
        };
        let (catalog, _, world) = generate_corpus(&gen)?;
        let sessions = generate_sessions(&gen, &catalog, &world)?;
        Self::build(catalog, &sessions, cfg)
    }
}

/// Where an RM3 variant takes its feedback documents from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// Titles of the user's purchases in earlier weeks.
    LongTerm,
    /// Titles of the items clicked so far in the session.
    ShortTerm,
}

/// A ready-to-apply re-ranking method.
#[derive(Debug, Clone)]
pub enum Ranker {
    /// Keeps the candidate order of the initial ranker.
    Prod,
    Rand {
        seed: u64,
    },
    Pop,
    Ql {
        mu: f64,
    },
    Rm3 {
        feedback: Feedback,
        params: Rm3Params,
    },
    Embedding {
        store: EmbeddingStore,
        weights: ContextWeights,
    },
}

impl Ranker {
    /// The ranker for a non-embedding method.
    pub fn lexical(spec: &MethodSpec, cfg: &ExperimentConfig) -> Result<Self> {
        let feedback = match spec.method {
            Method::ProdProxy => return Ok(Ranker::Prod),
            Method::Rand => {
                return Ok(Ranker::Rand {
                    seed: cfg.rand_seed,
                })
            }
            Method::Pop => return Ok(Ranker::Pop),
            Method::Ql => return Ok(Ranker::Ql { mu: spec.mu() }),
            Method::Lcrm3 => Feedback::LongTerm,
            Method::Scrm3 => Feedback::ShortTerm,
            m => {
                return Err(Error::Argument(format!("{m} needs trained embeddings")));
            }
        };
        let params = spec.rm3_params()?.expect("RM3 methods carry RM3 params");
        Ok(Ranker::Rm3 { feedback, params })
    }

    pub fn embedding(spec: &MethodSpec, store: EmbeddingStore) -> Result<Self> {
        let weights = spec.weights()?.ok_or_else(|| {
            Error::Argument(format!("{} is not an embedding method", spec.method))
        })?;
        Ok(Ranker::Embedding { store, weights })
    }

    pub fn rank(&self, ds: &Dataset, entry: &TrainingEntry) -> Result<Vec<ItemId>> {
        let cands = &entry.candidates;
        match self {
            Ranker::Prod => Ok(cands.clone()),
            Ranker::Rand { seed } => Ok(rand_rank(cands, *seed, entry.id.key())),
            Ranker::Pop => Ok(pop_rank(&ds.catalog, cands)),
            Ranker::Ql { mu } => ql_rank(&ds.index, &entry.query, cands, *mu),
            Ranker::Rm3 { feedback, params } => {
                let docs = match feedback {
                    Feedback::LongTerm => {
                        ds.history
                            .feedback_docs(&ds.catalog, entry.user_id, entry.week)
                    }
                    Feedback::ShortTerm => entry
                        .clicked
                        .iter()
                        .map(|&i| ds.catalog.title(i).to_vec())
                        .collect(),
                };
                rm3_rank(&ds.index, &entry.query, &docs, params, cands)
            }
            Ranker::Embedding { store, weights } => {
                cem::rank_entry(store, &ds.catalog, entry, *weights)
            }
        }
    }
}

/// Trains an embedding method on the training entries, selecting the epoch
/// by validation MRR.
pub fn train_method(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    spec: &MethodSpec,
) -> Result<TrainOutcome> {
    let weights = spec
        .weights()?
        .ok_or_else(|| Error::Argument(format!("{} is not an embedding method", spec.method)))?;
    if ds.train_entries.is_empty() {
        return Err(Error::Data("no training entries".into()));
    }
    cem::train(
        &ds.train_entries,
        &ds.valid_entries,
        &ds.catalog,
        &spec.train_config(&cfg.train),
        weights,
    )
}

fn check_permutation(label: &str, entry: &TrainingEntry, ranked: &[ItemId]) -> Result<()> {
    let a: BTreeSet<_> = ranked.iter().collect();
    let b: BTreeSet<_> = entry.candidates.iter().collect();
    if ranked.len() != entry.candidates.len() || a != b {
        return Err(Error::Data(format!(
            "{label} did not return a permutation of the candidates of {}",
            entry.id
        )));
    }
    Ok(())
}

/// Scores one ranker on every test entry.
pub fn evaluate_ranker(ds: &Dataset, label: &str, ranker: &Ranker) -> Result<Vec<EntryResult>> {
    ds.test_entries
        .iter()
        .map(|entry| {
            let ranked = ranker.rank(ds, entry)?;
            check_permutation(label, entry, &ranked)?;
            Ok(EntryResult::evaluate(entry.id, &ranked, &entry.purchased))
        })
        .collect()
}

/// Scores every ranker on the same test entries and summarizes each
/// against `reference`.
pub fn evaluate_all(
    ds: &Dataset,
    rankers: &[(String, Ranker)],
    reference: &str,
) -> Result<Vec<RunReport>> {
    for e in &ds.test_entries {
        let viewed = e.clicked.iter().collect::<HashSet<_>>();
        if e.candidates.iter().any(|i| viewed.contains(i)) {
            return Err(Error::Data(format!(
                "entry {} ranks an already clicked item",
                e.id
            )));
        }
    }
    let results = rankers
        .iter()
        .map(|(label, r)| Ok((label.clone(), evaluate_ranker(ds, label, r)?)))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&results, reference)
}

/// Reports plus the training history of each embedding method.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<RunReport>,
    pub histories: BTreeMap<String, Vec<EpochStats>>,
}

impl Comparison {
    pub fn report(&self, label: &str) -> Option<&RunReport> {
        self.reports.iter().find(|r| r.method == label)
    }

    pub fn mean(&self, label: &str, metric: Metric) -> Option<f64> {
        self.report(label).map(|r| r.mean(metric))
    }
}

/// Trains and evaluates the given methods in memory.
pub fn run_comparison(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    methods: &[MethodSpec],
    reference: Method,
) -> Result<Comparison> {
    let mut methods = methods.to_vec();
    if !methods.iter().any(|m| m.method == reference) {
        methods.insert(0, reference.into());
    }
    let mut rankers = Vec::new();
    let mut histories = BTreeMap::new();
    for spec in &methods {
        let ranker = if spec.method.is_embedding() {
            let outcome = train_method(ds, cfg, spec)?;
            histories.insert(spec.label(), outcome.history);
            Ranker::embedding(spec, outcome.store)?
        } else {
            Ranker::lexical(spec, cfg)?
        };
        rankers.push((spec.label(), ranker));
    }
    let reference = methods
        .iter()
        .find(|m| m.method == reference)
        .map(MethodSpec::label)
        .expect("reference method was inserted above");
    Ok(Comparison {
        reports: evaluate_all(ds, &rankers, &reference)?,
        histories,
    })
}

/// One grid point of a sweep: metric means per swept method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// `(method, metric name) -> mean`.
    pub means: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: String,
    pub methods: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// The series of one method and metric across the grid.
    pub fn series(&self, method: &str, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.means[method][metric.name()])
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Wide CSV: one row per grid value, one column per method and metric.
    pub fn to_csv(&self) -> String {
        let mut out = self.param.clone();
        for m in &self.methods {
            for metric in Metric::ALL {
                out.push_str(&format!(",{m} {}", metric.name()));
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{}", row.value));
            for m in &self.methods {
                for metric in Metric::ALL {
                    out.push_str(&format!(",{:.6}", row.means[m][metric.name()]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Trains and evaluates each swept method at every grid value.
pub fn run_sweep(ds: &Dataset, cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let bases: Vec<MethodSpec> = spec
        .param
        .methods()
        .iter()
        .map(|&m| cfg.method_spec(m))
        .collect();
    let mut rows = Vec::with_capacity(spec.grid.len());
    for &value in &spec.grid {
        let mut means = BTreeMap::new();
        for base in &bases {
            let at = spec.spec_at(base, value);
            let ranker = if at.method.is_embedding() {
                Ranker::embedding(&at, train_method(ds, cfg, &at)?.store)?
            } else {
                Ranker::lexical(&at, cfg)?
            };
            let results = evaluate_ranker(ds, &at.label(), &ranker)?;
            let per_metric = Metric::ALL
                .into_iter()
                .map(|metric| {
                    let col: Vec<f64> = results.iter().map(|r| r.get(metric)).collect();
                    (metric.name().to_string(), crate::metrics::mean(&col))
                })
                .collect();
            means.insert(base.label(), per_metric);
        }
        rows.push(SweepRow { value, means });
    }
    Ok(SweepTable {
        param: spec.param.name().to_string(),
        methods: bases.iter().map(MethodSpec::label).collect(),
        rows,
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `NaN` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // ranks y = [1.5, 1.5, 3]: r = 1.5 / sqrt(2 * 1.5)
        let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 9.0]);
        assert!((r - 1.5 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[4.0, 4.0]).is_nan());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }
}
