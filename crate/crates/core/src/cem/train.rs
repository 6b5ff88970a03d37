//! Mini-batch Adam training with global-norm clipping and best-epoch
//! selection on validation MRR.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::reciprocal_rank;
use crate::rng::PortableRng;
use crate::session::{Catalog, TrainingEntry};

use super::model::{argsort_desc, ContextWeights, EncodedEntry, ItemTable, Workspace};
use super::store::EmbeddingStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_gamma: f64,
    /// Global gradient-norm cap; `f64::INFINITY` disables clipping.
    #[serde(with = "finite_or_inf")]
    pub grad_clip_norm: f64,
    pub max_subsessions_per_session: usize,
    pub max_clicks_per_entry: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            epochs: 20,
            batch_size: 256,
            learning_rate: 0.005,
            l2_gamma: 0.0,
            grad_clip_norm: 5.0,
            max_subsessions_per_session: 3,
            max_clicks_per_entry: 5,
            seed: 0,
        }
    }
}

/// JSON has no infinity; disabled clipping is written as `null`.
mod finite_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl TrainConfig {
    /// The learning-rate grid searched during tuning.
    pub const LEARNING_RATES: [f64; 5] = [0.01, 0.005, 0.001, 0.0005, 0.0001];

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0
            || self.epochs == 0
            || self.batch_size == 0
            || self.max_subsessions_per_session == 0
            || self.max_clicks_per_entry == 0
        {
            return Err(Error::Argument("training counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_gamma >= 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(Error::Argument(
                "learning_rate and grad_clip_norm must be positive, l2_gamma non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_nll: f64,
    pub valid_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation MRR.
    pub store: EmbeddingStore,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
}

/// Scales the rows in place so their joint Euclidean norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_by_global_norm(rows: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = rows
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        rows.iter_mut()
            .flat_map(|r| r.iter_mut())
            .for_each(|x| *x *= scale);
    }
    norm
}

/// Adam moments for the word and user tables. Only rows with a gradient in
/// the current step are updated; bias correction uses the global step.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    word_m: Vec<f64>,
    word_v: Vec<f64>,
    user_m: Vec<f64>,
    user_v: Vec<f64>,
}

impl Adam {
    fn new(store: &EmbeddingStore, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            word_m: vec![0.0; store.word_vecs.len()],
            word_v: vec![0.0; store.word_vecs.len()],
            user_m: vec![0.0; store.user_vecs.len()],
            user_v: vec![0.0; store.user_vecs.len()],
        }
    }

    fn apply(&mut self, store: &mut EmbeddingStore, ws: &Workspace) {
        self.step += 1;
        let hp = AdamStep {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            bc1: 1.0 - self.beta1.powi(self.step),
            bc2: 1.0 - self.beta2.powi(self.step),
        };
        let d = store.dim();
        for &w in &ws.touched_words {
            let r = w * d..(w + 1) * d;
            hp.update(
                &mut store.word_vecs[r.clone()],
                ws.word_grad_row(w),
                &mut self.word_m[r.clone()],
                &mut self.word_v[r],
            );
        }
        for &u in &ws.touched_users {
            let r = u * d..(u + 1) * d;
            hp.update(
                &mut store.user_vecs[r.clone()],
                ws.user_grad_row(u),
                &mut self.user_m[r.clone()],
                &mut self.user_v[r],
            );
        }
    }
}

struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl AdamStep {
    fn update(&self, params: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
        for k in 0..params.len() {
            m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
            v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = m[k] / self.bc1;
            let v_hat = v[k] / self.bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Vocabulary covering every catalog title word and every training query
/// word.
pub fn training_vocab(entries: &[TrainingEntry], catalog: &Catalog) -> BTreeSet<String> {
    catalog
        .products()
        .flat_map(|p| p.title.iter().cloned())
        .chain(entries.iter().flat_map(|e| e.query.iter().cloned()))
        .collect()
}

fn encode_all(
    table: &ItemTable,
    store: &EmbeddingStore,
    entries: &[TrainingEntry],
) -> Result<Vec<EncodedEntry>> {
    entries.iter().map(|e| table.encode(store, e)).collect()
}

/// Mean reciprocal rank of `entries` under the current parameters.
fn validation_mrr(
    store: &EmbeddingStore,
    table: &ItemTable,
    ws: &mut Workspace,
    entries: &[EncodedEntry],
    weights: ContextWeights,
) -> f64 {
    if entries.is_empty() {
        return 0.0;
    }
    let total: f64 = entries
        .iter()
        .map(|e| {
            let scores = ws.scores(store, table, e, weights);
            let relevant: BTreeSet<usize> = e.purchased.iter().copied().collect();
            reciprocal_rank(&argsort_desc(&scores), &relevant)
        })
        .sum();
    total / entries.len() as f64
}

/// Trains embeddings for the given context weights.
///
/// Each epoch keeps at most `max_subsessions_per_session` entries per
/// session and at most `max_clicks_per_entry` clicks per entry (resampled
/// every epoch), shuffles, and takes one Adam step per mini-batch on the
/// batch-mean NLL plus `2γθ` for every touched row, clipped to
/// `grad_clip_norm`. The snapshot with the best validation MRR is returned;
/// ties keep the earlier epoch. Training is serial, so a fixed seed gives
/// bit-identical parameters.
pub fn train(
    entries: &[TrainingEntry],
    valid_entries: &[TrainingEntry],
    catalog: &Catalog,
    cfg: &TrainConfig,
    weights: ContextWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    if entries.is_empty() {
        return Err(Error::Argument("no training entries".into()));
    }
    for e in entries {
        e.validate()?;
    }
    let vocab = training_vocab(entries, catalog);
    let users = entries.iter().filter_map(|e| e.user_id);
    let store = EmbeddingStore::initialized(cfg.dim, vocab, users, cfg.seed);
    train_from(store, entries, valid_entries, catalog, cfg, weights)
}

/// Like [`train`], continuing from the given parameters.
pub fn train_from(
    mut store: EmbeddingStore,
    entries: &[TrainingEntry],
    valid_entries: &[TrainingEntry],
    catalog: &Catalog,
    cfg: &TrainConfig,
    weights: ContextWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if entries.is_empty() {
        return Err(Error::Argument("no training entries".into()));
    }
    let table = ItemTable::for_catalog(&store, catalog);
    let encoded = encode_all(&table, &store, entries)?;
    let valid = encode_all(&table, &store, valid_entries)?;

    let mut by_session: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, e) in entries.iter().enumerate() {
        by_session.entry(e.id.session_id).or_default().push(k);
    }

    let mut ws = Workspace::new(&store, &table);
    let mut adam = Adam::new(&store, cfg.learning_rate);
    let mut rng = PortableRng::substream(cfg.seed, 0x7261_696e);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, EmbeddingStore)> = None;

    for epoch in 1..=cfg.epochs {
        let mut picked: Vec<EncodedEntry> = Vec::new();
        for group in by_session.values() {
            let chosen: Vec<usize> = if group.len() > cfg.max_subsessions_per_session {
                let mut idx = rng.sample_indices(group.len(), cfg.max_subsessions_per_session);
                idx.sort_unstable();
                idx.into_iter().map(|i| group[i]).collect()
            } else {
                group.clone()
            };
            for k in chosen {
                let mut e = encoded[k].clone();
                if e.clicked.len() > cfg.max_clicks_per_entry {
                    let mut idx = rng.sample_indices(e.clicked.len(), cfg.max_clicks_per_entry);
                    idx.sort_unstable();
                    e.clicked = idx.into_iter().map(|i| e.clicked[i]).collect();
                }
                picked.push(e);
            }
        }
        rng.shuffle(&mut picked);

        let mut nll_sum = 0.0;
        for batch in picked.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for e in batch {
                nll_sum += ws.forward_backward(&store, &table, e, weights, Some(scale));
            }
            ws.flush_items(&table);
            apply_l2(&store, &mut ws, cfg.l2_gamma);
            clip_workspace(&mut ws, cfg.grad_clip_norm);
            adam.apply(&mut store, &ws);
            ws.clear_grads();
            ws.invalidate();
        }
        let mean_nll = nll_sum / picked.len() as f64;
        let valid_mrr = validation_mrr(&store, &table, &mut ws, &valid, weights);
        history.push(EpochStats {
            epoch,
            mean_nll,
            valid_mrr,
        });
        let improved = match &best {
            None => true,
            Some((_, mrr, _)) => valid_mrr > *mrr || (valid.is_empty() && epoch == cfg.epochs),
        };
        if improved {
            best = Some((epoch, valid_mrr, store.clone()));
        }
    }

    let (best_epoch, best_valid_mrr, store) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        store,
        history,
        best_epoch,
        best_valid_mrr,
    })
}

fn apply_l2(store: &EmbeddingStore, ws: &mut Workspace, gamma: f64) {
    if gamma == 0.0 {
        return;
    }
    for w in ws.touched_words.clone() {
        let theta = store.word_row(w);
        ws.word_grad_row_mut(w)
            .iter_mut()
            .zip(theta)
            .for_each(|(g, t)| *g += 2.0 * gamma * t);
    }
    for u in ws.touched_users.clone() {
        let theta = store.user_row(u);
        ws.user_grad_row_mut(u)
            .iter_mut()
            .zip(theta)
            .for_each(|(g, t)| *g += 2.0 * gamma * t);
    }
}

fn clip_workspace(ws: &mut Workspace, max_norm: f64) {
    if !max_norm.is_finite() {
        return;
    }
    let words = ws.touched_words.clone();
    let users = ws.touched_users.clone();
    let norm = words
        .iter()
        .map(|&w| ws.word_grad_row(w))
        .chain(users.iter().map(|&u| ws.user_grad_row(u)))
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for &w in &words {
            ws.word_grad_row_mut(w).iter_mut().for_each(|x| *x *= scale);
        }
        for &u in &users {
            ws.user_grad_row_mut(u).iter_mut().for_each(|x| *x *= scale);
        }
    }
}
