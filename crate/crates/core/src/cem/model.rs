//! Context combination, attention scoring and the listwise likelihood.
//!
//! An item is the mean of its title word vectors, a query the mean of its
//! word vectors, and the click context the mean of the clicked items. The
//! overall context is the convex combination
//!
//! ```text
//! ctx = (1 - λu - λc)·q + λu·u + λc·clicks
//! ```
//!
//! and each candidate `i` gets probability `softmax_i(ctx · item_i)` over the
//! candidate set. Training minimizes `-Σ_{b ∈ purchased} log p(b)`.
//!
//! Backprop, with `g_i = |B|·p_i − [i ∈ B]` the gradient w.r.t. score `i`:
//!
//! ```text
//! ∂/∂item_i = g_i · ctx            ∂/∂ctx = Σ_i g_i · item_i
//! ∂/∂word   = ∂/∂item / |title|    per title occurrence
//! ∂/∂q-word = (1-λu-λc)/|q| · ∂ctx per query occurrence
//! ∂/∂user   = λu · ∂ctx
//! ∂/∂item_c = λc/|C| · ∂ctx        for each clicked item
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Catalog, ItemId, TrainingEntry, UserId};

use super::store::EmbeddingStore;

const WEIGHT_EPS: f64 = 1e-12;

/// `(λu, λc)`: the weights of long-term and short-term context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextWeights {
    pub lambda_u: f64,
    pub lambda_c: f64,
}

impl ContextWeights {
    /// Query only.
    pub const QEM: ContextWeights = ContextWeights {
        lambda_u: 0.0,
        lambda_c: 0.0,
    };

    pub fn new(lambda_u: f64, lambda_c: f64) -> Result<Self> {
        let w = Self { lambda_u, lambda_c };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.lambda_u)
            && (0.0..=1.0).contains(&self.lambda_c)
            && self.lambda_u + self.lambda_c <= 1.0 + WEIGHT_EPS;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "context weights (λu={}, λc={}) must lie in [0,1] with λu+λc <= 1",
                self.lambda_u, self.lambda_c
            )))
        }
    }

    /// `1 - λu - λc`, snapped to zero when rounding leaves a residue.
    pub fn query_weight(&self) -> f64 {
        let w = 1.0 - self.lambda_u - self.lambda_c;
        if w.abs() < WEIGHT_EPS {
            0.0
        } else {
            w
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// A bag of words as `(word id, count / length)`, sorted by word id. Token
/// lists with the same word frequencies map to the same bag, so their
/// embeddings are bitwise equal.
pub(crate) type WordBag = Vec<(usize, f64)>;

pub(crate) fn word_bag(store: &EmbeddingStore, tokens: &[String]) -> WordBag {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut n = 0usize;
    for w in tokens.iter().filter_map(|t| store.word_id(t)) {
        *counts.entry(w).or_default() += 1;
        n += 1;
    }
    counts
        .into_iter()
        .map(|(w, c)| (w, c as f64 / n as f64))
        .collect()
}

/// Mean of the in-vocabulary token vectors; zero when none are known.
pub fn embed_tokens(store: &EmbeddingStore, tokens: &[String]) -> Vec<f64> {
    let mut out = vec![0.0; store.dim()];
    mean_of_words(store, &word_bag(store, tokens), &mut out);
    out
}

pub(crate) fn mean_of_words(store: &EmbeddingStore, bag: &[(usize, f64)], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &(w, share) in bag {
        axpy(share, store.word_row(w), out);
    }
}

fn mean_rows<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut n = 0usize;
    for row in rows {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        n += 1;
    }
    debug_assert!(out.len() == dim);
    if n > 0 {
        out.iter_mut().for_each(|x| *x /= n as f64);
    }
}

/// Centroid of the clicked items' embeddings.
pub fn embed_clicks(
    store: &EmbeddingStore,
    catalog: &Catalog,
    clicked: &BTreeSet<ItemId>,
) -> Result<Vec<f64>> {
    if clicked.is_empty() {
        return Err(Error::Argument("click set is empty".into()));
    }
    let items: Vec<Vec<f64>> = clicked
        .iter()
        .map(|&i| embed_tokens(store, catalog.title(i)))
        .collect();
    let mut out = vec![0.0; store.dim()];
    mean_rows(store.dim(), items.iter().map(Vec::as_slice), &mut out);
    Ok(out)
}

/// The overall context vector. A missing or unknown user and a missing or
/// empty click set contribute the zero vector.
pub fn context_vector(
    store: &EmbeddingStore,
    catalog: &Catalog,
    query: &[String],
    user: Option<UserId>,
    clicked: Option<&BTreeSet<ItemId>>,
    weights: ContextWeights,
) -> Result<Vec<f64>> {
    weights.validate()?;
    let mut ctx = embed_tokens(store, query);
    let wq = weights.query_weight();
    ctx.iter_mut().for_each(|x| *x *= wq);
    if let Some(u) = user.and_then(|u| store.user(u)) {
        axpy(weights.lambda_u, u, &mut ctx);
    }
    if let Some(c) = clicked.filter(|c| !c.is_empty()) {
        let clicks = embed_clicks(store, catalog, c)?;
        axpy(weights.lambda_c, &clicks, &mut ctx);
    }
    Ok(ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item: ItemId,
    pub score: f64,
    pub prob: f64,
}

/// Candidates sorted by descending score; ties keep input order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredList(pub Vec<ScoredItem>);

impl ScoredList {
    pub fn items(&self) -> Vec<ItemId> {
        self.0.iter().map(|s| s.item).collect()
    }

    pub fn prob_of(&self, item: ItemId) -> Option<f64> {
        self.0.iter().find(|s| s.item == item).map(|s| s.prob)
    }
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Stable descending order of `scores` as indices.
pub(crate) fn argsort_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

pub fn score_candidates(
    store: &EmbeddingStore,
    catalog: &Catalog,
    context: &[f64],
    candidates: &[ItemId],
) -> ScoredList {
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&i| dot(context, &embed_tokens(store, catalog.title(i))))
        .collect();
    if scores.is_empty() {
        return ScoredList::default();
    }
    let probs = softmax(&scores);
    ScoredList(
        argsort_desc(&scores)
            .into_iter()
            .map(|k| ScoredItem {
                item: candidates[k],
                score: scores[k],
                prob: probs[k],
            })
            .collect(),
    )
}

fn entry_context(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
) -> Result<Vec<f64>> {
    context_vector(
        store,
        catalog,
        &entry.query,
        entry.user_id,
        Some(&entry.clicked),
        weights,
    )
}

/// Candidates ordered by attention score under `weights`.
pub fn rank_entry(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
) -> Result<Vec<ItemId>> {
    let ctx = entry_context(store, catalog, entry, weights)?;
    Ok(score_candidates(store, catalog, &ctx, &entry.candidates).items())
}

/// Negative log-likelihood of the purchases plus `gamma` times the squared
/// norm of every word and user vector.
pub fn entry_loss(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
    gamma: f64,
) -> Result<f64> {
    entry.validate()?;
    let table = ItemTable::for_entry(store, catalog, entry);
    let encoded = table.encode(store, entry)?;
    let mut ws = Workspace::new(store, &table);
    let nll = ws.forward_backward(store, &table, &encoded, weights, None);
    Ok(nll + gamma * store.squared_norm())
}

/// Sparse gradient of the unregularized NLL, keyed by word and user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub words: BTreeMap<String, Vec<f64>>,
    pub users: BTreeMap<UserId, Vec<f64>>,
}

impl Gradients {
    pub fn squared_norm(&self) -> f64 {
        self.words
            .values()
            .chain(self.users.values())
            .flatten()
            .map(|x| x * x)
            .sum()
    }
}

pub fn entry_gradients(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
) -> Result<Gradients> {
    entry.validate()?;
    weights.validate()?;
    let table = ItemTable::for_entry(store, catalog, entry);
    let encoded = table.encode(store, entry)?;
    let mut ws = Workspace::new(store, &table);
    ws.forward_backward(store, &table, &encoded, weights, Some(1.0));
    ws.flush_items(&table);
    let mut grads = Gradients::default();
    for &w in &ws.touched_words {
        grads
            .words
            .insert(store.vocab()[w].clone(), ws.word_grad_row(w).to_vec());
    }
    for &u in &ws.touched_users {
        grads
            .users
            .insert(store.users()[u], ws.user_grad_row(u).to_vec());
    }
    Ok(grads)
}

/// Items resolved to dense slots with their in-vocabulary title tokens.
#[derive(Debug, Clone)]
pub(crate) struct ItemTable {
    index: HashMap<ItemId, usize>,
    tokens: Vec<WordBag>,
}

impl ItemTable {
    pub fn from_items(
        store: &EmbeddingStore,
        catalog: &Catalog,
        items: impl IntoIterator<Item = ItemId>,
    ) -> Self {
        let mut index = HashMap::new();
        let mut tokens = Vec::new();
        for item in items {
            index.entry(item).or_insert_with(|| {
                tokens.push(word_bag(store, catalog.title(item)));
                tokens.len() - 1
            });
        }
        Self { index, tokens }
    }

    pub fn for_catalog(store: &EmbeddingStore, catalog: &Catalog) -> Self {
        Self::from_items(store, catalog, catalog.products().map(|p| p.id))
    }

    fn for_entry(store: &EmbeddingStore, catalog: &Catalog, entry: &TrainingEntry) -> Self {
        Self::from_items(
            store,
            catalog,
            entry.clicked.iter().chain(&entry.candidates).copied(),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    fn slot(&self, item: ItemId) -> Result<usize> {
        self.index
            .get(&item)
            .copied()
            .ok_or_else(|| Error::Data(format!("item {item} not in catalog")))
    }

    pub fn encode(&self, store: &EmbeddingStore, entry: &TrainingEntry) -> Result<EncodedEntry> {
        let candidates = entry
            .candidates
            .iter()
            .map(|&i| self.slot(i))
            .collect::<Result<Vec<_>>>()?;
        let purchased = entry
            .candidates
            .iter()
            .enumerate()
            .filter(|(_, i)| entry.purchased.contains(i))
            .map(|(k, _)| k)
            .collect();
        Ok(EncodedEntry {
            user: entry.user_id.and_then(|u| store.user_slot(u)),
            query: word_bag(store, &entry.query),
            clicked: entry
                .clicked
                .iter()
                .map(|&i| self.slot(i))
                .collect::<Result<Vec<_>>>()?,
            candidates,
            purchased,
        })
    }
}

/// An entry with words, users and items resolved to table slots.
#[derive(Debug, Clone)]
pub(crate) struct EncodedEntry {
    pub user: Option<usize>,
    pub query: WordBag,
    pub clicked: Vec<usize>,
    pub candidates: Vec<usize>,
    /// Positions within `candidates`.
    pub purchased: Vec<usize>,
}

/// Scratch space: cached item embeddings plus sparse gradient accumulators.
pub(crate) struct Workspace {
    dim: usize,
    item_emb: Vec<f64>,
    item_stamp: Vec<u64>,
    stamp: u64,
    item_grad: Vec<f64>,
    item_touched: Vec<bool>,
    touched_items: Vec<usize>,
    word_grad: Vec<f64>,
    word_touched: Vec<bool>,
    pub touched_words: Vec<usize>,
    user_grad: Vec<f64>,
    user_touched: Vec<bool>,
    pub touched_users: Vec<usize>,
    ctx: Vec<f64>,
    tmp: Vec<f64>,
    dctx: Vec<f64>,
    scores: Vec<f64>,
}

impl Workspace {
    pub fn new(store: &EmbeddingStore, table: &ItemTable) -> Self {
        let dim = store.dim();
        let (nw, nu, ni) = (store.vocab().len(), store.users().len(), table.len());
        Self {
            dim,
            item_emb: vec![0.0; ni * dim],
            item_stamp: vec![0; ni],
            stamp: 1,
            item_grad: vec![0.0; ni * dim],
            item_touched: vec![false; ni],
            touched_items: Vec::new(),
            word_grad: vec![0.0; nw * dim],
            word_touched: vec![false; nw],
            touched_words: Vec::new(),
            user_grad: vec![0.0; nu * dim],
            user_touched: vec![false; nu],
            touched_users: Vec::new(),
            ctx: vec![0.0; dim],
            tmp: vec![0.0; dim],
            dctx: vec![0.0; dim],
            scores: Vec::new(),
        }
    }

    /// Marks cached item embeddings stale after a parameter update.
    pub fn invalidate(&mut self) {
        self.stamp += 1;
    }

    fn ensure_item(&mut self, store: &EmbeddingStore, table: &ItemTable, slot: usize) {
        if self.item_stamp[slot] != self.stamp {
            let d = self.dim;
            mean_of_words(
                store,
                &table.tokens[slot],
                &mut self.item_emb[slot * d..(slot + 1) * d],
            );
            self.item_stamp[slot] = self.stamp;
        }
    }

    fn item(&self, slot: usize) -> &[f64] {
        &self.item_emb[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn word_grad_row(&self, w: usize) -> &[f64] {
        &self.word_grad[w * self.dim..(w + 1) * self.dim]
    }

    pub fn user_grad_row(&self, u: usize) -> &[f64] {
        &self.user_grad[u * self.dim..(u + 1) * self.dim]
    }

    pub fn word_grad_row_mut(&mut self, w: usize) -> &mut [f64] {
        &mut self.word_grad[w * self.dim..(w + 1) * self.dim]
    }

    pub fn user_grad_row_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_grad[u * self.dim..(u + 1) * self.dim]
    }

    fn touch_word(&mut self, w: usize) {
        if !self.word_touched[w] {
            self.word_touched[w] = true;
            self.touched_words.push(w);
        }
    }

    fn touch_item(&mut self, i: usize) {
        if !self.item_touched[i] {
            self.item_touched[i] = true;
            self.touched_items.push(i);
        }
    }

    /// Computes the context vector into `self.ctx`.
    fn context(
        &mut self,
        store: &EmbeddingStore,
        table: &ItemTable,
        entry: &EncodedEntry,
        weights: ContextWeights,
    ) {
        let d = self.dim;
        let mut tmp = std::mem::take(&mut self.tmp);
        mean_of_words(store, &entry.query, &mut tmp);
        let wq = weights.query_weight();
        self.ctx.iter_mut().zip(&tmp).for_each(|(c, q)| *c = wq * q);
        if let Some(u) = entry.user {
            axpy(weights.lambda_u, store.user_row(u), &mut self.ctx);
        }
        if !entry.clicked.is_empty() {
            for &c in &entry.clicked {
                self.ensure_item(store, table, c);
            }
            mean_rows(
                d,
                entry
                    .clicked
                    .iter()
                    .map(|&c| &self.item_emb[c * d..(c + 1) * d]),
                &mut tmp,
            );
            axpy(weights.lambda_c, &tmp, &mut self.ctx);
        }
        self.tmp = tmp;
    }

    /// Candidate scores (dot products) in candidate order.
    pub fn scores(
        &mut self,
        store: &EmbeddingStore,
        table: &ItemTable,
        entry: &EncodedEntry,
        weights: ContextWeights,
    ) -> Vec<f64> {
        self.context(store, table, entry, weights);
        entry
            .candidates
            .iter()
            .map(|&i| {
                self.ensure_item(store, table, i);
                dot(&self.ctx, self.item(i))
            })
            .collect()
    }

    /// Returns the entry's NLL. With `grad_scale = Some(s)`, accumulates
    /// `s` times its gradient into the item, word and user accumulators.
    pub fn forward_backward(
        &mut self,
        store: &EmbeddingStore,
        table: &ItemTable,
        entry: &EncodedEntry,
        weights: ContextWeights,
        grad_scale: Option<f64>,
    ) -> f64 {
        let d = self.dim;
        let mut scores = std::mem::take(&mut self.scores);
        scores.clear();
        self.context(store, table, entry, weights);
        for &i in &entry.candidates {
            self.ensure_item(store, table, i);
            scores.push(dot(&self.ctx, self.item(i)));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let nll: f64 = entry.purchased.iter().map(|&k| log_z - scores[k]).sum();

        if let Some(scale) = grad_scale {
            let n_bought = entry.purchased.len() as f64;
            // g_k = |B| p_k - [k in B]
            let mut g: Vec<f64> = scores
                .iter()
                .map(|s| n_bought * (s - log_z).exp())
                .collect();
            for &k in &entry.purchased {
                g[k] -= 1.0;
            }
            self.dctx.iter_mut().for_each(|x| *x = 0.0);
            for (k, &i) in entry.candidates.iter().enumerate() {
                let gk = g[k] * scale;
                let emb = &self.item_emb[i * d..(i + 1) * d];
                self.dctx
                    .iter_mut()
                    .zip(emb)
                    .for_each(|(dc, e)| *dc += gk * e);
                let row = &mut self.item_grad[i * d..(i + 1) * d];
                row.iter_mut()
                    .zip(&self.ctx)
                    .for_each(|(r, c)| *r += gk * c);
                self.touch_item(i);
            }
            let wq = weights.query_weight();
            if wq != 0.0 {
                for &(w, share) in &entry.query {
                    let coef = wq * share;
                    let row = &mut self.word_grad[w * d..(w + 1) * d];
                    row.iter_mut()
                        .zip(&self.dctx)
                        .for_each(|(r, dc)| *r += coef * dc);
                    self.touch_word(w);
                }
            }
            if let (Some(u), true) = (entry.user, weights.lambda_u != 0.0) {
                let row = &mut self.user_grad[u * d..(u + 1) * d];
                row.iter_mut()
                    .zip(&self.dctx)
                    .for_each(|(r, dc)| *r += weights.lambda_u * dc);
                if !self.user_touched[u] {
                    self.user_touched[u] = true;
                    self.touched_users.push(u);
                }
            }
            if weights.lambda_c != 0.0 && !entry.clicked.is_empty() {
                let coef = weights.lambda_c / entry.clicked.len() as f64;
                for &c in &entry.clicked {
                    let row = &mut self.item_grad[c * d..(c + 1) * d];
                    row.iter_mut()
                        .zip(&self.dctx)
                        .for_each(|(r, dc)| *r += coef * dc);
                    self.touch_item(c);
                }
            }
        }
        self.scores = scores;
        nll
    }

    /// Pushes accumulated item gradients down to their title words.
    pub fn flush_items(&mut self, table: &ItemTable) {
        let d = self.dim;
        let items = std::mem::take(&mut self.touched_items);
        for &i in &items {
            for &(w, share) in &table.tokens[i] {
                let (grad, words) = (&self.item_grad[i * d..(i + 1) * d], &mut self.word_grad);
                words[w * d..(w + 1) * d]
                    .iter_mut()
                    .zip(grad)
                    .for_each(|(r, g)| *r += share * g);
                if !self.word_touched[w] {
                    self.word_touched[w] = true;
                    self.touched_words.push(w);
                }
            }
            self.item_grad[i * d..(i + 1) * d]
                .iter_mut()
                .for_each(|x| *x = 0.0);
            self.item_touched[i] = false;
        }
        self.touched_items = items;
        self.touched_items.clear();
    }

    /// Zeroes the word and user accumulators.
    pub fn clear_grads(&mut self) {
        let d = self.dim;
        for &w in &self.touched_words {
            self.word_grad[w * d..(w + 1) * d]
                .iter_mut()
                .for_each(|x| *x = 0.0);
            self.word_touched[w] = false;
        }
        for &u in &self.touched_users {
            self.user_grad[u * d..(u + 1) * d]
                .iter_mut()
                .for_each(|x| *x = 0.0);
            self.user_touched[u] = false;
        }
        self.touched_words.clear();
        self.touched_users.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{EntryId, Product};

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn store2(words: &[(&str, [f64; 2])]) -> EmbeddingStore {
        let mut store =
            EmbeddingStore::zeros(2, words.iter().map(|(w, _)| w.to_string()), [UserId(1)]);
        for (w, v) in words {
            store.set_word(w, v).unwrap();
        }
        store
    }

    fn catalog(items: &[(u64, &[&str])]) -> Catalog {
        Catalog::new(items.iter().map(|(id, t)| Product {
            id: ItemId(*id),
            title: toks(t),
        }))
    }

    #[test]
    fn equal_word_frequencies_embed_bitwise_equal() {
        let store = store2(&[("a", [0.1, 0.7]), ("b", [0.3, -0.2]), ("c", [1e-3, 0.9])]);
        let base = embed_tokens(&store, &toks(&["a", "b", "c"]));
        for other in [
            &["c", "a", "b"][..],
            &["b", "c", "a", "a", "b", "c"],
            &["c", "zz", "b", "a"],
        ] {
            assert_eq!(embed_tokens(&store, &toks(other)), base, "{other:?}");
        }
    }

    fn entry(
        query: &[&str],
        clicked: &[u64],
        candidates: &[u64],
        purchased: &[u64],
    ) -> TrainingEntry {
        TrainingEntry {
            id: EntryId {
                session_id: 0,
                t: 1,
            },
            user_id: Some(UserId(1)),
            query: toks(query),
            week: 1,
            t: 1,
            clicked: clicked.iter().map(|&i| ItemId(i)).collect(),
            candidates: candidates.iter().map(|&i| ItemId(i)).collect(),
            purchased: purchased.iter().map(|&i| ItemId(i)).collect(),
        }
    }

    #[test]
    fn embed_single_token() {
        let store = store2(&[("w", [0.3, -1.0])]);
        assert_eq!(embed_tokens(&store, &toks(&["w"])), vec![0.3, -1.0]);
    }

    #[test]
    fn embed_mean() {
        let store = store2(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0])]);
        assert_eq!(embed_tokens(&store, &toks(&["a", "b"])), vec![0.5, 0.5]);
        assert_eq!(
            embed_tokens(&store, &toks(&["a", "zzz", "b"])),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn embed_all_oov_is_zero() {
        let store = store2(&[("a", [1.0, 0.0])]);
        assert_eq!(embed_tokens(&store, &toks(&["x", "y"])), vec![0.0, 0.0]);
        assert_eq!(embed_tokens(&store, &[]), vec![0.0, 0.0]);
    }

    #[test]
    fn click_centroid() {
        let store = store2(&[("a", [2.0, 0.0]), ("b", [0.0, 2.0])]);
        let cat = catalog(&[(1, &["a"]), (2, &["b"])]);
        assert_eq!(
            embed_clicks(&store, &cat, &[ItemId(1)].into()).unwrap(),
            vec![2.0, 0.0]
        );
        assert_eq!(
            embed_clicks(&store, &cat, &[ItemId(2), ItemId(1)].into()).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(embed_clicks(&store, &cat, &BTreeSet::new()).is_err());
    }

    #[test]
    fn context_combinations() {
        let mut store = store2(&[("q", [1.0, 1.0]), ("c", [0.0, 2.0]), ("x", [1.0, 0.0])]);
        store.set_user(UserId(1), &[2.0, 0.0]).unwrap();
        let cat = catalog(&[(1, &["c"])]);
        let clicked: BTreeSet<ItemId> = [ItemId(1)].into();
        let q = toks(&["q"]);

        let ctx = context_vector(
            &store,
            &cat,
            &q,
            Some(UserId(1)),
            Some(&clicked),
            ContextWeights::QEM,
        )
        .unwrap();
        assert_eq!(ctx, vec![1.0, 1.0]);

        let w = ContextWeights::new(0.2, 0.3).unwrap();
        let ctx = context_vector(&store, &cat, &q, Some(UserId(1)), Some(&clicked), w).unwrap();
        assert!(
            (ctx[0] - 0.9).abs() < 1e-12 && (ctx[1] - 1.1).abs() < 1e-12,
            "{ctx:?}"
        );

        // E(q) = [1,0], E(C) = [0,1] at λc = 0.5
        let store = store2(&[("q", [1.0, 0.0]), ("c", [0.0, 1.0])]);
        let w = ContextWeights::new(0.0, 0.5).unwrap();
        let ctx = context_vector(&store, &cat, &q, None, Some(&clicked), w).unwrap();
        assert_eq!(ctx, vec![0.5, 0.5]);
    }

    #[test]
    fn context_rejects_bad_weights() {
        assert!(ContextWeights::new(0.6, 0.6).is_err());
        assert!(ContextWeights::new(-0.1, 0.0).is_err());
        let store = store2(&[("q", [1.0, 0.0])]);
        let bad = ContextWeights {
            lambda_u: 0.7,
            lambda_c: 0.7,
        };
        assert!(context_vector(&store, &Catalog::default(), &[], None, None, bad).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.3, 0.3]), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[5.0]), vec![1.0]);
        let p = softmax(&[1000.0, 999.0]);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn scored_list_orders_and_breaks_ties_by_input() {
        let store = store2(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0])]);
        let cat = catalog(&[(1, &["b"]), (2, &["a"]), (3, &["b"])]);
        let list = score_candidates(
            &store,
            &cat,
            &[0.0, 1.0],
            &[ItemId(1), ItemId(2), ItemId(3)],
        );
        assert_eq!(list.items(), vec![ItemId(1), ItemId(3), ItemId(2)]);
        let total: f64 = list.0.iter().map(|s| s.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let store = store2(&[("a", [0.0, 0.0])]);
        let cat = catalog(&[
            (1, &["a"]),
            (2, &["a"]),
            (3, &["a"]),
            (4, &["a"]),
            (9, &["a"]),
        ]);
        let w = ContextWeights::new(0.0, 0.5).unwrap();
        let l = entry_loss(&store, &cat, &entry(&["a"], &[9], &[1, 2], &[1]), w, 0.0).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = entry_loss(&store, &cat, &entry(&["a"], &[9], &[1], &[1]), w, 0.0).unwrap();
        assert_eq!(l, 0.0);
        let l = entry_loss(
            &store,
            &cat,
            &entry(&["a"], &[9], &[1, 2, 3, 4], &[1, 3]),
            w,
            0.0,
        )
        .unwrap();
        assert!((l - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!(entry_loss(&store, &cat, &entry(&["a"], &[9], &[1, 2], &[]), w, 0.0).is_err());
        assert!(entry_loss(&store, &cat, &entry(&["a"], &[9], &[1, 2], &[3]), w, 0.0).is_err());
    }

    #[test]
    fn loss_adds_l2() {
        let store = store2(&[("a", [1.0, 2.0])]);
        let cat = catalog(&[(1, &["a"]), (9, &["a"])]);
        let l = entry_loss(
            &store,
            &cat,
            &entry(&["a"], &[9], &[1], &[1]),
            ContextWeights::QEM,
            0.1,
        )
        .unwrap();
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_user_gradient_without_lambda_u() {
        let mut store = store2(&[("a", [0.1, 0.2]), ("b", [0.3, -0.1]), ("q", [0.5, 0.5])]);
        store.set_user(UserId(1), &[0.4, 0.4]).unwrap();
        let cat = catalog(&[(1, &["a"]), (2, &["b"]), (9, &["a", "b"])]);
        let e = entry(&["q"], &[9], &[1, 2], &[1]);
        let g = entry_gradients(&store, &cat, &e, ContextWeights::new(0.0, 0.5).unwrap()).unwrap();
        assert!(g.users.is_empty());
        let g = entry_gradients(&store, &cat, &e, ContextWeights::new(0.3, 0.5).unwrap()).unwrap();
        assert!(g.users.contains_key(&UserId(1)));
        // λc = 1 leaves the query word out.
        let g = entry_gradients(&store, &cat, &e, ContextWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert!(!g.words.contains_key("q"));
    }

    #[test]
    fn sole_candidate_has_zero_gradient() {
        let store = store2(&[("a", [0.1, 0.2]), ("q", [0.5, 0.5])]);
        let cat = catalog(&[(1, &["a"]), (9, &["a"])]);
        let g = entry_gradients(
            &store,
            &cat,
            &entry(&["q"], &[9], &[1], &[1]),
            ContextWeights::new(0.2, 0.3).unwrap(),
        )
        .unwrap();
        assert_eq!(g.squared_norm(), 0.0);
    }

    #[test]
    fn clicked_title_match_ranks_first() {
        // Candidate 2 shares every title token with the clicked item.
        let store = store2(&[
            ("red", [1.0, 0.0]),
            ("car", [0.8, 0.6]),
            ("blue", [0.0, 1.0]),
            ("hat", [-0.6, 0.8]),
        ]);
        let cat = catalog(&[
            (9, &["red", "car"]),
            (1, &["blue", "hat"]),
            (2, &["red", "car"]),
            (3, &["blue", "car"]),
        ]);
        // clicks = [0.9, 0.3]; scores: 1 -> 0.0, 2 -> 0.9, 3 -> 0.6
        let e = entry(&["hat"], &[9], &[1, 2, 3], &[2]);
        let order = rank_entry(&store, &cat, &e, ContextWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(order, vec![ItemId(2), ItemId(3), ItemId(1)]);
    }

    #[test]
    fn encoded_scores_match_public_path() {
        let store = store2(&[("a", [0.1, 0.7]), ("b", [-0.3, 0.2]), ("q", [0.5, -0.5])]);
        let cat = catalog(&[
            (1, &["a", "b"]),
            (2, &["b"]),
            (3, &["a", "a", "b"]),
            (9, &["a"]),
        ]);
        let e = entry(&["q", "a"], &[9], &[1, 2, 3], &[2]);
        let w = ContextWeights::new(0.1, 0.4).unwrap();
        let ctx = entry_context(&store, &cat, &e, w).unwrap();
        let public = score_candidates(&store, &cat, &ctx, &e.candidates);
        let table = ItemTable::for_catalog(&store, &cat);
        let enc = table.encode(&store, &e).unwrap();
        let mut ws = Workspace::new(&store, &table);
        let scores = ws.scores(&store, &table, &enc, w);
        for s in &public.0 {
            let k = e.candidates.iter().position(|&c| c == s.item).unwrap();
            assert_eq!(scores[k], s.score);
        }
    }
}
