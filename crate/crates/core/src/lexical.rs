//! Word-based and trivial re-ranking baselines: random shuffle, popularity,
//! Dirichlet-smoothed query likelihood, and RM3 relevance feedback.
//!
//! Query likelihood and RM3 both sum per distinct term in sorted term order.
//! RM3 ranks by `|q| · Σ_w [(1−α)·P_mle(w|q) + α·P_rm1(w)] · log P(w|d)`, whose
//! weights reduce to the integer term counts at `α = 0`; the per-term
//! products are then bitwise identical to query likelihood's, so the two
//! orderings coincide exactly rather than only up to rounding.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::session::{Catalog, ItemId, QuerySession, UserId};

pub const DEFAULT_MU: f64 = 200.0;

/// Title language models over the catalog.
#[derive(Debug, Clone, Default)]
pub struct LanguageModelIndex {
    docs: HashMap<ItemId, DocStats>,
    collection: HashMap<String, u64>,
    collection_len: u64,
}

#[derive(Debug, Clone, Default)]
struct DocStats {
    tf: HashMap<String, u32>,
    len: u32,
}

impl DocStats {
    fn of(tokens: &[String]) -> Self {
        let mut tf = HashMap::new();
        for t in tokens {
            *tf.entry(t.clone()).or_insert(0) += 1;
        }
        Self {
            tf,
            len: tokens.len() as u32,
        }
    }

    fn tf(&self, w: &str) -> u32 {
        self.tf.get(w).copied().unwrap_or(0)
    }
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, u32> {
    let mut out = BTreeMap::new();
    for t in tokens {
        *out.entry(t.as_str()).or_insert(0) += 1;
    }
    out
}

impl LanguageModelIndex {
    pub fn build(catalog: &Catalog) -> Self {
        let mut index = Self::default();
        for p in catalog.products() {
            for t in &p.title {
                *index.collection.entry(t.clone()).or_insert(0) += 1;
            }
            index.collection_len += p.title.len() as u64;
            index.docs.insert(p.id, DocStats::of(&p.title));
        }
        index
    }

    pub fn collection_len(&self) -> u64 {
        self.collection_len
    }

    pub fn collection_count(&self, w: &str) -> u64 {
        self.collection.get(w).copied().unwrap_or(0)
    }

    /// Probability floor for terms absent from the collection.
    pub fn floor_prob(&self) -> f64 {
        1.0 / (10.0 * self.collection_len.max(1) as f64)
    }

    /// `P(w | collection)`, floored for unseen terms.
    pub fn collection_prob(&self, w: &str) -> f64 {
        match self.collection_count(w) {
            0 => self.floor_prob(),
            c => c as f64 / self.collection_len as f64,
        }
    }

    fn dirichlet(&self, doc: &DocStats, w: &str, mu: f64) -> f64 {
        (doc.tf(w) as f64 + mu * self.collection_prob(w)) / (doc.len as f64 + mu)
    }

    fn doc(&self, item: ItemId) -> DocStats {
        self.docs.get(&item).cloned().unwrap_or_default()
    }

    fn log_prob_sum(&self, doc: &DocStats, weights: &BTreeMap<&str, f64>, mu: f64) -> f64 {
        weights
            .iter()
            .map(|(w, c)| c * self.dirichlet(doc, w, mu).ln())
            .sum()
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("mu must be positive, got {mu}")))
    }
}

fn ql_for_doc(index: &LanguageModelIndex, query: &[String], doc: &DocStats, mu: f64) -> f64 {
    let counts: BTreeMap<&str, f64> = term_counts(query)
        .into_iter()
        .map(|(w, c)| (w, c as f64))
        .collect();
    index.log_prob_sum(doc, &counts, mu)
}

/// `Σ_{w∈q} log[(tf(w,d) + μ·P(w|C)) / (|d| + μ)]`.
pub fn ql_score(
    index: &LanguageModelIndex,
    query: &[String],
    item: ItemId,
    mu: f64,
) -> Result<f64> {
    check_mu(mu)?;
    Ok(ql_for_doc(index, query, &index.doc(item), mu))
}

/// A term distribution, sorted by term.
pub type TermDistribution = BTreeMap<String, f64>;

/// RM1: `P(w|R) ∝ Σ_d P(w|d)·P(q|d)` over the feedback documents, with a
/// uniform document prior, truncated to the `n_terms` heaviest terms (ties
/// broken by term) and renormalized.
pub fn rm1_estimate(
    index: &LanguageModelIndex,
    query: &[String],
    feedback_docs: &[Vec<String>],
    mu: f64,
    n_terms: usize,
) -> Result<TermDistribution> {
    check_mu(mu)?;
    if feedback_docs.is_empty() {
        return Err(Error::Argument(
            "relevance model needs feedback documents".into(),
        ));
    }
    if n_terms == 0 {
        return Err(Error::Argument("n_terms must be >= 1".into()));
    }
    let docs: Vec<DocStats> = feedback_docs.iter().map(|d| DocStats::of(d)).collect();
    let log_q: Vec<f64> = docs
        .iter()
        .map(|d| ql_for_doc(index, query, d, mu))
        .collect();
    let max = log_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let doc_weights: Vec<f64> = log_q.iter().map(|l| (l - max).exp()).collect();

    let terms: BTreeSet<&str> = feedback_docs.iter().flatten().map(String::as_str).collect();
    let mut weighted: Vec<(&str, f64)> = terms
        .into_iter()
        .map(|w| {
            let p: f64 = docs
                .iter()
                .zip(&doc_weights)
                .map(|(d, dw)| dw * index.dirichlet(d, w, mu))
                .sum();
            (w, p)
        })
        .collect();
    weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    weighted.truncate(n_terms);
    let total: f64 = weighted.iter().map(|(_, p)| p).sum();
    Ok(weighted
        .into_iter()
        .map(|(w, p)| (w.to_string(), p / total))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rm3Params {
    /// Weight of the feedback model; `1 − alpha` stays on the query.
    pub alpha: f64,
    pub n_expansion_terms: usize,
    pub mu: f64,
}

impl Default for Rm3Params {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            n_expansion_terms: 20,
            mu: DEFAULT_MU,
        }
    }
}

impl Rm3Params {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Argument(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.n_expansion_terms == 0 {
            return Err(Error::Argument("n_expansion_terms must be >= 1".into()));
        }
        check_mu(self.mu)
    }
}

/// Expanded query model scaled by `|q|`, ready to score documents.
#[derive(Debug, Clone)]
pub struct ExpandedQuery {
    weights: BTreeMap<String, f64>,
    query_len: usize,
    mu: f64,
}

impl ExpandedQuery {
    pub fn new(
        index: &LanguageModelIndex,
        query: &[String],
        feedback_docs: &[Vec<String>],
        params: &Rm3Params,
    ) -> Result<Self> {
        params.validate()?;
        let rm1 = rm1_estimate(
            index,
            query,
            feedback_docs,
            params.mu,
            params.n_expansion_terms,
        )?;
        let qlen = query.len() as f64;
        let counts = term_counts(query);
        let terms: BTreeSet<&str> = counts
            .keys()
            .copied()
            .chain(rm1.keys().map(String::as_str))
            .collect();
        let weights = terms
            .into_iter()
            .map(|w| {
                let c = counts.get(w).copied().unwrap_or(0) as f64;
                let r = rm1.get(w).copied().unwrap_or(0.0);
                (
                    w.to_string(),
                    (1.0 - params.alpha) * c + params.alpha * qlen * r,
                )
            })
            .collect();
        Ok(Self {
            weights,
            query_len: query.len(),
            mu: params.mu,
        })
    }

    /// The expanded query distribution (weights divided by `|q|`).
    pub fn distribution(&self) -> BTreeMap<String, f64> {
        let q = self.query_len.max(1) as f64;
        self.weights
            .iter()
            .map(|(w, v)| (w.clone(), v / q))
            .collect()
    }

    fn rank_key(&self, index: &LanguageModelIndex, item: ItemId) -> f64 {
        let doc = index.doc(item);
        let weights: BTreeMap<&str, f64> =
            self.weights.iter().map(|(w, v)| (w.as_str(), *v)).collect();
        index.log_prob_sum(&doc, &weights, self.mu)
    }

    /// `Σ_w P(w|expanded q) · log P(w|d)`.
    pub fn score(&self, index: &LanguageModelIndex, item: ItemId) -> f64 {
        let key = self.rank_key(index, item);
        if self.query_len == 0 {
            key
        } else {
            key / self.query_len as f64
        }
    }

    pub fn rank(&self, index: &LanguageModelIndex, candidates: &[ItemId]) -> Vec<ItemId> {
        let keys: Vec<f64> = candidates
            .iter()
            .map(|&i| self.rank_key(index, i))
            .collect();
        order_by_desc(candidates, &keys)
    }
}

/// RM3 score of one item.
pub fn rm3_score(
    index: &LanguageModelIndex,
    query: &[String],
    feedback_docs: &[Vec<String>],
    params: &Rm3Params,
    item: ItemId,
) -> Result<f64> {
    Ok(ExpandedQuery::new(index, query, feedback_docs, params)?.score(index, item))
}

fn order_by_desc(candidates: &[ItemId], keys: &[f64]) -> Vec<ItemId> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    order.into_iter().map(|k| candidates[k]).collect()
}

/// Candidates by descending query likelihood; ties keep input order.
pub fn ql_rank(
    index: &LanguageModelIndex,
    query: &[String],
    candidates: &[ItemId],
    mu: f64,
) -> Result<Vec<ItemId>> {
    check_mu(mu)?;
    let keys: Vec<f64> = candidates
        .iter()
        .map(|&i| ql_for_doc(index, query, &index.doc(i), mu))
        .collect();
    Ok(order_by_desc(candidates, &keys))
}

/// RM3 ordering; with no feedback documents it falls back to query
/// likelihood.
pub fn rm3_rank(
    index: &LanguageModelIndex,
    query: &[String],
    feedback_docs: &[Vec<String>],
    params: &Rm3Params,
    candidates: &[ItemId],
) -> Result<Vec<ItemId>> {
    params.validate()?;
    if feedback_docs.is_empty() {
        return ql_rank(index, query, candidates, params.mu);
    }
    Ok(ExpandedQuery::new(index, query, feedback_docs, params)?.rank(index, candidates))
}

/// Candidates by descending training purchase count; ties keep input order.
pub fn pop_rank(catalog: &Catalog, candidates: &[ItemId]) -> Vec<ItemId> {
    let mut out = candidates.to_vec();
    out.sort_by_key(|&i| std::cmp::Reverse(catalog.popularity(i)));
    out
}

/// Uniform shuffle keyed by `(seed, entry_key)`.
pub fn rand_rank(candidates: &[ItemId], seed: u64, entry_key: u64) -> Vec<ItemId> {
    let mut out = candidates.to_vec();
    PortableRng::substream(seed, entry_key).shuffle(&mut out);
    out
}

/// Per-user purchase history, for long-term feedback.
#[derive(Debug, Clone, Default)]
pub struct PurchaseHistory {
    /// Per user: `(week, item)` for every purchase, in log order.
    by_user: HashMap<UserId, Vec<(u32, ItemId)>>,
}

impl PurchaseHistory {
    pub fn build(train: &[QuerySession]) -> Self {
        let mut by_user: HashMap<UserId, Vec<(u32, ItemId)>> = HashMap::new();
        for s in train {
            if let Some(u) = s.user_id {
                by_user
                    .entry(u)
                    .or_default()
                    .extend(s.all_purchases().map(|i| (s.week, i)));
            }
        }
        Self { by_user }
    }

    /// Titles of the user's purchases in weeks strictly before `week`, one
    /// per purchase.
    pub fn feedback_docs(
        &self,
        catalog: &Catalog,
        user: Option<UserId>,
        week: u32,
    ) -> Vec<Vec<String>> {
        user.and_then(|u| self.by_user.get(&u))
            .map(|purchases| {
                purchases
                    .iter()
                    .filter(|(w, _)| *w < week)
                    .map(|(_, i)| catalog.title(*i).to_vec())
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Titles of the user's historical purchases from `train`, strictly earlier
/// by week than `week`.
pub fn lc_feedback_docs(
    catalog: &Catalog,
    user: Option<UserId>,
    week: u32,
    train: &[QuerySession],
) -> Vec<Vec<String>> {
    PurchaseHistory::build(train).feedback_docs(catalog, user, week)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::fixtures::{page, session};
    use crate::session::Product;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn catalog(items: &[(u64, &[&str])]) -> Catalog {
        Catalog::new(items.iter().map(|(id, t)| Product {
            id: ItemId(*id),
            title: toks(t),
        }))
    }

    #[test]
    fn ql_small_mu_is_mle() {
        let cat = catalog(&[(1, &["a", "a", "b", "c"]), (2, &["d"])]);
        let index = LanguageModelIndex::build(&cat);
        let s = ql_score(&index, &toks(&["a"]), ItemId(1), 1e-6).unwrap();
        assert!((s - 0.5f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn ql_missing_term_is_finite() {
        let cat = catalog(&[(1, &["a", "b"])]);
        let index = LanguageModelIndex::build(&cat);
        let s = ql_score(&index, &toks(&["zzz"]), ItemId(1), 1e-6).unwrap();
        assert!(s.is_finite() && s < -15.0);
        let s = ql_score(&index, &toks(&["b"]), ItemId(1), 1e-6).unwrap();
        assert!(s.is_finite());
        assert!(ql_score(&index, &toks(&["a"]), ItemId(1), 0.0).is_err());
    }

    #[test]
    fn ql_large_mu_is_collection_model() {
        let cat = catalog(&[(1, &["a", "a", "b", "c"]), (2, &["b", "d"])]);
        let index = LanguageModelIndex::build(&cat);
        let q = toks(&["a", "b"]);
        let expected = (2.0f64 / 6.0).ln() + (2.0f64 / 6.0).ln();
        for item in [1, 2] {
            let s = ql_score(&index, &q, ItemId(item), 1e9).unwrap();
            assert!((s - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn rm1_single_doc() {
        let cat = catalog(&[(1, &["a", "a", "b"]), (2, &["c"])]);
        let index = LanguageModelIndex::build(&cat);
        let rm = rm1_estimate(&index, &toks(&["a"]), &[toks(&["a", "a", "b"])], 1e-6, 10).unwrap();
        assert_eq!(rm.len(), 2);
        assert!((rm["a"] - 2.0 / 3.0).abs() < 1e-3);
        assert!((rm["b"] - 1.0 / 3.0).abs() < 1e-3);
        assert!((rm.values().sum::<f64>() - 1.0).abs() < 1e-12);

        let top = rm1_estimate(&index, &toks(&["a"]), &[toks(&["a", "a", "b"])], 1e-6, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top["a"], 1.0);

        assert!(rm1_estimate(&index, &toks(&["a"]), &[], 1.0, 10).is_err());
    }

    #[test]
    fn rm3_alpha_zero_matches_ql() {
        let cat = catalog(&[
            (1, &["a", "b", "c"]),
            (2, &["a", "a", "d"]),
            (3, &["b", "b", "e", "a"]),
            (4, &["c"]),
        ]);
        let index = LanguageModelIndex::build(&cat);
        let cands: Vec<ItemId> = (1..=4).map(ItemId).collect();
        let q = toks(&["a", "b", "a"]);
        let params = Rm3Params {
            alpha: 0.0,
            ..Rm3Params::default()
        };
        let fb = vec![toks(&["e", "c"])];
        assert_eq!(
            rm3_rank(&index, &q, &fb, &params, &cands).unwrap(),
            ql_rank(&index, &q, &cands, params.mu).unwrap()
        );
        let ql = ql_score(&index, &q, ItemId(2), params.mu).unwrap();
        let rm3 = rm3_score(&index, &q, &fb, &params, ItemId(2)).unwrap();
        assert!((rm3 - ql / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rm3_full_feedback_promotes_match() {
        let cat = catalog(&[(1, &["a", "b"]), (2, &["c", "d"]), (3, &["e", "f"])]);
        let index = LanguageModelIndex::build(&cat);
        let cands: Vec<ItemId> = (1..=3).map(ItemId).collect();
        let params = Rm3Params {
            alpha: 1.0,
            mu: 1e-6,
            ..Rm3Params::default()
        };
        let order = rm3_rank(&index, &toks(&["a"]), &[toks(&["c", "d"])], &params, &cands).unwrap();
        assert_eq!(order[0], ItemId(2));
    }

    #[test]
    fn pop_examples() {
        let mut cat = catalog(&[(1, &["x"]), (2, &["x"]), (3, &["x"]), (4, &["x"])]);
        cat.set_popularity([(ItemId(1), 5), (ItemId(2), 2), (ItemId(3), 9)]);
        let cands = [ItemId(4), ItemId(1), ItemId(2), ItemId(3)];
        assert_eq!(
            pop_rank(&cat, &cands),
            vec![ItemId(3), ItemId(1), ItemId(2), ItemId(4)]
        );
        cat.set_popularity([]);
        assert_eq!(pop_rank(&cat, &cands), cands.to_vec());
    }

    #[test]
    fn rand_is_deterministic_permutation() {
        let cands: Vec<ItemId> = (0..20).map(ItemId).collect();
        let a = rand_rank(&cands, 1, 7);
        assert_eq!(a, rand_rank(&cands, 1, 7));
        assert_ne!(a, rand_rank(&cands, 1, 8));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, cands);
    }

    #[test]
    fn rand_is_uniform_over_three() {
        let cands = [ItemId(0), ItemId(1), ItemId(2)];
        let mut counts: BTreeMap<Vec<ItemId>, usize> = BTreeMap::new();
        let n = 10_000;
        for key in 0..n {
            *counts.entry(rand_rank(&cands, 99, key)).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.02);
        }
    }

    #[test]
    fn feedback_docs_respect_week() {
        let cat = catalog(&[(1, &["a"]), (2, &["b"]), (3, &["c"]), (4, &["d"])]);
        let earlier = session(1, 3, vec![page(1, &[1, 2], &[1], &[1])]);
        let same_week = session(2, 5, vec![page(1, &[3, 4], &[3], &[3])]);
        let train = vec![earlier.clone(), earlier.clone(), same_week];
        let docs = lc_feedback_docs(&cat, Some(UserId(1)), 5, &train);
        assert_eq!(docs, vec![toks(&["a"]), toks(&["a"])]);
        assert!(lc_feedback_docs(&cat, None, 5, &train).is_empty());
        assert!(lc_feedback_docs(&cat, Some(UserId(9)), 5, &train).is_empty());
    }
}
