//! Synthetic catalogs and multi-page session logs.
//!
//! The generator plants a hidden latent space: every word, product topic and
//! user gets a unit vector. Titles are sampled from words near the product's
//! topic. Each session mixes the user's long-term vector with fresh noise
//! into a session preference; the query is a short, noisy sample of words
//! near that preference, so it only partially reveals it. A preference-blind
//! initial ranker orders the catalog by lexical query match, popularity and
//! noise. Clicks and purchases follow the hidden preference, which makes the
//! clicked titles of early pages informative about later purchases.
//!
//! The hidden vectors never reach the session log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::session::{is_usable, Catalog, ItemId, Page, Product, QuerySession, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub n_products: usize,
    pub n_users: usize,
    pub n_sessions: usize,
    pub n_weeks: u32,
    pub page_size: usize,
    /// Maximum pages served per session (at least 2 are always served).
    pub pages_per_session: usize,
    pub latent_dim: usize,
    /// Inclusive `[min, max]` title length.
    pub title_len: [usize; 2],
    /// Inclusive `[min, max]` query length.
    pub query_len: [usize; 2],
    /// Probability of flipping each click decision.
    pub click_noise: f64,
    /// Temperature of the purchase softmax over hidden affinity.
    pub purchase_temperature: f64,
    /// Temperature of the word softmax around a product topic.
    pub title_temperature: f64,
    /// Temperature of the word softmax around the session preference.
    pub query_temperature: f64,
    /// Weight of the user's long-term vector in the session preference.
    pub user_weight: f64,
    pub anonymous_rate: f64,
    pub zipf_exponent: f64,
    /// Weight of the log-popularity prior in the initial ranker.
    pub popularity_weight: f64,
    /// Weight of the log-popularity prior in the purchase softmax.
    pub purchase_popularity_weight: f64,
    /// Weight of latent query-item similarity in the initial ranker.
    pub ranker_relevance: f64,
    /// Purchase logit penalty per unit of `ln(1 + position)` among later
    /// pages; models shoppers examining higher-ranked items first.
    pub position_bias: f64,
    pub click_sharpness: f64,
    pub click_threshold: f64,
    pub ranker_noise: f64,
    /// Probability that a session carries a second later-page purchase.
    pub multi_purchase_rate: f64,
    /// Fraction of sessions whose purchases are all on pages >= 2; the rest
    /// additionally buy a clicked page-1 item.
    pub later_page_purchase_frac: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            vocab_size: 600,
            n_products: 3000,
            n_users: 1000,
            n_sessions: 10_000,
            n_weeks: 40,
            page_size: 20,
            pages_per_session: 6,
            latent_dim: 16,
            title_len: [6, 12],
            query_len: [1, 3],
            click_noise: 0.02,
            purchase_temperature: 0.1,
            title_temperature: 0.15,
            query_temperature: 0.35,
            user_weight: 0.5,
            anonymous_rate: 0.1,
            zipf_exponent: 1.0,
            popularity_weight: 0.5,
            purchase_popularity_weight: 0.15,
            ranker_relevance: 3.0,
            position_bias: 0.2,
            click_sharpness: 20.0,
            click_threshold: 0.35,
            ranker_noise: 0.5,
            multi_purchase_rate: 0.2,
            later_page_purchase_frac: 1.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("n_products", self.n_products),
            ("n_users", self.n_users),
            ("n_sessions", self.n_sessions),
            ("n_weeks", self.n_weeks as usize),
            ("page_size", self.page_size),
            ("latent_dim", self.latent_dim),
            ("title_len[0]", self.title_len[0]),
            ("query_len[0]", self.query_len[0]),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("{name} must be positive")));
        }
        if self.pages_per_session < 2 {
            return Err(Error::Argument("pages_per_session must be >= 2".into()));
        }
        if self.title_len[0] > self.title_len[1] || self.query_len[0] > self.query_len[1] {
            return Err(Error::Argument(
                "length ranges must satisfy min <= max".into(),
            ));
        }
        if self.query_len[1] > self.vocab_size {
            return Err(Error::Argument("query_len exceeds vocab_size".into()));
        }
        for (name, p) in [
            ("click_noise", self.click_noise),
            ("anonymous_rate", self.anonymous_rate),
            ("user_weight", self.user_weight),
            ("multi_purchase_rate", self.multi_purchase_rate),
            ("later_page_purchase_frac", self.later_page_purchase_frac),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        for (name, v) in [
            ("purchase_temperature", self.purchase_temperature),
            ("title_temperature", self.title_temperature),
            ("query_temperature", self.query_temperature),
        ] {
            if !(v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("zipf_exponent", self.zipf_exponent),
            ("popularity_weight", self.popularity_weight),
            (
                "purchase_popularity_weight",
                self.purchase_popularity_weight,
            ),
            ("ranker_relevance", self.ranker_relevance),
            ("position_bias", self.position_bias),
            ("ranker_noise", self.ranker_noise),
            ("click_sharpness", self.click_sharpness),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Argument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The hidden generative state. Never serialized.
#[derive(Debug, Clone)]
pub struct LatentWorld {
    pub words: Vec<String>,
    pub word_vecs: Vec<Vec<f64>>,
    /// Hidden topic per product.
    pub product_vecs: BTreeMap<ItemId, Vec<f64>>,
    /// Zipf log-prior per product.
    pub product_log_prior: BTreeMap<ItemId, f64>,
    pub user_vecs: BTreeMap<UserId, Vec<f64>>,
}

const CONSONANTS: &[u8] = b"bdfgjklmnprstvzchwxy";
const VOWELS: &[u8] = b"aeiou";

/// A pronounceable, unique token for vocabulary index `i`.
pub fn word_for(mut i: usize) -> String {
    let mut out = String::new();
    loop {
        let syl = i % 100;
        out.push(CONSONANTS[syl / 5] as char);
        out.push(VOWELS[syl % 5] as char);
        i /= 100;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    out
}

fn random_unit(rng: &mut PortableRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn softmax_weights(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logits.iter().map(|l| (l - max).exp()).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Substream keys for the corpus-level draws.
const STREAM_WORDS: u64 = 1;
const STREAM_PRODUCTS: u64 = 2;
const STREAM_USERS: u64 = 3;
const STREAM_POPULARITY: u64 = 4;
const SESSION_STREAM_BASE: u64 = 1 << 40;

/// Builds the catalog, the user roster and the hidden world.
pub fn generate_corpus(config: &GenConfig) -> Result<(Catalog, Vec<UserId>, LatentWorld)> {
    config.validate()?;
    let dim = config.latent_dim;

    let mut rng = PortableRng::substream(config.seed, STREAM_WORDS);
    let words: Vec<String> = (0..config.vocab_size).map(word_for).collect();
    let word_vecs: Vec<Vec<f64>> = (0..config.vocab_size)
        .map(|_| random_unit(&mut rng, dim))
        .collect();

    let mut rng = PortableRng::substream(config.seed, STREAM_PRODUCTS);
    let mut products = Vec::with_capacity(config.n_products);
    let mut product_vecs = BTreeMap::new();
    for p in 0..config.n_products {
        let id = ItemId(p as u64);
        let topic = random_unit(&mut rng, dim);
        let logits: Vec<f64> = word_vecs
            .iter()
            .map(|w| dot(w, &topic) / config.title_temperature)
            .collect();
        let weights = softmax_weights(&logits);
        let len = rng.range_inclusive(config.title_len[0], config.title_len[1]);
        let title = (0..len)
            .map(|_| words[rng.weighted_index(&weights)].clone())
            .collect();
        products.push(Product { id, title });
        product_vecs.insert(id, topic);
    }

    let mut rng = PortableRng::substream(config.seed, STREAM_POPULARITY);
    let mut ranks: Vec<usize> = (0..config.n_products).collect();
    rng.shuffle(&mut ranks);
    let product_log_prior = ranks
        .iter()
        .enumerate()
        .map(|(p, &rank)| {
            (
                ItemId(p as u64),
                -config.zipf_exponent * ((rank + 1) as f64).ln(),
            )
        })
        .collect();

    let mut rng = PortableRng::substream(config.seed, STREAM_USERS);
    let users: Vec<UserId> = (0..config.n_users as u64).map(UserId).collect();
    let user_vecs = users
        .iter()
        .map(|&u| (u, random_unit(&mut rng, dim)))
        .collect();

    let world = LatentWorld {
        words,
        word_vecs,
        product_vecs,
        product_log_prior,
        user_vecs,
    };
    Ok((Catalog::new(products), users, world))
}

/// A generated session together with its hidden preference vector.
#[derive(Debug, Clone)]
pub struct TracedSession {
    pub session: QuerySession,
    pub preference: Vec<f64>,
}

/// Per-catalog lookups shared by every session draw.
struct SessionContext<'a> {
    config: &'a GenConfig,
    world: &'a LatentWorld,
    ids: Vec<ItemId>,
    vecs: Vec<&'a [f64]>,
    log_prior: Vec<f64>,
    /// Sorted distinct word indices of each title.
    title_words: Vec<Vec<u32>>,
    word_index: BTreeMap<&'a str, u32>,
}

impl<'a> SessionContext<'a> {
    fn new(config: &'a GenConfig, catalog: &'a Catalog, world: &'a LatentWorld) -> Result<Self> {
        let word_index: BTreeMap<&str, u32> = world
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i as u32))
            .collect();
        let mut ids = Vec::new();
        let mut vecs = Vec::new();
        let mut log_prior = Vec::new();
        let mut title_words = Vec::new();
        for product in catalog.products() {
            let vec = world.product_vecs.get(&product.id).ok_or_else(|| {
                Error::Argument(format!("product {} missing from latent world", product.id))
            })?;
            ids.push(product.id);
            vecs.push(vec.as_slice());
            log_prior.push(
                world
                    .product_log_prior
                    .get(&product.id)
                    .copied()
                    .unwrap_or(0.0),
            );
            let mut tw: Vec<u32> = product
                .title
                .iter()
                .filter_map(|t| word_index.get(t.as_str()).copied())
                .collect();
            tw.sort_unstable();
            tw.dedup();
            title_words.push(tw);
        }
        Ok(Self {
            config,
            world,
            ids,
            vecs,
            log_prior,
            title_words,
            word_index,
        })
    }

    fn session(&self, session_id: u64, seed: u64) -> TracedSession {
        let cfg = self.config;
        let mut rng = PortableRng::substream(seed, SESSION_STREAM_BASE + session_id);
        let dim = cfg.latent_dim;

        let users: Vec<(&UserId, &Vec<f64>)> = self.world.user_vecs.iter().collect();
        let (&user, user_vec) = users[rng.below(users.len())];
        let anonymous = rng.bernoulli(cfg.anonymous_rate);
        let noise = random_unit(&mut rng, dim);
        let mut pref: Vec<f64> = user_vec
            .iter()
            .zip(&noise)
            .map(|(u, n)| cfg.user_weight * u + (1.0 - cfg.user_weight) * n)
            .collect();
        normalize(&mut pref);

        // Query: distinct words drawn near the preference.
        let qlen = rng.range_inclusive(cfg.query_len[0], cfg.query_len[1]);
        let mut weights = softmax_weights(
            &self
                .world
                .word_vecs
                .iter()
                .map(|w| dot(w, &pref) / cfg.query_temperature)
                .collect::<Vec<_>>(),
        );
        let mut query_idx = Vec::with_capacity(qlen);
        for _ in 0..qlen {
            let w = rng.weighted_index(&weights);
            weights[w] = 0.0;
            query_idx.push(w as u32);
        }
        let query: Vec<String> = query_idx
            .iter()
            .map(|&w| self.world.words[w as usize].clone())
            .collect();
        debug_assert!(query
            .iter()
            .all(|w| self.word_index.contains_key(w.as_str())));

        let mut query_vec = vec![0.0; dim];
        for &w in &query_idx {
            for (q, x) in query_vec.iter_mut().zip(&self.world.word_vecs[w as usize]) {
                *q += x;
            }
        }
        normalize(&mut query_vec);

        // Initial ranker: lexical match, latent query similarity, popularity
        // and noise. It never sees the preference itself.
        let n_pages = rng.range_inclusive(2, cfg.pages_per_session);
        let n_shown = (n_pages * cfg.page_size).min(self.ids.len());
        let mut scored: Vec<(f64, usize)> = (0..self.ids.len())
            .map(|p| {
                let matches = query_idx
                    .iter()
                    .filter(|w| self.title_words[p].binary_search(w).is_ok())
                    .count() as f64;
                let score = matches
                    + cfg.ranker_relevance * dot(self.vecs[p], &query_vec)
                    + cfg.popularity_weight * self.log_prior[p] / (1.0 + cfg.zipf_exponent)
                    + cfg.ranker_noise * rng.gumbel();
                (score, p)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let shown: Vec<usize> = scored[..n_shown].iter().map(|&(_, p)| p).collect();
        let n_pages = n_shown.div_ceil(cfg.page_size).max(1);

        let affinity: Vec<f64> = shown.iter().map(|&p| dot(self.vecs[p], &pref)).collect();
        let click_prob = |a: f64| sigmoid(cfg.click_sharpness * (a - cfg.click_threshold));
        let mut pages: Vec<Page> = Vec::with_capacity(n_pages);
        for page_idx in 0..n_pages {
            let lo = page_idx * cfg.page_size;
            let hi = ((page_idx + 1) * cfg.page_size).min(shown.len());
            let draw_clicks = |rng: &mut PortableRng| -> BTreeSet<ItemId> {
                (lo..hi)
                    .filter(|&pos| {
                        let clicked = rng.bernoulli(click_prob(affinity[pos]));
                        clicked ^ rng.bernoulli(cfg.click_noise)
                    })
                    .map(|pos| self.ids[shown[pos]])
                    .collect()
            };
            let mut clicks = draw_clicks(&mut rng);
            if page_idx == 0 {
                let mut attempts = 0;
                while clicks.is_empty() && attempts < 20 {
                    clicks = draw_clicks(&mut rng);
                    attempts += 1;
                }
                if clicks.is_empty() {
                    let best = (lo..hi)
                        .max_by(|&a, &b| affinity[a].total_cmp(&affinity[b]).then(b.cmp(&a)))
                        .expect("first page is non-empty");
                    clicks.insert(self.ids[shown[best]]);
                }
            }
            pages.push(Page {
                page_no: page_idx as u32 + 1,
                items: shown[lo..hi].iter().map(|&p| self.ids[p]).collect(),
                clicks,
                purchases: BTreeSet::new(),
            });
        }

        // Purchases: softmax over later-page items by affinity and popularity.
        let later: Vec<usize> = (cfg.page_size.min(shown.len())..shown.len()).collect();
        let mut weights = softmax_weights(
            &later
                .iter()
                .enumerate()
                .map(|(rank, &pos)| {
                    affinity[pos] / cfg.purchase_temperature
                        + cfg.purchase_popularity_weight * self.log_prior[shown[pos]]
                        - cfg.position_bias * (1.0 + rank as f64).ln()
                })
                .collect::<Vec<_>>(),
        );
        let n_purchases = if rng.bernoulli(cfg.multi_purchase_rate) {
            2
        } else {
            1
        };
        for _ in 0..n_purchases.min(later.len()) {
            let pick = rng.weighted_index(&weights);
            weights[pick] = 0.0;
            let pos = later[pick];
            let page = &mut pages[pos / cfg.page_size];
            let item = self.ids[shown[pos]];
            page.clicks.insert(item);
            page.purchases.insert(item);
        }
        if !rng.bernoulli(cfg.later_page_purchase_frac) {
            let clicked: Vec<ItemId> = pages[0].clicks.iter().copied().collect();
            let item = clicked[rng.below(clicked.len())];
            pages[0].purchases.insert(item);
        }

        let week = 1 + (session_id * cfg.n_weeks as u64 / cfg.n_sessions as u64) as u32;
        TracedSession {
            session: QuerySession {
                session_id,
                user_id: (!anonymous).then_some(user),
                query,
                week,
                pages,
            },
            preference: pref,
        }
    }
}

/// Generates `config.n_sessions` sessions with their hidden preferences,
/// ordered by session id.
pub fn generate_sessions_traced(
    config: &GenConfig,
    catalog: &Catalog,
    world: &LatentWorld,
) -> Result<Vec<TracedSession>> {
    config.validate()?;
    let ctx = SessionContext::new(config, catalog, world)?;
    let out: Vec<TracedSession> = (0..config.n_sessions as u64)
        .map(|id| ctx.session(id, config.seed))
        .collect();
    debug_assert!(out.iter().all(|t| is_usable(&t.session)));
    Ok(out)
}

/// Generates the session log. Every session passes the usability filter.
pub fn generate_sessions(
    config: &GenConfig,
    catalog: &Catalog,
    world: &LatentWorld,
) -> Result<Vec<QuerySession>> {
    Ok(generate_sessions_traced(config, catalog, world)?
        .into_iter()
        .map(|t| t.session)
        .collect())
}

/// Summary statistics of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub products: usize,
    pub users: usize,
    pub sessions: usize,
    pub sessions_kept: usize,
    pub kept_fraction: f64,
    pub avg_pages: f64,
    pub avg_clicks_per_page: f64,
    pub avg_purchases: f64,
    pub avg_title_len: f64,
    pub avg_query_len: f64,
}

impl CorpusStats {
    pub fn compute(catalog: &Catalog, sessions: &[QuerySession]) -> Self {
        let n = sessions.len().max(1) as f64;
        let pages: usize = sessions.iter().map(|s| s.pages.len()).sum();
        let clicks: usize = sessions
            .iter()
            .flat_map(|s| &s.pages)
            .map(|p| p.clicks.len())
            .sum();
        let purchases: usize = sessions.iter().map(|s| s.all_purchases().count()).sum();
        let kept = sessions.iter().filter(|s| is_usable(s)).count();
        let users: BTreeSet<UserId> = sessions.iter().filter_map(|s| s.user_id).collect();
        let title_tokens: usize = catalog.products().map(|p| p.title.len()).sum();
        Self {
            products: catalog.len(),
            users: users.len(),
            sessions: sessions.len(),
            sessions_kept: kept,
            kept_fraction: kept as f64 / n,
            avg_pages: pages as f64 / n,
            avg_clicks_per_page: clicks as f64 / pages.max(1) as f64,
            avg_purchases: purchases as f64 / n,
            avg_title_len: title_tokens as f64 / catalog.len().max(1) as f64,
            avg_query_len: sessions.iter().map(|s| s.query.len()).sum::<usize>() as f64 / n,
        }
    }
}
