//! Query sessions, candidate sets and sub-session splitting.
//!
//! A query session is the full episode under one query: the user sees result
//! pages in the initial ranker's order, clicks some items and purchases some
//! items. Re-ranking happens at a page boundary `t`: everything served on
//! pages `1..=t` counts as viewed, the clicks on those pages form the
//! short-term context, and the unviewed items of pages `t+1..=t+k` form the
//! candidate set whose later purchases are the ranking targets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub id: ItemId,
    pub title: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub page_no: u32,
    /// Items in the initial ranker's order.
    pub items: Vec<ItemId>,
    #[serde(default)]
    pub clicks: BTreeSet<ItemId>,
    #[serde(default)]
    pub purchases: BTreeSet<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySession {
    pub session_id: u64,
    pub user_id: Option<UserId>,
    pub query: Vec<String>,
    pub week: u32,
    pub pages: Vec<Page>,
}

impl QuerySession {
    /// Checks the structural invariants: pages numbered `1..=n` in order, no
    /// item served twice, clicks and purchases drawn from the page, and every
    /// purchase also recorded as a click.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (idx, page) in self.pages.iter().enumerate() {
            if page.page_no as usize != idx + 1 {
                return Err(Error::Data(format!(
                    "session {}: page {} at position {}",
                    self.session_id,
                    page.page_no,
                    idx + 1
                )));
            }
            for item in &page.items {
                if !seen.insert(*item) {
                    return Err(Error::Data(format!(
                        "session {}: item {item} served twice",
                        self.session_id
                    )));
                }
            }
            let served: HashSet<_> = page.items.iter().collect();
            if let Some(bad) = page.clicks.iter().find(|i| !served.contains(i)) {
                return Err(Error::Data(format!(
                    "session {}: clicked {bad} not on page {}",
                    self.session_id, page.page_no
                )));
            }
            if let Some(bad) = page.purchases.iter().find(|i| !page.clicks.contains(i)) {
                return Err(Error::Data(format!(
                    "session {}: purchase {bad} on page {} has no click",
                    self.session_id, page.page_no
                )));
            }
        }
        Ok(())
    }

    pub fn num_pages(&self) -> usize {
        self.pages.len()
    }

    /// C_{1:t}: clicks on pages `1..=t`.
    pub fn clicks_through(&self, t: usize) -> BTreeSet<ItemId> {
        self.pages
            .iter()
            .take(t)
            .flat_map(|p| p.clicks.iter().copied())
            .collect()
    }

    /// Purchases on pages `from..` (1-based).
    pub fn purchases_from(&self, from: usize) -> BTreeSet<ItemId> {
        self.pages
            .iter()
            .skip(from.saturating_sub(1))
            .flat_map(|p| p.purchases.iter().copied())
            .collect()
    }

    pub fn all_purchases(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.pages.iter().flat_map(|p| p.purchases.iter().copied())
    }
}

/// Identifies an entry: the session it came from and its context boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryId {
    pub session_id: u64,
    pub t: u32,
}

impl EntryId {
    pub fn key(&self) -> u64 {
        self.session_id.wrapping_mul(1 << 8) ^ self.t as u64
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.session_id, self.t)
    }
}

/// One re-ranking problem `(u, q, C_{1:t}, D_{t+1}, B_{t+1})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingEntry {
    pub id: EntryId,
    pub user_id: Option<UserId>,
    pub query: Vec<String>,
    pub week: u32,
    pub t: u32,
    pub clicked: BTreeSet<ItemId>,
    /// D_{t+1} in initial-ranker order.
    pub candidates: Vec<ItemId>,
    pub purchased: BTreeSet<ItemId>,
}

impl TrainingEntry {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Argument(format!("entry {}: no candidates", self.id)));
        }
        if self.purchased.is_empty() {
            return Err(Error::Argument(format!("entry {}: no purchases", self.id)));
        }
        let cands: HashSet<_> = self.candidates.iter().collect();
        if cands.len() != self.candidates.len() {
            return Err(Error::Argument(format!(
                "entry {}: duplicate candidates",
                self.id
            )));
        }
        if let Some(bad) = self.purchased.iter().find(|i| !cands.contains(i)) {
            return Err(Error::Argument(format!(
                "entry {}: purchase {bad} outside candidates",
                self.id
            )));
        }
        Ok(())
    }
}

/// Product catalog with training-split purchase counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    products: BTreeMap<ItemId, Product>,
    popularity: BTreeMap<ItemId, u64>,
}

impl Catalog {
    pub fn new(products: impl IntoIterator<Item = Product>) -> Self {
        Self {
            products: products.into_iter().map(|p| (p.id, p)).collect(),
            popularity: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: ItemId) -> Option<&Product> {
        self.products.get(&id)
    }

    /// Title tokens, empty for unknown items.
    pub fn title(&self, id: ItemId) -> &[String] {
        self.products.get(&id).map_or(&[], |p| p.title.as_slice())
    }

    pub fn products(&self) -> impl Iterator<Item = &Product> {
        self.products.values()
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.products.contains_key(&id)
    }

    /// Recomputes popularity from the purchases in `sessions`, which should
    /// be the training split only.
    pub fn set_popularity_from(&mut self, sessions: &[QuerySession]) {
        self.popularity.clear();
        for item in sessions.iter().flat_map(|s| s.all_purchases()) {
            *self.popularity.entry(item).or_insert(0) += 1;
        }
    }

    pub fn set_popularity(&mut self, counts: impl IntoIterator<Item = (ItemId, u64)>) {
        self.popularity = counts.into_iter().collect();
    }

    pub fn popularity(&self, id: ItemId) -> u64 {
        self.popularity.get(&id).copied().unwrap_or(0)
    }

    /// Errors if any session references an item missing from the catalog.
    pub fn check_sessions(&self, sessions: &[QuerySession]) -> Result<()> {
        for s in sessions {
            for page in &s.pages {
                if let Some(bad) = page.items.iter().find(|i| !self.contains(**i)) {
                    return Err(Error::Data(format!(
                        "session {}: item {bad} not in catalog",
                        s.session_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// D_{t+1} = R_{1:t+k} \ V_{1:t}, in page order then within-page rank.
///
/// Every item served on pages `1..=t` counts as viewed.
pub fn build_candidate_set(session: &QuerySession, t: usize, k: usize) -> Result<Vec<ItemId>> {
    if k < 1 {
        return Err(Error::Argument(format!("k must be >= 1, got {k}")));
    }
    let n = session.num_pages();
    if t < 1 || t >= n {
        return Err(Error::Range(format!(
            "t={t} outside 1..{n} for session {}",
            session.session_id
        )));
    }
    let viewed: HashSet<ItemId> = session.pages[..t]
        .iter()
        .flat_map(|p| p.items.iter().copied())
        .collect();
    let last = (t + k).min(n);
    Ok(session.pages[t..last]
        .iter()
        .flat_map(|p| p.items.iter().copied())
        .filter(|i| !viewed.contains(i))
        .collect())
}

fn first_later_purchase_page(session: &QuerySession) -> Option<usize> {
    session
        .pages
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, p)| !p.purchases.is_empty())
        .map(|(idx, _)| idx + 1)
}

/// True when the session has a purchase on some page `p >= 2` and at least
/// one click before the earliest such page.
pub fn is_usable(session: &QuerySession) -> bool {
    match first_later_purchase_page(session) {
        Some(p) => session.pages[..p - 1]
            .iter()
            .any(|pg| !pg.clicks.is_empty()),
        None => false,
    }
}

pub fn filter_sessions(log: &[QuerySession]) -> Vec<QuerySession> {
    log.iter().filter(|s| is_usable(s)).cloned().collect()
}

/// The re-ranking entry at boundary `t`, or `None` if there are no clicks
/// on pages `1..=t` or no later purchase lands in the candidate set.
pub fn entry_at(session: &QuerySession, t: usize, k: usize) -> Result<Option<TrainingEntry>> {
    let candidates = build_candidate_set(session, t, k)?;
    let clicked = session.clicks_through(t);
    if clicked.is_empty() {
        return Ok(None);
    }
    let cand_set: HashSet<_> = candidates.iter().copied().collect();
    let purchased: BTreeSet<ItemId> = session
        .purchases_from(t + 1)
        .into_iter()
        .filter(|i| cand_set.contains(i))
        .collect();
    if purchased.is_empty() {
        return Ok(None);
    }
    Ok(Some(TrainingEntry {
        id: EntryId {
            session_id: session.session_id,
            t: t as u32,
        },
        user_id: session.user_id,
        query: session.query.clone(),
        week: session.week,
        t: t as u32,
        clicked,
        candidates,
        purchased,
    }))
}

/// One entry per page `p >= 2` carrying a purchase, with context boundary
/// `t = p - 1`. Targets are all purchases from page `p` on that fall in the
/// candidate set.
pub fn split_subsessions(session: &QuerySession, k: usize) -> Vec<TrainingEntry> {
    let mut out = Vec::new();
    for p in 2..=session.num_pages() {
        if session.pages[p - 1].purchases.is_empty() {
            continue;
        }
        // k >= 1 and 1 <= p-1 < n, so entry_at cannot fail here.
        if let Ok(Some(entry)) = entry_at(session, p - 1, k) {
            out.push(entry);
        }
    }
    out
}

/// Chronological train / validation / test partition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<QuerySession>,
    pub valid: Vec<QuerySession>,
    pub test: Vec<QuerySession>,
}

/// Splits on week boundaries so that the session-count fractions are as
/// close as possible to `(train_frac, valid_frac, rest)`.
pub fn temporal_split(log: &[QuerySession], train_frac: f64, valid_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0) {
        return Err(Error::Argument(format!(
            "split fractions ({train_frac}, {valid_frac}) must be positive with sum < 1"
        )));
    }
    let mut per_week: BTreeMap<u32, usize> = BTreeMap::new();
    for s in log {
        *per_week.entry(s.week).or_insert(0) += 1;
    }
    let weeks: Vec<u32> = per_week.keys().copied().collect();
    if weeks.len() < 3 {
        return Err(Error::Argument(format!(
            "temporal split needs at least 3 distinct weeks, got {}",
            weeks.len()
        )));
    }
    let counts: Vec<usize> = per_week.values().copied().collect();
    let mut prefix = vec![0usize; counts.len() + 1];
    for (i, c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    let total = log.len() as f64;
    let (want_train, want_valid) = (train_frac * total, valid_frac * total);
    let want_test = total - want_train - want_valid;
    let m = weeks.len();
    let mut best = (f64::INFINITY, 1, 2);
    for a in 1..m - 1 {
        for b in a + 1..m {
            let tr = prefix[a] as f64;
            let va = (prefix[b] - prefix[a]) as f64;
            let te = (prefix[m] - prefix[b]) as f64;
            let err = (tr - want_train).abs() + (va - want_valid).abs() + (te - want_test).abs();
            if err < best.0 - 1e-9 {
                best = (err, a, b);
            }
        }
    }
    let (valid_start, test_start) = (weeks[best.1], weeks[best.2]);
    let mut split = Split::default();
    for s in log {
        if s.week < valid_start {
            split.train.push(s.clone());
        } else if s.week < test_start {
            split.valid.push(s.clone());
        } else {
            split.test.push(s.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn page(no: u32, items: &[u64], clicks: &[u64], purchases: &[u64]) -> Page {
        Page {
            page_no: no,
            items: items.iter().map(|&i| ItemId(i)).collect(),
            clicks: clicks.iter().map(|&i| ItemId(i)).collect(),
            purchases: purchases.iter().map(|&i| ItemId(i)).collect(),
        }
    }

    pub fn session(id: u64, week: u32, pages: Vec<Page>) -> QuerySession {
        QuerySession {
            session_id: id,
            user_id: Some(UserId(1)),
            query: vec!["red".into(), "toy".into()],
            week,
            pages,
        }
    }
}
