//! Fast internal consistency checks run by `ctxrank selftest`.

use std::collections::BTreeSet;
use std::fmt;

use crate::cem::{entry_gradients, entry_loss, rank_entry, ContextWeights, EmbeddingStore};
use crate::error::Result;
use crate::lexical::{ql_rank, rm3_rank, LanguageModelIndex, Rm3Params};
use crate::metrics::{average_precision, ndcg, reciprocal_rank, MAP_CUTOFF, NDCG_CUTOFF};
use crate::rng::PortableRng;
use crate::session::{Catalog, EntryId, ItemId, Product, TrainingEntry, UserId};
use crate::stats::student_t_two_sided;

/// A small random model instance for gradient and reduction checks.
#[derive(Debug, Clone)]
pub struct CemInstance {
    pub catalog: Catalog,
    pub store: EmbeddingStore,
    pub entry: TrainingEntry,
    pub weights: ContextWeights,
}

/// Draws an instance with `dim` dimensions, up to `max_candidates`
/// candidates and up to `max_purchases` purchases. Word and user vectors are
/// standard normal scaled by 0.5.
pub fn random_cem_instance(
    rng: &mut PortableRng,
    dim: usize,
    max_candidates: usize,
    max_purchases: usize,
) -> CemInstance {
    let n_words = 3 + rng.below(8);
    let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
    let n_candidates = 1 + rng.below(max_candidates);
    let n_clicked = 1 + rng.below(3);
    let random_title = |rng: &mut PortableRng| -> Vec<String> {
        let len = 1 + rng.below(4);
        (0..len)
            .map(|_| words[rng.below(n_words)].clone())
            .collect()
    };
    let products: Vec<Product> = (0..(n_candidates + n_clicked) as u64)
        .map(|id| Product {
            id: ItemId(id),
            title: random_title(rng),
        })
        .collect();
    let query = random_title(rng);
    let candidates: Vec<ItemId> = (0..n_candidates as u64).map(ItemId).collect();
    let clicked: BTreeSet<ItemId> = (n_candidates as u64..(n_candidates + n_clicked) as u64)
        .map(ItemId)
        .collect();
    let n_purchased = 1 + rng.below(max_purchases.min(n_candidates));
    let purchased: BTreeSet<ItemId> = rng
        .sample_indices(n_candidates, n_purchased)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    let user = UserId(1);
    let mut store = EmbeddingStore::zeros(dim, words.iter().cloned(), [user]);
    for w in &words {
        let v: Vec<f64> = (0..dim).map(|_| 0.5 * rng.normal()).collect();
        store.set_word(w, &v).expect("word is in the store");
    }
    let v: Vec<f64> = (0..dim).map(|_| 0.5 * rng.normal()).collect();
    store.set_user(user, &v).expect("user is in the store");
    let lambda_u = rng.next_f64();
    let lambda_c = rng.next_f64() * (1.0 - lambda_u);
    CemInstance {
        catalog: Catalog::new(products),
        store,
        entry: TrainingEntry {
            id: EntryId {
                session_id: 0,
                t: 1,
            },
            user_id: rng.bernoulli(0.8).then_some(user),
            query,
            week: 1,
            t: 1,
            clicked,
            candidates,
            purchased,
        },
        weights: ContextWeights { lambda_u, lambda_c },
    }
}

/// Largest relative deviation between analytic and central-difference
/// gradients over every word and user coordinate, with `|a - n| /
/// max(|a|, |n|, floor)` per coordinate.
pub fn gradient_check_error(inst: &CemInstance, h: f64, floor: f64) -> Result<f64> {
    let grads = entry_gradients(&inst.store, &inst.catalog, &inst.entry, inst.weights)?;
    let loss =
        |store: &EmbeddingStore| entry_loss(store, &inst.catalog, &inst.entry, inst.weights, 0.0);
    let mut worst: f64 = 0.0;
    let mut store = inst.store.clone();
    let dim = store.dim();
    let mut compare = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    };
    for w in inst.store.vocab() {
        let base = inst.store.word(w).expect("vocab word").to_vec();
        for d in 0..dim {
            let mut v = base.clone();
            v[d] = base[d] + h;
            store.set_word(w, &v)?;
            let plus = loss(&store)?;
            v[d] = base[d] - h;
            store.set_word(w, &v)?;
            let minus = loss(&store)?;
            store.set_word(w, &base)?;
            let analytic = grads.words.get(w).map_or(0.0, |g| g[d]);
            compare(analytic, (plus - minus) / (2.0 * h));
        }
    }
    for &u in inst.store.users() {
        let base = inst.store.user(u).expect("known user").to_vec();
        for d in 0..dim {
            let mut v = base.clone();
            v[d] = base[d] + h;
            store.set_user(u, &v)?;
            let plus = loss(&store)?;
            v[d] = base[d] - h;
            store.set_user(u, &v)?;
            let minus = loss(&store)?;
            store.set_user(u, &base)?;
            let analytic = grads.users.get(&u).map_or(0.0, |g| g[d]);
            compare(analytic, (plus - minus) / (2.0 * h));
        }
    }
    Ok(worst)
}

/// A metric over item ids: `(ranked, relevant, cutoff) -> value`.
pub type MetricFn = fn(&[u64], &BTreeSet<u64>, usize) -> f64;

/// The metric implementations under test; swappable so that a broken
/// implementation can be shown to fail the self-test.
#[derive(Clone, Copy)]
pub struct MetricFns {
    pub average_precision: MetricFn,
    pub reciprocal_rank: MetricFn,
    pub ndcg: MetricFn,
}

impl Default for MetricFns {
    fn default() -> Self {
        Self {
            average_precision,
            reciprocal_rank: |r, rel, _| reciprocal_rank(r, rel),
            ndcg,
        }
    }
}

fn brute_ap(ranked: &[u64], relevant: &BTreeSet<u64>, cutoff: usize) -> f64 {
    let r = ranked.iter().filter(|i| relevant.contains(i)).count();
    if r == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 1..=ranked.len().min(cutoff) {
        if relevant.contains(&ranked[k - 1]) {
            let hits = ranked[..k].iter().filter(|i| relevant.contains(i)).count();
            total += hits as f64 / k as f64;
        }
    }
    total / r as f64
}

fn brute_rr(ranked: &[u64], relevant: &BTreeSet<u64>, _: usize) -> f64 {
    for (k, item) in ranked.iter().enumerate() {
        if relevant.contains(item) {
            return 1.0 / (k as f64 + 1.0);
        }
    }
    0.0
}

fn brute_ndcg(ranked: &[u64], relevant: &BTreeSet<u64>, cutoff: usize) -> f64 {
    let gain = |k: usize| 1.0 / (k as f64 + 1.0).log2();
    let mut dcg = 0.0;
    for k in 1..=ranked.len().min(cutoff) {
        if relevant.contains(&ranked[k - 1]) {
            dcg += gain(k);
        }
    }
    let r = ranked.iter().filter(|i| relevant.contains(i)).count();
    let idcg: f64 = (1..=r.min(cutoff)).map(gain).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Outcome of one self-test check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status}  {:<22} {}", c.name, c.detail)?;
        }
        let n_ok = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{n_ok}/{} checks passed", self.checks.len())
    }
}

fn check(name: &'static str, result: Result<(bool, String)>) -> Check {
    match result {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn gradient_check(rng: &mut PortableRng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let dim = 1 + rng.below(6);
        let inst = random_cem_instance(rng, dim, 6, 3);
        worst = worst.max(gradient_check_error(&inst, 1e-4, 1e-6)?);
    }
    Ok((
        worst < 1e-4,
        format!("40 instances, max relative error {worst:.2e}"),
    ))
}

fn metric_oracles(rng: &mut PortableRng, fns: &MetricFns) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let hand_ranked = [1, 2, 3, 4];
    let hand_rel: BTreeSet<u64> = [3].into();
    let hand = [
        (
            (fns.average_precision)(&hand_ranked, &hand_rel, MAP_CUTOFF),
            1.0 / 3.0,
        ),
        ((fns.reciprocal_rank)(&hand_ranked, &hand_rel, 0), 1.0 / 3.0),
        ((fns.ndcg)(&hand_ranked, &hand_rel, NDCG_CUTOFF), 0.5),
    ];
    for (got, want) in hand {
        worst = worst.max((got - want).abs());
    }
    for _ in 0..500 {
        let n = 1 + rng.below(150);
        let mut ranked: Vec<u64> = (0..n as u64).collect();
        rng.shuffle(&mut ranked);
        let n_rel = rng.below(6);
        let relevant: BTreeSet<u64> = (0..n_rel).map(|_| rng.below(n + 5) as u64).collect();
        let pairs: [(MetricFn, MetricFn, usize); 3] = [
            (fns.average_precision, brute_ap, MAP_CUTOFF),
            (fns.reciprocal_rank, brute_rr, 0),
            (fns.ndcg, brute_ndcg, NDCG_CUTOFF),
        ];
        for (f, oracle, cutoff) in pairs {
            worst = worst
                .max((f(&ranked, &relevant, cutoff) - oracle(&ranked, &relevant, cutoff)).abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("500 random lists + hand values, max deviation {worst:.2e}"),
    ))
}

fn embedding_reductions(rng: &mut PortableRng) -> Result<(bool, String)> {
    let mut mismatches = 0;
    let trials = 200;
    for _ in 0..trials {
        let inst = random_cem_instance(rng, 4, 8, 2);
        let qem = rank_entry(&inst.store, &inst.catalog, &inst.entry, ContextWeights::QEM)?;
        let scem0 = rank_entry(
            &inst.store,
            &inst.catalog,
            &inst.entry,
            ContextWeights::new(0.0, 0.0)?,
        )?;
        let mut zero_users = inst.store.clone();
        zero_users.clear_users();
        let scem = rank_entry(
            &zero_users,
            &inst.catalog,
            &inst.entry,
            ContextWeights::new(0.0, 1.0)?,
        )?;
        let lscem = rank_entry(
            &zero_users,
            &inst.catalog,
            &inst.entry,
            ContextWeights::new(0.2, 0.8)?,
        )?;
        if qem != scem0 || scem != lscem {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{trials} entries, {mismatches} ordering mismatches"),
    ))
}

fn rm3_reduction(rng: &mut PortableRng) -> Result<(bool, String)> {
    let mut mismatches = 0;
    let trials = 200;
    for _ in 0..trials {
        let inst = random_cem_instance(rng, 1, 8, 1);
        let index = LanguageModelIndex::build(&inst.catalog);
        let feedback: Vec<Vec<String>> = inst
            .entry
            .clicked
            .iter()
            .map(|&i| inst.catalog.title(i).to_vec())
            .collect();
        let params = Rm3Params {
            alpha: 0.0,
            ..Rm3Params::default()
        };
        let rm3 = rm3_rank(
            &index,
            &inst.entry.query,
            &feedback,
            &params,
            &inst.entry.candidates,
        )?;
        let ql = ql_rank(&index, &inst.entry.query, &inst.entry.candidates, params.mu)?;
        if rm3 != ql {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{trials} entries, {mismatches} ordering mismatches"),
    ))
}

fn t_distribution() -> Result<(bool, String)> {
    // df = 1 is Cauchy: p = 1 - 2·atan(t)/π; df = 2: p = 1 - t/sqrt(2 + t²).
    let cauchy = student_t_two_sided(1.5, 1.0) - (1.0 - 2.0 * 1.5f64.atan() / std::f64::consts::PI);
    let df2 = student_t_two_sided(1.5, 2.0) - (1.0 - 1.5 / (2.0f64 + 2.25).sqrt());
    let anchor = student_t_two_sided(2.262, 9.0);
    let ok = cauchy.abs() < 1e-12 && df2.abs() < 1e-12 && (anchor - 0.05).abs() < 1e-3;
    Ok((
        ok,
        format!("closed forms within 1e-12, df=9 t=2.262 -> p={anchor:.5}"),
    ))
}

/// Runs every check with the crate's own metric implementations.
pub fn run_selftest() -> SelftestReport {
    run_selftest_with(&MetricFns::default())
}

/// Runs every check, testing the given metric implementations.
pub fn run_selftest_with(fns: &MetricFns) -> SelftestReport {
    let mut rng = PortableRng::new(0x5e1f_7e57);
    SelftestReport {
        checks: vec![
            check("gradients", gradient_check(&mut rng)),
            check("metric oracles", metric_oracles(&mut rng, fns)),
            check("embedding reductions", embedding_reductions(&mut rng)),
            check("rm3 reduction", rm3_reduction(&mut rng)),
            check("t distribution", t_distribution()),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let report = run_selftest();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn broken_metric_fails() {
        let fns = MetricFns {
            ndcg: |r, rel, k| ndcg(r, rel, k + 1),
            ..MetricFns::default()
        };
        let report = run_selftest_with(&fns);
        assert!(!report.passed());
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        assert_eq!(failed, ["metric oracles"]);
    }
}
