//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::excessive_precision)]

use std::collections::BTreeSet;

use ctxrank::cem::{ContextWeights, EmbeddingStore};
use ctxrank::session::{Catalog, TrainingEntry};

/// AP@cutoff straight from the definition: mean over relevant items present
/// in the list of precision at their rank, zero for ranks past the cutoff.
pub fn oracle_ap(ranked: &[u64], relevant: &BTreeSet<u64>, cutoff: usize) -> f64 {
    let present: Vec<usize> = (0..ranked.len())
        .filter(|&k| relevant.contains(&ranked[k]))
        .collect();
    if present.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &k in &present {
        if k < cutoff {
            let above = present.iter().filter(|&&j| j <= k).count();
            total += above as f64 / (k + 1) as f64;
        }
    }
    total / present.len() as f64
}

pub fn oracle_rr(ranked: &[u64], relevant: &BTreeSet<u64>) -> f64 {
    match ranked.iter().position(|i| relevant.contains(i)) {
        Some(k) => 1.0 / (k + 1) as f64,
        None => 0.0,
    }
}

/// NDCG@cutoff with binary gains: DCG of the list over DCG of the list with
/// all present relevant items moved to the top.
pub fn oracle_ndcg(ranked: &[u64], relevant: &BTreeSet<u64>, cutoff: usize) -> f64 {
    let dcg = |list: &[bool]| -> f64 {
        list.iter()
            .take(cutoff)
            .enumerate()
            .map(|(k, &rel)| {
                if rel {
                    1.0 / (k as f64 + 2.0).log2()
                } else {
                    0.0
                }
            })
            .sum()
    };
    let gains: Vec<bool> = ranked.iter().map(|i| relevant.contains(i)).collect();
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.cmp(a));
    let best = dcg(&ideal);
    if best == 0.0 {
        0.0
    } else {
        dcg(&gains) / best
    }
}

fn mean_vec(store: &EmbeddingStore, tokens: &[String]) -> Vec<f64> {
    let rows: Vec<&[f64]> = tokens.iter().filter_map(|t| store.word(t)).collect();
    let mut out = vec![0.0; store.dim()];
    if rows.is_empty() {
        return out;
    }
    for r in &rows {
        for (o, x) in out.iter_mut().zip(r.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

/// The context vector from the definitions, computed without the library.
pub fn oracle_context(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
) -> Vec<f64> {
    let dim = store.dim();
    let q = mean_vec(store, &entry.query);
    let u = entry
        .user_id
        .and_then(|u| store.user(u))
        .map_or(vec![0.0; dim], <[f64]>::to_vec);
    let mut c = vec![0.0; dim];
    if !entry.clicked.is_empty() {
        for &i in &entry.clicked {
            for (o, x) in c.iter_mut().zip(mean_vec(store, catalog.title(i))) {
                *o += x;
            }
        }
        c.iter_mut().for_each(|o| *o /= entry.clicked.len() as f64);
    }
    let wq = 1.0 - weights.lambda_u - weights.lambda_c;
    (0..dim)
        .map(|d| wq * q[d] + weights.lambda_u * u[d] + weights.lambda_c * c[d])
        .collect()
}

/// Negative log-likelihood of the purchases under the softmax over
/// candidate scores, computed without the library.
pub fn oracle_nll(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
) -> f64 {
    let ctx = oracle_context(store, catalog, entry, weights);
    let scores: Vec<f64> = entry
        .candidates
        .iter()
        .map(|&i| {
            mean_vec(store, catalog.title(i))
                .iter()
                .zip(&ctx)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    entry
        .candidates
        .iter()
        .zip(&scores)
        .filter(|(i, _)| entry.purchased.contains(i))
        .map(|(_, s)| log_z - s)
        .sum()
}

/// Relative error between an analytic gradient and a central difference,
/// over every word and user coordinate.
pub fn max_gradient_error(
    store: &EmbeddingStore,
    catalog: &Catalog,
    entry: &TrainingEntry,
    weights: ContextWeights,
    h: f64,
) -> f64 {
    let grads = ctxrank::cem::entry_gradients(store, catalog, entry, weights).unwrap();
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    let mut record = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    };
    for w in store.vocab() {
        let base = store.word(w).unwrap().to_vec();
        for d in 0..store.dim() {
            let mut v = base.clone();
            v[d] += h;
            probe.set_word(w, &v).unwrap();
            let plus = oracle_nll(&probe, catalog, entry, weights);
            v[d] = base[d] - h;
            probe.set_word(w, &v).unwrap();
            let minus = oracle_nll(&probe, catalog, entry, weights);
            probe.set_word(w, &base).unwrap();
            record(
                grads.words.get(w).map_or(0.0, |g| g[d]),
                (plus - minus) / (2.0 * h),
            );
        }
    }
    for &u in store.users() {
        let base = store.user(u).unwrap().to_vec();
        for d in 0..store.dim() {
            let mut v = base.clone();
            v[d] += h;
            probe.set_user(u, &v).unwrap();
            let plus = oracle_nll(&probe, catalog, entry, weights);
            v[d] = base[d] - h;
            probe.set_user(u, &v).unwrap();
            let minus = oracle_nll(&probe, catalog, entry, weights);
            probe.set_user(u, &base).unwrap();
            record(
                grads.users.get(&u).map_or(0.0, |g| g[d]),
                (plus - minus) / (2.0 * h),
            );
        }
    }
    worst
}

/// Two-sided Student-t p-values from 50-digit evaluations of
/// `I_{df/(df+t²)}(df/2, 1/2)`, as `(n, t, p)` with `df = n − 1`.
pub const T_REFERENCE: [(usize, f64, f64); 50] = [
    (10, 2.262, 0.05001284550245463),
    (2, 0.0, 1.0),
    (2, 3.0, 0.20483276469913345),
    (2, 1.0, 0.5),
    (3, 0.1, 0.92946543841414017),
    (3, 5.0, 0.037749551350623726),
    (3, 1.5, 0.27239312489100108),
    (4, 0.5, 0.65144796484815099),
    (4, 10.0, 0.0021283990584141501),
    (4, 2.0, 0.13932596855884318),
    (5, 1.0, 0.37390096630005889),
    (5, 50.0, 9.5744536569696984e-7),
    (5, 2.262, 0.086488951418316501),
    (6, 1.5, 0.19390368024247343),
    (6, 0.0, 1.0),
    (6, 3.0, 0.030099247897462574),
    (8, 2.0, 0.085619328562976077),
    (8, 0.1, 0.92314805960479239),
    (8, 5.0, 0.0015652779531728246),
    (10, 0.5, 0.62907129982602648),
    (10, 10.0, 3.5782374319247358e-6),
    (11, 3.0, 0.013343655022569577),
    (11, 1.0, 0.34089313230205987),
    (11, 50.0, 2.47431032930268e-13),
    (15, 5.0, 0.00019451530625726602),
    (15, 1.5, 0.15582531809717684),
    (15, 0.0, 1.0),
    (20, 10.0, 5.2630261623359003e-9),
    (20, 2.0, 0.060002036386098366),
    (20, 0.1, 0.92139194976525448),
    (30, 50.0, 1.0748623985572458e-29),
    (30, 2.262, 0.031367016819064423),
    (30, 0.5, 0.62084808419378136),
    (50, 0.0, 1.0),
    (50, 3.0, 0.0042358962301445846),
    (50, 1.0, 0.3222234059506756),
    (100, 0.1, 0.92054655073758228),
    (100, 5.0, 2.4813960130409478e-6),
    (100, 1.5, 0.13679681771597331),
    (500, 0.5, 0.61729549078446077),
    (500, 10.0, 1.3971925705270383e-21),
    (500, 2.0, 0.046041766787855944),
    (1000, 1.0, 0.31755266017641238),
    (1000, 50.0, 3.6127632476763508e-274),
    (1000, 2.262, 0.023911601642767841),
    (5000, 1.5, 0.13367755248270206),
    (5000, 0.0, 1.0),
    (5000, 3.0, 0.0027131116908948996),
    (7, -2.5, 0.046528232284167311),
    (12, -0.75, 0.46899275331120924),
];
