//! Query likelihood and relevance-model feedback on one test entry: the
//! expansion terms drawn from clicks and how each lexical method orders the
//! candidates.
//!
//! cargo run --release --example lexical_baselines

use ctxrank::harness::{Dataset, ExperimentConfig};
use ctxrank::lexical::{
    pop_rank, ql_rank, rand_rank, rm3_rank, ExpandedQuery, Rm3Params, DEFAULT_MU,
};
use ctxrank::metrics::reciprocal_rank;

fn main() -> ctxrank::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.generator.n_sessions = 3000;
    let ds = Dataset::synthetic(&cfg, 2)?;
    let entry = ds
        .test_entries
        .iter()
        .find(|e| e.user_id.is_some() && !e.clicked.is_empty())
        .expect("a test entry with a known user");

    let clicked: Vec<Vec<String>> = entry
        .clicked
        .iter()
        .map(|&i| ds.catalog.title(i).to_vec())
        .collect();
    let params = Rm3Params::default();
    let expanded = ExpandedQuery::new(&ds.index, &entry.query, &clicked, &params)?;
    let mut terms: Vec<(String, f64)> = expanded.distribution().into_iter().collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!(
        "query {:?}; top expansion terms from {} clicked titles:",
        entry.query,
        clicked.len()
    );
    for (t, w) in terms.iter().take(8) {
        println!("  {t:<10} {w:.4}");
    }

    let purchases = ds
        .history
        .feedback_docs(&ds.catalog, entry.user_id, entry.week);
    let lc_params = Rm3Params {
        alpha: 0.8,
        ..params
    };
    let orders = [
        ("PROD-proxy", entry.candidates.clone()),
        (
            "RAND",
            rand_rank(&entry.candidates, cfg.rand_seed, entry.id.key()),
        ),
        ("POP", pop_rank(&ds.catalog, &entry.candidates)),
        (
            "QL",
            ql_rank(&ds.index, &entry.query, &entry.candidates, DEFAULT_MU)?,
        ),
        (
            "LCRM3",
            rm3_rank(
                &ds.index,
                &entry.query,
                &purchases,
                &lc_params,
                &entry.candidates,
            )?,
        ),
        (
            "SCRM3",
            rm3_rank(
                &ds.index,
                &entry.query,
                &clicked,
                &params,
                &entry.candidates,
            )?,
        ),
    ];
    println!(
        "\n{} candidates, {} earlier purchases as long-term feedback",
        entry.candidates.len(),
        purchases.len()
    );
    for (name, order) in orders {
        println!(
            "{name:<11} reciprocal rank {:.4}",
            reciprocal_rank(&order, &entry.purchased)
        );
    }
    Ok(())
}
