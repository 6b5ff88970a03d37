//! Ranking metrics on hand-built lists and a paired t-test between two
//! per-query score columns.
//!
//! cargo run --example metrics_and_ttest

use std::collections::BTreeSet;

use ctxrank::metrics::{
    average_precision, ndcg, reciprocal_rank, MAP_CUTOFF, NDCG_CUTOFF, SIGNIFICANCE_LEVEL,
};
use ctxrank::stats::paired_t_test;

fn main() -> ctxrank::Result<()> {
    let ranked = ["a", "b", "c", "d", "e", "f"];
    for relevant in [vec!["c"], vec!["a", "d"], vec!["f", "e"], vec!["z"]] {
        let rel: BTreeSet<&str> = relevant.iter().copied().collect();
        println!(
            "relevant {:<12} AP {:.4}  RR {:.4}  NDCG@10 {:.4}",
            format!("{relevant:?}"),
            average_precision(&ranked, &rel, MAP_CUTOFF),
            reciprocal_rank(&ranked, &rel),
            ndcg(&ranked, &rel, NDCG_CUTOFF)
        );
    }

    let baseline = [0.50, 0.33, 1.00, 0.25, 0.20, 0.50, 0.14, 1.00, 0.33, 0.50];
    let improved = [1.00, 0.50, 1.00, 0.33, 0.25, 1.00, 0.20, 1.00, 0.50, 0.50];
    let test = paired_t_test(&improved, &baseline)?;
    println!(
        "\npaired t-test: t = {:.4}, df = {}, p = {:.3e}, significant at {}: {}",
        test.t,
        test.df,
        test.p,
        SIGNIFICANCE_LEVEL,
        test.p <= SIGNIFICANCE_LEVEL
    );
    Ok(())
}
