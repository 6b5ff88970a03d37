//! Runs the built-in correctness checks, then shows that a deliberately
//! broken NDCG is caught by the metric oracle check.
//!
//! cargo run --release --example selftest

use std::collections::BTreeSet;

use ctxrank::harness::selftest::{run_selftest, run_selftest_with, MetricFns};
use ctxrank::metrics::ndcg;

fn broken_ndcg(ranked: &[u64], relevant: &BTreeSet<u64>, k: usize) -> f64 {
    ndcg(ranked, relevant, k + 1)
}

fn main() {
    println!("{}\n", run_selftest());
    let fns = MetricFns {
        ndcg: broken_ndcg,
        ..MetricFns::default()
    };
    println!(
        "with an off-by-one NDCG cutoff:\n{}",
        run_selftest_with(&fns)
    );
}
