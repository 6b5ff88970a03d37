//! Trains and evaluates every method on one synthetic corpus and prints the
//! comparison table against the production-ranker proxy. `*` marks
//! differences significant under a paired t-test.
//!
//! cargo run --release --example compare_methods [seed]

use ctxrank::harness::{run_comparison, Dataset, ExperimentConfig, Method};
use ctxrank::metrics::reports_to_table;

fn main() -> ctxrank::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(Ok(1), |s| s.parse())
        .expect("seed must be an integer");
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 10;
    let ds = Dataset::synthetic(&cfg, seed)?;
    println!(
        "seed {seed}: {} training, {} validation and {} test entries",
        ds.train_entries.len(),
        ds.valid_entries.len(),
        ds.test_entries.len()
    );
    let cmp = run_comparison(&ds, &cfg, &cfg.methods, Method::ProdProxy)?;
    print!("{}", reports_to_table(&cmp.reports));
    Ok(())
}
