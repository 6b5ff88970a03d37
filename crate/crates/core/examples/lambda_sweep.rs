//! Sweeps the click-context weight and reports how re-ranking quality and
//! its rank correlation with the weight change.
//!
//! cargo run --release --example lambda_sweep

use ctxrank::harness::{run_sweep, spearman, Dataset, ExperimentConfig, SweepParam, SweepSpec};
use ctxrank::metrics::Metric;

fn main() -> ctxrank::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 10;
    let ds = Dataset::synthetic(&cfg, 1)?;
    let spec = SweepSpec::with_default_grid(SweepParam::LambdaC);
    let table = run_sweep(&ds, &cfg, &spec)?;
    print!("{}", table.to_csv());
    for method in &table.methods {
        let rho = spearman(&table.values(), &table.series(method, Metric::Mrr));
        println!("{method}: Spearman correlation of MRR with the grid value {rho:.3}");
    }
    Ok(())
}
