//! Trains the click-context embedding model and re-ranks a held-out entry.
//!
//! cargo run --release --example train_scem

use ctxrank::cem::{context_vector, score_candidates, train, ContextWeights, TrainConfig};
use ctxrank::harness::{Dataset, ExperimentConfig};

fn main() -> ctxrank::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.generator.n_sessions = 4000;
    let ds = Dataset::synthetic(&cfg, 1)?;
    let train_cfg = TrainConfig {
        dim: 32,
        epochs: 8,
        ..TrainConfig::default()
    };
    let weights = ContextWeights::new(0.0, 1.0)?;
    let out = train(
        &ds.train_entries,
        &ds.valid_entries,
        &ds.catalog,
        &train_cfg,
        weights,
    )?;
    for e in &out.history {
        println!(
            "epoch {:>2}  nll {:.4}  valid MRR {:.4}",
            e.epoch, e.mean_nll, e.valid_mrr
        );
    }
    println!(
        "kept epoch {} (valid MRR {:.4})",
        out.best_epoch, out.best_valid_mrr
    );

    let entry = &ds.test_entries[0];
    let ctx = context_vector(
        &out.store,
        &ds.catalog,
        &entry.query,
        entry.user_id,
        Some(&entry.clicked),
        weights,
    )?;
    let scored = score_candidates(&out.store, &ds.catalog, &ctx, &entry.candidates);
    println!(
        "\nquery {:?}, {} clicked items",
        entry.query,
        entry.clicked.len()
    );
    for (rank, s) in scored.0.iter().take(5).enumerate() {
        let mark = if entry.purchased.contains(&s.item) {
            "  <- purchased"
        } else {
            ""
        };
        println!(
            "{:>2}. item {:>5}  p={:.4}  {}{}",
            rank + 1,
            s.item.0,
            s.prob,
            ds.catalog.title(s.item).join(" "),
            mark
        );
    }
    Ok(())
}
