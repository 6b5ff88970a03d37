//! Generates a small synthetic corpus, prints its statistics and walks one
//! session through candidate-set construction.
//!
//! cargo run --release --example generate_corpus

use ctxrank::session::{build_candidate_set, split_subsessions};
use ctxrank::synth::{generate_corpus, generate_sessions, CorpusStats, GenConfig};

fn main() -> ctxrank::Result<()> {
    let gen = GenConfig {
        n_sessions: 2000,
        n_products: 800,
        n_users: 200,
        ..GenConfig::default()
    };
    let (catalog, users, world) = generate_corpus(&gen)?;
    let sessions = generate_sessions(&gen, &catalog, &world)?;
    let stats = CorpusStats::compute(&catalog, &sessions);
    println!(
        "{} products, {} users, {} sessions",
        stats.products,
        users.len(),
        stats.sessions
    );
    println!(
        "avg pages {:.2}, clicks/page {:.2}, purchases {:.2}, title length {:.2}",
        stats.avg_pages, stats.avg_clicks_per_page, stats.avg_purchases, stats.avg_title_len
    );

    let s = &sessions[0];
    println!(
        "\nsession {} (week {}, user {:?}), query {:?}",
        s.session_id, s.week, s.user_id, s.query
    );
    for p in &s.pages {
        println!(
            "  page {}: {} items, clicks {:?}, purchases {:?}",
            p.page_no,
            p.items.len(),
            p.clicks.iter().map(|i| i.0).collect::<Vec<_>>(),
            p.purchases.iter().map(|i| i.0).collect::<Vec<_>>()
        );
    }
    let cands = build_candidate_set(s, 1, 5)?;
    println!(
        "after page 1 the candidate set holds {} unseen items",
        cands.len()
    );
    for e in split_subsessions(s, 5) {
        println!(
            "  entry t={}: {} clicks so far, {} candidates, {} purchased",
            e.t,
            e.clicked.len(),
            e.candidates.len(),
            e.purchased.len()
        );
    }
    Ok(())
}
