//! Context-aware embedding model.
//!
//! One model family covers four dependency assumptions through the context
//! weights `(λu, λc)`:
//!
//! | variant | λu | λc | context |
//! |---------|----|----|---------|
//! | QEM     | 0  | 0  | query only |
//! | LCEM    | >0 | 0  | query + user (long-term) |
//! | SCEM    | 0  | >0 | query + clicks (short-term) |
//! | LSCEM   | >0 | >0 | query + user + clicks |

mod model;
mod store;
mod train;

pub use model::{
    context_vector, embed_clicks, embed_tokens, entry_gradients, entry_loss, rank_entry,
    score_candidates, softmax, ContextWeights, Gradients, ScoredItem, ScoredList,
};
pub use store::{Checkpoint, EmbeddingStore};
pub use train::{
    clip_by_global_norm, train, train_from, training_vocab, EpochStats, TrainConfig, TrainOutcome,
};
