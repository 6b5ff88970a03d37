use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;
use crate::session::UserId;

use super::{ContextWeights, TrainConfig};

/// Word and user embedding tables; the learnable parameters.
///
/// Rows are stored row-major in vocabulary order, and the vocabulary and
/// user roster are kept sorted so a store serializes canonically.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vocab: Vec<String>,
    word_index: HashMap<String, usize>,
    pub(crate) word_vecs: Vec<f64>,
    users: Vec<UserId>,
    user_index: HashMap<UserId, usize>,
    pub(crate) user_vecs: Vec<f64>,
}

impl EmbeddingStore {
    /// A zero-initialized store over the given words and users. Duplicates
    /// are collapsed.
    pub fn zeros(
        dim: usize,
        words: impl IntoIterator<Item = String>,
        users: impl IntoIterator<Item = UserId>,
    ) -> Self {
        let mut vocab: Vec<String> = words.into_iter().collect();
        vocab.sort_unstable();
        vocab.dedup();
        let mut users: Vec<UserId> = users.into_iter().collect();
        users.sort_unstable();
        users.dedup();
        let word_index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let user_index = users.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        Self {
            dim,
            word_vecs: vec![0.0; vocab.len() * dim],
            user_vecs: vec![0.0; users.len() * dim],
            vocab,
            word_index,
            users,
            user_index,
        }
    }

    /// Word vectors uniform in `[-0.5/dim, 0.5/dim]`; user vectors zero.
    pub fn initialized(
        dim: usize,
        words: impl IntoIterator<Item = String>,
        users: impl IntoIterator<Item = UserId>,
        seed: u64,
    ) -> Self {
        let mut store = Self::zeros(dim, words, users);
        let mut rng = PortableRng::new(seed);
        let scale = 0.5 / dim as f64;
        store
            .word_vecs
            .iter_mut()
            .for_each(|x| *x = rng.uniform(-scale, scale));
        store
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn user_slot(&self, user: UserId) -> Option<usize> {
        self.user_index.get(&user).copied()
    }

    pub fn word(&self, word: &str) -> Option<&[f64]> {
        self.word_id(word).map(|i| self.word_row(i))
    }

    pub fn user(&self, user: UserId) -> Option<&[f64]> {
        self.user_slot(user).map(|i| self.user_row(i))
    }

    pub(crate) fn word_row(&self, i: usize) -> &[f64] {
        &self.word_vecs[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn user_row(&self, i: usize) -> &[f64] {
        &self.user_vecs[i * self.dim..(i + 1) * self.dim]
    }

    /// Overwrites a word vector. Errors on OOV words or a wrong length.
    pub fn set_word(&mut self, word: &str, vec: &[f64]) -> Result<()> {
        let i = self
            .word_id(word)
            .ok_or_else(|| Error::Argument(format!("unknown word {word:?}")))?;
        self.check_len(vec)?;
        self.word_vecs[i * self.dim..(i + 1) * self.dim].copy_from_slice(vec);
        Ok(())
    }

    pub fn set_user(&mut self, user: UserId, vec: &[f64]) -> Result<()> {
        let i = self
            .user_slot(user)
            .ok_or_else(|| Error::Argument(format!("unknown user {user}")))?;
        self.check_len(vec)?;
        self.user_vecs[i * self.dim..(i + 1) * self.dim].copy_from_slice(vec);
        Ok(())
    }

    pub fn clear_users(&mut self) {
        self.user_vecs.iter_mut().for_each(|x| *x = 0.0);
    }

    fn check_len(&self, vec: &[f64]) -> Result<()> {
        if vec.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector has length {}, store dim is {}",
                vec.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Sum of squared norms over every word and user vector.
    pub fn squared_norm(&self) -> f64 {
        self.word_vecs
            .iter()
            .chain(&self.user_vecs)
            .map(|x| x * x)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.word_vecs
            .iter()
            .chain(&self.user_vecs)
            .all(|x| x.is_finite())
    }
}

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dim: usize,
    pub lambda_u: f64,
    pub lambda_c: f64,
    pub vocab: Vec<String>,
    /// Row-major, `vocab.len() * dim` values.
    pub word_vecs: Vec<f64>,
    pub users: Vec<UserId>,
    pub user_vecs: Vec<f64>,
    pub train_config: TrainConfig,
    pub validation_mrr: f64,
}

impl Checkpoint {
    pub fn new(
        store: &EmbeddingStore,
        weights: ContextWeights,
        train_config: TrainConfig,
        validation_mrr: f64,
    ) -> Self {
        Self {
            dim: store.dim,
            lambda_u: weights.lambda_u,
            lambda_c: weights.lambda_c,
            vocab: store.vocab.clone(),
            word_vecs: store.word_vecs.clone(),
            users: store.users.clone(),
            user_vecs: store.user_vecs.clone(),
            train_config,
            validation_mrr,
        }
    }

    pub fn weights(&self) -> Result<ContextWeights> {
        ContextWeights::new(self.lambda_u, self.lambda_c)
    }

    pub fn store(&self) -> Result<EmbeddingStore> {
        if self.word_vecs.len() != self.vocab.len() * self.dim
            || self.user_vecs.len() != self.users.len() * self.dim
        {
            return Err(Error::Data(
                "checkpoint table sizes do not match dim".into(),
            ));
        }
        if !self.vocab.windows(2).all(|w| w[0] < w[1])
            || !self.users.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::Data(
                "checkpoint vocab/users must be sorted and unique".into(),
            ));
        }
        let mut store = EmbeddingStore::zeros(self.dim, self.vocab.clone(), self.users.clone());
        store.word_vecs.copy_from_slice(&self.word_vecs);
        store.user_vecs.copy_from_slice(&self.user_vecs);
        if !store.is_finite() {
            return Err(Error::Data("checkpoint contains non-finite values".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let text = serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
