//! Nearest-neighbour correctness forecaster.
//!
//! A model's label on an unseen question is the majority of its labels on the
//! `k` closest training questions. Neighbours are ordered by distance, then by
//! lowest question index; an even split of votes predicts 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CorrectnessDataset, QuestionEmbeddingTable, SplitAssignment};
use crate::error::{Error, Result};
use crate::matrix::{dot, squared_distance};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    #[default]
    SquaredEuclidean,
    Cosine,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::SquaredEuclidean => squared_distance(a, b),
            Distance::Cosine => {
                let denom = (dot(a, a) * dot(b, b)).sqrt();
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - dot(a, b) / denom
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    #[serde(default)]
    pub distance: Distance,
}

impl KnnConfig {
    pub fn new(k: usize) -> Self {
        KnnConfig {
            k,
            distance: Distance::default(),
        }
    }
}

/// Candidate questions sorted by `(distance, question index)`.
fn ranked_neighbours(
    embeddings: &QuestionEmbeddingTable,
    candidates: &[usize],
    query: &[f64],
    distance: Distance,
) -> Vec<(f64, usize)> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&q| (distance.eval(query, embeddings.vector(q)), q))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored
}

#[inline]
fn majority(ones: usize, k: usize) -> u8 {
    u8::from(2 * ones >= k)
}

fn vote(
    dataset: &CorrectnessDataset,
    model: usize,
    ranked: &[(f64, usize)],
    k: usize,
) -> Option<u8> {
    let mut used = 0;
    let mut ones = 0;
    for &(_, q) in ranked {
        if let Some(l) = dataset.label(model, q) {
            used += 1;
            ones += l as usize;
            if used == k {
                return Some(majority(ones, k));
            }
        }
    }
    None
}

/// Predict `model_id`'s label on `query_vector` from its labels on the
/// `k` nearest of `train_questions`. Questions the model has no label for
/// are skipped.
pub fn knn_predict(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    train_questions: &[usize],
    model_id: usize,
    query_vector: &[f64],
    config: &KnnConfig,
) -> Result<u8> {
    if config.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if model_id >= dataset.n_models() {
        return Err(Error::Domain(format!("model {model_id} out of range")));
    }
    if query_vector.len() != embeddings.dim() {
        return Err(Error::Domain(
            "query dimension does not match embeddings".into(),
        ));
    }
    let ranked = ranked_neighbours(embeddings, train_questions, query_vector, config.distance);
    vote(dataset, model_id, &ranked, config.k).ok_or_else(|| {
        Error::Config(format!(
            "k={} exceeds the labelled neighbours available to model {model_id}",
            config.k
        ))
    })
}

/// Fraction of test records whose label is reproduced by [`knn_predict`]
/// with the training questions as the neighbour pool.
pub fn knn_accuracy(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    config: &KnnConfig,
) -> Result<f64> {
    knn_accuracy_on(dataset, embeddings, &split.train, &split.test, config)
}

/// As [`knn_accuracy`], with explicit neighbour pool and evaluation set.
pub fn knn_accuracy_on(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    pool: &[usize],
    eval_questions: &[usize],
    config: &KnnConfig,
) -> Result<f64> {
    if config.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if eval_questions.is_empty() {
        return Err(Error::Domain("test set is empty".into()));
    }
    let per_question: Vec<Result<(usize, usize)>> = eval_questions
        .par_iter()
        .map(|&q| {
            let ranked = ranked_neighbours(embeddings, pool, embeddings.vector(q), config.distance);
            let mut hits = 0;
            let mut total = 0;
            for model in 0..dataset.n_models() {
                let Some(label) = dataset.label(model, q) else {
                    continue;
                };
                let pred = vote(dataset, model, &ranked, config.k).ok_or_else(|| {
                    Error::Config(format!(
                        "k={} exceeds the labelled neighbours available to model {model}",
                        config.k
                    ))
                })?;
                hits += usize::from(pred == label);
                total += 1;
            }
            Ok((hits, total))
        })
        .collect();
    let mut hits = 0;
    let mut total = 0;
    for r in per_question {
        let (h, t) = r?;
        hits += h;
        total += t;
    }
    if total == 0 {
        return Err(Error::Domain("test set has no records".into()));
    }
    Ok(hits as f64 / total as f64)
}
