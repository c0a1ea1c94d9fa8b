//! Correctness-forecasting comparison across training-set sizes.
//!
//! Smaller training sets are nested prefixes of one seeded shuffle of the
//! training questions. For every size each algorithm is tuned on the fixed
//! validation set (embedding dimension for MF, `k` for KNN) and the chosen
//! setting is scored on the fixed test set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{CorrectnessDataset, QuestionEmbeddingTable, SplitAssignment};
use crate::error::{Error, Result};
use crate::knn::{knn_accuracy_on, KnnConfig};
use crate::mf::{test_accuracy, train, MfParams, TrainConfig};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mf,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub algorithm: Algorithm,
    pub train_questions: usize,
    /// Embedding dimension (MF) or neighbour count (KNN).
    pub chosen: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    /// Training-set sizes in questions; `None` means the full training split.
    pub subset_sizes: Vec<Option<usize>>,
    pub mf_dims: Vec<usize>,
    pub knn_ks: Vec<usize>,
    pub train: TrainConfig,
    pub subset_seed: u64,
}

/// Nested random subsets of `train` with the requested sizes.
pub fn nested_subsets(
    train: &[usize],
    sizes: &[Option<usize>],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut shuffled = train.to_vec();
    shuffled.shuffle(&mut rng_from_seed(seed));
    sizes
        .iter()
        .map(|s| {
            let k = s.unwrap_or(train.len());
            if k == 0 || k > train.len() {
                return Err(Error::Config(format!(
                    "subset size {k} outside 1..={}",
                    train.len()
                )));
            }
            let mut sub = shuffled[..k].to_vec();
            sub.sort_unstable();
            Ok(sub)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TunedMf {
    pub params: MfParams,
    pub embed_dim: usize,
    pub validation_accuracy: f64,
}

/// Train one model per candidate dimension; keep the best on validation
/// (smallest dimension on ties).
pub fn tune_mf(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    dims: &[usize],
    base: &TrainConfig,
) -> Result<TunedMf> {
    if dims.is_empty() {
        return Err(Error::Config("no MF dimensions to tune over".into()));
    }
    let mut best: Option<TunedMf> = None;
    for &d in dims {
        let cfg = TrainConfig {
            embed_dim: d,
            ..base.clone()
        };
        let (params, history) = train(dataset, embeddings, split, &cfg)?;
        let val = history.val_accuracy[history.best_epoch];
        let better = match &best {
            None => true,
            Some(b) => {
                val > b.validation_accuracy || (val == b.validation_accuracy && d < b.embed_dim)
            }
        };
        if better {
            best = Some(TunedMf {
                params,
                embed_dim: d,
                validation_accuracy: val,
            });
        }
    }
    Ok(best.expect("dims nonempty"))
}

/// Best `k` on validation (smallest on ties), skipping `k` larger than the pool.
pub fn tune_knn(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    ks: &[usize],
) -> Result<(KnnConfig, f64)> {
    let mut best: Option<(KnnConfig, f64)> = None;
    for &k in ks.iter().filter(|&&k| k >= 1 && k <= split.train.len()) {
        let cfg = KnnConfig::new(k);
        let val = knn_accuracy_on(dataset, embeddings, &split.train, &split.validation, &cfg)?;
        let better = match &best {
            None => true,
            Some((b, v)) => val > *v || (val == *v && k < b.k),
        };
        if better {
            best = Some((cfg, val));
        }
    }
    best.ok_or_else(|| Error::Config("no usable k for the training pool".into()))
}

pub fn forecast_table(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    config: &ForecastConfig,
) -> Result<Vec<ForecastRow>> {
    if split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Config(
            "forecast comparison needs validation and test questions".into(),
        ));
    }
    let subsets = nested_subsets(&split.train, &config.subset_sizes, config.subset_seed)?;
    let mut rows = Vec::new();
    for train_subset in subsets {
        let sub_split = SplitAssignment {
            train: train_subset,
            ..split.clone()
        };
        if !config.mf_dims.is_empty() {
            let tuned = tune_mf(
                dataset,
                embeddings,
                &sub_split,
                &config.mf_dims,
                &config.train,
            )?;
            rows.push(ForecastRow {
                algorithm: Algorithm::Mf,
                train_questions: sub_split.train.len(),
                chosen: tuned.embed_dim,
                validation_accuracy: tuned.validation_accuracy,
                test_accuracy: test_accuracy(&tuned.params, dataset, embeddings, &split.test)?,
            });
        }
        if !config.knn_ks.is_empty() {
            let (cfg, val) = tune_knn(dataset, embeddings, &sub_split, &config.knn_ks)?;
            rows.push(ForecastRow {
                algorithm: Algorithm::Knn,
                train_questions: sub_split.train.len(),
                chosen: cfg.k,
                validation_accuracy: val,
                test_accuracy: knn_accuracy_on(
                    dataset,
                    embeddings,
                    &sub_split.train,
                    &split.test,
                    &cfg,
                )?,
            });
        }
    }
    Ok(rows)
}
