//! Benchmark accuracy prediction from model embeddings and the
//! benchmark-contribution ablation.
//!
//! For a target benchmark, model embeddings are learned without its
//! questions. Over repeated random train/test splits of the *models*, a ridge
//! regression maps embeddings to per-model accuracy on the target, and
//! Kendall's tau checks whether the held-out ordering is recovered.
//!
//! The contribution of benchmark `i` to predicting benchmark `j` is the
//! increase in total test MSE when `i` is also dropped from training:
//! `C[i][j] = e_removed - e_added`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    accuracy_by_model, random_partition, split_questions, CorrectnessDataset,
    QuestionEmbeddingTable,
};
use crate::error::{Error, Result};
use crate::kendall::kendall_tau;
use crate::matrix::Matrix;
use crate::mf::{train, MfParams, TrainConfig};
use crate::ridge::fit_regression;
use crate::rng::derive_seed;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub n_splits: usize,
    pub lambda: f64,
    /// Share of models used to fit each regression.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            n_splits: 100,
            lambda: 1e-2,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    /// `None` when the held-out accuracies (or predictions) are all tied.
    pub tau: Option<f64>,
    pub p_value: Option<f64>,
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPredictionReport {
    pub benchmark: String,
    pub n_splits: usize,
    /// Splits with p < 0.05.
    pub significance_count: usize,
    pub mean_test_mse: f64,
    pub total_test_mse: f64,
    pub splits: Vec<SplitOutcome>,
}

/// Repeated-split regression of `accuracies` on `embeddings` rows.
pub fn predict_from_embeddings(
    embeddings: &Matrix,
    accuracies: &[f64],
    benchmark: &str,
    config: &PredictionConfig,
) -> Result<BenchmarkPredictionReport> {
    let m = embeddings.rows();
    if accuracies.len() != m {
        return Err(Error::Domain(format!(
            "{} accuracies for {m} embedded models",
            accuracies.len()
        )));
    }
    if config.n_splits == 0 {
        return Err(Error::Config("n_splits must be at least 1".into()));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Domain("accuracies must lie in [0, 1]".into()));
    }
    let ratios = [config.train_fraction, 1.0 - config.train_fraction];
    let mut splits = Vec::with_capacity(config.n_splits);
    for s in 0..config.n_splits {
        let parts = random_partition(m, &ratios, derive_seed(config.seed, &[s as u64]))?;
        let (train_idx, test_idx) = (&parts[0], &parts[1]);
        if test_idx.len() < 2 || train_idx.len() < 2 {
            return Err(Error::Split(format!(
                "{m} models give {} train / {} held-out models; both sides need at least 2",
                train_idx.len(),
                test_idx.len()
            )));
        }
        let y_train: Vec<f64> = train_idx.iter().map(|&i| accuracies[i]).collect();
        let y_test: Vec<f64> = test_idx.iter().map(|&i| accuracies[i]).collect();
        let fit = fit_regression(&embeddings.select_rows(train_idx), &y_train, config.lambda)?;
        let pred = fit.predict_rows(&embeddings.select_rows(test_idx));
        let test_mse = pred
            .iter()
            .zip(&y_test)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / y_test.len() as f64;
        let (tau, p_value) = match kendall_tau(&pred, &y_test) {
            Ok(r) => (Some(r.tau), Some(r.p_value)),
            Err(Error::UndefinedTau(_)) => (None, None),
            Err(e) => return Err(e),
        };
        splits.push(SplitOutcome {
            tau,
            p_value,
            test_mse,
        });
    }
    let significance_count = splits
        .iter()
        .filter(|s| s.p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL))
        .count();
    let total_test_mse: f64 = splits.iter().map(|s| s.test_mse).sum();
    Ok(BenchmarkPredictionReport {
        benchmark: benchmark.to_owned(),
        n_splits: config.n_splits,
        significance_count,
        mean_test_mse: total_test_mse / config.n_splits as f64,
        total_test_mse,
        splits,
    })
}

/// How model embeddings are obtained for benchmark prediction.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    /// Precomputed rows, one per dataset model.
    Supplied(Matrix),
    /// Train on every benchmark except the target and `exclude`.
    LeaveOut {
        train: TrainConfig,
        split_ratios: (f64, f64, f64),
        split_seed: u64,
        exclude: Vec<usize>,
    },
}

/// Train on the questions of `keep` only. Every model must keep at least one
/// training record.
pub fn train_on_benchmarks(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    keep: &[usize],
    train_config: &TrainConfig,
    split_ratios: (f64, f64, f64),
    split_seed: u64,
) -> Result<MfParams> {
    let (sub, question_map) = dataset.restrict_to_benchmarks(keep);
    if sub.n_questions() == 0 {
        return Err(Error::Coverage("leave-out set has no questions".into()));
    }
    let sub_emb = embeddings.select(&question_map);
    let split = split_questions(&sub, split_ratios, split_seed)?;
    let mut in_train = vec![false; sub.n_questions()];
    split.train.iter().for_each(|&q| in_train[q] = true);
    let mut covered = vec![false; sub.n_models()];
    for r in sub.records() {
        if in_train[r.question] {
            covered[r.model] = true;
        }
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::Coverage(format!(
            "model `{}` has no training questions once {:?} are left out",
            dataset.model_ids()[i],
            (0..dataset.benchmarks().len())
                .filter(|b| !keep.contains(b))
                .map(|b| dataset.benchmarks()[b].as_str())
                .collect::<Vec<_>>()
        )));
    }
    train(&sub, &sub_emb, &split, train_config).map(|(p, _)| p)
}

fn target_index(dataset: &CorrectnessDataset, target: &str) -> Result<usize> {
    dataset
        .benchmark_index(target)
        .ok_or_else(|| Error::Domain(format!("unknown benchmark `{target}`")))
}

/// Predict per-model accuracy on `target` from embeddings that never saw it.
pub fn predict_benchmark(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    target: &str,
    source: &EmbeddingSource,
    config: &PredictionConfig,
) -> Result<(BenchmarkPredictionReport, Matrix)> {
    let t = target_index(dataset, target)?;
    let accuracies = accuracy_by_model(dataset, &dataset.questions_in_benchmark(t))?;
    let model_embeddings = match source {
        EmbeddingSource::Supplied(e) => {
            if e.rows() != dataset.n_models() {
                return Err(Error::Domain(format!(
                    "{} embedding rows for {} models",
                    e.rows(),
                    dataset.n_models()
                )));
            }
            e.clone()
        }
        EmbeddingSource::LeaveOut {
            train,
            split_ratios,
            split_seed,
            exclude,
        } => {
            let keep: Vec<usize> = (0..dataset.benchmarks().len())
                .filter(|b| *b != t && !exclude.contains(b))
                .collect();
            train_on_benchmarks(
                dataset,
                embeddings,
                &keep,
                train,
                *split_ratios,
                *split_seed,
            )?
            .model_table
        }
    };
    let report = predict_from_embeddings(&model_embeddings, &accuracies, target, config)?;
    Ok((report, model_embeddings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionConfig {
    pub train: TrainConfig,
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    pub prediction: PredictionConfig,
}

impl Default for ContributionConfig {
    fn default() -> Self {
        ContributionConfig {
            train: TrainConfig::default(),
            split_ratios: (0.8, 0.1, 0.1),
            split_seed: 0,
            prediction: PredictionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMatrix {
    pub benchmarks: Vec<String>,
    /// `values[i][j]`: contribution of benchmark `i` to predicting benchmark `j`.
    pub values: Vec<Vec<f64>>,
    /// Total effect of adding each benchmark to the others' training data.
    pub row_sums: Vec<f64>,
    /// Total gain in predicting each benchmark from all the others.
    pub col_sums: Vec<f64>,
    /// Total test MSE predicting `j` with only `j` left out.
    pub e_added: Vec<f64>,
    /// Total test MSE predicting `j` with `i` and `j` left out (diagonal 0).
    pub e_removed: Vec<Vec<f64>>,
}

impl ContributionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("contributor");
        for b in &self.benchmarks {
            out.push(',');
            out.push_str(b);
        }
        out.push('\n');
        for (b, row) in self.benchmarks.iter().zip(&self.values) {
            out.push_str(b);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Leave-out sets are keyed by the sorted benchmarks they drop, so the same
/// set always trains with the same seeds.
fn leave_out_seed(base: u64, dropped: &[usize]) -> u64 {
    let path: Vec<u64> = dropped.iter().map(|&b| b as u64).collect();
    derive_seed(base, &path)
}

/// Fill the contribution matrix over `benchmarks` (indices into the dataset's
/// benchmark list). Benchmarks outside the list are ignored entirely.
///
/// Every trained embedding set and every regression split draws from its own
/// seed stream, so cells can be computed in any order or in parallel with
/// identical results. Model splits for target `j` are shared between the
/// "added" and "removed" runs so the two errors are paired.
pub fn contribution_matrix(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    benchmarks: &[usize],
    config: &ContributionConfig,
) -> Result<ContributionMatrix> {
    let n = benchmarks.len();
    if n < 3 {
        return Err(Error::Domain(format!(
            "need at least 3 benchmarks, got {n}"
        )));
    }
    let mut uniq = benchmarks.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != n || uniq.iter().any(|&b| b >= dataset.benchmarks().len()) {
        return Err(Error::Domain(
            "benchmark list has duplicates or unknown entries".into(),
        ));
    }

    // every distinct leave-out set: {j} and {i, j}
    let mut jobs: Vec<Vec<usize>> = Vec::new();
    for a in 0..n {
        jobs.push(vec![benchmarks[a]]);
        for b in a + 1..n {
            let mut pair = vec![benchmarks[a], benchmarks[b]];
            pair.sort_unstable();
            jobs.push(pair);
        }
    }
    let trained: Vec<Result<(Vec<usize>, Matrix)>> = jobs
        .par_iter()
        .map(|dropped| {
            let keep: Vec<usize> = benchmarks
                .iter()
                .copied()
                .filter(|b| !dropped.contains(b))
                .collect();
            let train_cfg = TrainConfig {
                seed: leave_out_seed(config.train.seed, dropped),
                ..config.train.clone()
            };
            let params = train_on_benchmarks(
                dataset,
                embeddings,
                &keep,
                &train_cfg,
                config.split_ratios,
                leave_out_seed(config.split_seed, dropped),
            )?;
            Ok((dropped.clone(), params.model_table))
        })
        .collect();
    let mut by_set: BTreeMap<Vec<usize>, Matrix> = BTreeMap::new();
    for r in trained {
        let (k, v) = r?;
        by_set.insert(k, v);
    }

    let accuracies: Vec<Vec<f64>> = benchmarks
        .iter()
        .map(|&b| accuracy_by_model(dataset, &dataset.questions_in_benchmark(b)))
        .collect::<Result<_>>()?;
    let target_config = |j: usize| PredictionConfig {
        seed: derive_seed(config.prediction.seed, &[benchmarks[j] as u64]),
        ..config.prediction.clone()
    };
    let name = |j: usize| dataset.benchmarks()[benchmarks[j]].clone();

    let e_added: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let emb = &by_set[&vec![benchmarks[j]]];
            predict_from_embeddings(emb, &accuracies[j], &name(j), &target_config(j))
                .map(|r| r.total_test_mse)
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let removed: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut key = vec![benchmarks[i], benchmarks[j]];
            key.sort_unstable();
            predict_from_embeddings(&by_set[&key], &accuracies[j], &name(j), &target_config(j))
                .map(|r| r.total_test_mse)
        })
        .collect::<Result<_>>()?;

    let mut values = vec![vec![0.0; n]; n];
    let mut e_removed = vec![vec![0.0; n]; n];
    for (&(i, j), &e) in cells.iter().zip(&removed) {
        e_removed[i][j] = e;
        values[i][j] = e - e_added[j];
    }
    let row_sums = values.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..n).map(|j| values.iter().map(|r| r[j]).sum()).collect();
    Ok(ContributionMatrix {
        benchmarks: (0..n).map(name).collect(),
        values,
        row_sums,
        col_sums,
        e_added,
        e_removed,
    })
}
