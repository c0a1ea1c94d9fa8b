//! Correctness-score routing.
//!
//! Each question goes to the model with the highest predicted correctness
//! score. Reports compare that router with the single best model and with a
//! random router that calls every model as often as the score router does
//! (evaluated by its expected accuracy `sum_i pi_i * acc_i`).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{accuracy_by_model, CorrectnessDataset, QuestionEmbeddingTable};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mf::{output_from_projection, project_into, MfParams};

/// Argmax of the correctness score over `model_set`; equal scores go to the
/// lowest model index.
fn argmax_projected(params: &MfParams, h: &[f64], model_set: &[usize]) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for &model in model_set {
        let s = output_from_projection(params, model, h).score;
        if s > best_score || (s == best_score && model < best) {
            best = model;
            best_score = s;
        }
    }
    best
}

fn check_model_set(params: &MfParams, model_set: &[usize]) -> Result<()> {
    if model_set.is_empty() {
        return Err(Error::Domain("model set is empty".into()));
    }
    if let Some(&m) = model_set.iter().find(|&&m| m >= params.n_models()) {
        return Err(Error::Domain(format!("model {m} out of range")));
    }
    Ok(())
}

pub fn route(params: &MfParams, q_vector: &[f64], model_set: &[usize]) -> Result<usize> {
    check_model_set(params, model_set)?;
    if q_vector.len() != params.question_dim() {
        return Err(Error::Domain("question vector dimension mismatch".into()));
    }
    if q_vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("question vector is not finite".into()));
    }
    let mut h = vec![0.0; params.embed_dim()];
    project_into(params, q_vector, &mut h);
    Ok(argmax_projected(params, &h, model_set))
}

/// Route every row of `q_vectors`.
pub fn route_batch(
    params: &MfParams,
    q_vectors: &Matrix,
    model_set: &[usize],
) -> Result<Vec<usize>> {
    check_model_set(params, model_set)?;
    if q_vectors.rows() > 0 && q_vectors.cols() != params.question_dim() {
        return Err(Error::Domain("question vector dimension mismatch".into()));
    }
    let mut h = vec![0.0; params.embed_dim()];
    Ok(q_vectors
        .iter_rows()
        .map(|x| {
            project_into(params, x, &mut h);
            argmax_projected(params, &h, model_set)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples_secs: Vec<f64>,
    pub median_secs: f64,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Route the batch `repeats` times (at least once) on the calling thread,
/// timing each pass with a monotonic clock.
pub fn route_batch_timed(
    params: &MfParams,
    q_vectors: &Matrix,
    model_set: &[usize],
    repeats: usize,
) -> Result<(Vec<usize>, Timing)> {
    let mut samples = Vec::with_capacity(repeats.max(1));
    let mut assignments = Vec::new();
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        assignments = route_batch(params, q_vectors, model_set)?;
        samples.push(start.elapsed());
    }
    let samples_secs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
    Ok((
        assignments,
        Timing {
            median_secs: median(&samples_secs),
            samples_secs,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterAccuracies {
    pub mf: f64,
    pub single_best: f64,
    pub weighted_random: f64,
    /// Fraction of questions answered correctly by at least one model.
    pub oracle_ceiling: f64,
    pub single_best_model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRouting {
    pub benchmark: String,
    pub n_questions: usize,
    pub accuracies: RouterAccuracies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedQuestion {
    pub question: usize,
    pub model: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterReport {
    pub overall: RouterAccuracies,
    pub per_benchmark: Vec<BenchmarkRouting>,
    /// Share of questions routed to each model.
    pub selection_frequencies: Vec<f64>,
    pub routed: Vec<RoutedQuestion>,
}

/// Expected accuracy of a router that calls model `i` with probability `pi[i]`.
pub fn weighted_random_accuracy(pi: &[f64], per_model_accuracy: &[f64]) -> f64 {
    pi.iter().zip(per_model_accuracy).map(|(p, a)| p * a).sum()
}

fn summarize(
    dataset: &CorrectnessDataset,
    questions: &[usize],
    routed: &[RoutedQuestion],
) -> Result<(RouterAccuracies, Vec<f64>)> {
    let m = dataset.n_models();
    let n = questions.len() as f64;
    let per_model = accuracy_by_model(dataset, questions)?;
    let mut counts = vec![0usize; m];
    for r in routed {
        counts[r.model] += 1;
    }
    let pi: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mf = routed.iter().filter(|r| r.correct).count() as f64 / n;
    let (single_best_model, single_best) =
        per_model
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, a)| {
                if a > best.1 {
                    (i, a)
                } else {
                    best
                }
            });
    let solvable = questions
        .iter()
        .filter(|&&q| (0..m).any(|i| dataset.label(i, q) == Some(1)))
        .count();
    Ok((
        RouterAccuracies {
            mf,
            single_best,
            weighted_random: weighted_random_accuracy(&pi, &per_model),
            oracle_ceiling: solvable as f64 / n,
            single_best_model,
        },
        pi,
    ))
}

/// Route every test question over all models and score the router against
/// both baselines, overall and per benchmark. The single-best model is
/// re-chosen within each benchmark.
pub fn router_accuracy(
    params: &MfParams,
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    test_questions: &[usize],
) -> Result<RouterReport> {
    if test_questions.is_empty() {
        return Err(Error::Domain("no test questions".into()));
    }
    let m = dataset.n_models();
    if params.n_models() != m {
        return Err(Error::Domain(format!(
            "parameters cover {} models, dataset has {m}",
            params.n_models()
        )));
    }
    for &q in test_questions {
        if let Some(i) = (0..m).find(|&i| dataset.label(i, q).is_none()) {
            return Err(Error::Coverage(format!(
                "model `{}` has no label for question `{}`",
                dataset.model_ids()[i],
                dataset.question_ids()[q]
            )));
        }
    }
    let all: Vec<usize> = (0..m).collect();
    let mut h = vec![0.0; params.embed_dim()];
    let routed: Vec<RoutedQuestion> = test_questions
        .iter()
        .map(|&q| {
            project_into(params, embeddings.vector(q), &mut h);
            let model = argmax_projected(params, &h, &all);
            RoutedQuestion {
                question: q,
                model,
                correct: dataset.label(model, q) == Some(1),
            }
        })
        .collect();
    let (overall, selection_frequencies) = summarize(dataset, test_questions, &routed)?;

    let mut per_benchmark = Vec::new();
    for (b, name) in dataset.benchmarks().iter().enumerate() {
        let (qs, rs): (Vec<usize>, Vec<RoutedQuestion>) = routed
            .iter()
            .filter(|r| dataset.question_benchmark(r.question) == b)
            .map(|r| (r.question, r.clone()))
            .unzip();
        if qs.is_empty() {
            continue;
        }
        let (accuracies, _) = summarize(dataset, &qs, &rs)?;
        per_benchmark.push(BenchmarkRouting {
            benchmark: name.clone(),
            n_questions: qs.len(),
            accuracies,
        });
    }
    Ok(RouterReport {
        overall,
        per_benchmark,
        selection_frequencies,
        routed,
    })
}
