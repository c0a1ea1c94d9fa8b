//! Planted-truth synthetic worlds.
//!
//! True parameters are drawn like a fresh model (head scaled by 3 so scores
//! move away from 0.5), question vectors are standard normal, and labels come
//! from the true scores. Everything is reproducible from the seed.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CorrectnessDataset, CorrectnessRecord, QuestionEmbeddingTable};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::mf::{
    init_params_with, output_from_projection, project, save_model_embeddings, save_params,
    MfParams, ParamsSidecar, TrainConfig,
};
use crate::rng::derived_rng;

// Keeps generator streams apart from training streams with the same seed.
const STREAM: u64 = 0x5EED_3011D;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    /// 1 iff the true score is at least 0.5.
    #[default]
    Deterministic,
    /// 1 with probability equal to the true score.
    Bernoulli,
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(LabelRule::Deterministic),
            "bernoulli" => Ok(LabelRule::Bernoulli),
            other => Err(Error::Config(format!("unknown label rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_models: usize,
    pub n_questions: usize,
    pub embed_dim: usize,
    pub question_dim: usize,
    pub n_benchmarks: usize,
    pub noise_rate: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
    /// Each benchmark's questions are centred on a random `N(0, I)` direction
    /// scaled by this factor. Zero keeps every benchmark on the same
    /// distribution.
    #[serde(default)]
    pub benchmark_shift: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_models: 20,
            n_questions: 500,
            embed_dim: 8,
            question_dim: 16,
            n_benchmarks: 1,
            noise_rate: 0.0,
            label_rule: LabelRule::Deterministic,
            seed: 0,
            benchmark_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub config: WorldConfig,
    pub truth: MfParams,
    pub embeddings: QuestionEmbeddingTable,
    pub dataset: CorrectnessDataset,
    /// Benchmark index of every question.
    pub benchmark_of: Vec<usize>,
    /// Per-model mean label over all questions, counted during generation.
    pub model_accuracy: Vec<f64>,
}

fn width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

pub fn model_id(i: usize, m: usize) -> String {
    format!("model{i:0w$}", w = width(m))
}

fn question_id(q: usize, n: usize) -> String {
    format!("q{q:0w$}", w = width(n))
}

fn bench_id(b: usize, nb: usize) -> String {
    format!("bench{b:0w$}", w = width(nb))
}

/// Contiguous assignment of `n` questions to `nb` benchmarks.
fn contiguous_benchmarks(n: usize, nb: usize) -> Vec<usize> {
    (0..n).map(|q| q * nb / n).collect()
}

pub fn generate(config: &WorldConfig) -> Result<PlantedWorld> {
    let c = config;
    if c.n_models == 0
        || c.n_questions == 0
        || c.embed_dim == 0
        || c.question_dim == 0
        || c.n_benchmarks == 0
    {
        return Err(Error::Config("world sizes must all be at least 1".into()));
    }
    if c.n_benchmarks > c.n_questions {
        return Err(Error::Config("more benchmarks than questions".into()));
    }
    if !(0.0..0.5).contains(&c.noise_rate) {
        return Err(Error::Config(format!(
            "noise_rate must lie in [0, 0.5), got {}",
            c.noise_rate
        )));
    }
    if !c.benchmark_shift.is_finite() {
        return Err(Error::Config("benchmark_shift must be finite".into()));
    }

    let mut truth = init_params_with(
        c.n_models,
        c.question_dim,
        c.embed_dim,
        &mut derived_rng(c.seed, &[STREAM, 0]),
    )?;
    truth
        .head_weight
        .as_mut_slice()
        .iter_mut()
        .for_each(|w| *w *= 3.0);

    let benchmark_of = contiguous_benchmarks(c.n_questions, c.n_benchmarks);
    let mut shift_rng = derived_rng(c.seed, &[STREAM, 2]);
    let centres: Vec<Vec<f64>> = (0..c.n_benchmarks)
        .map(|_| {
            (0..c.question_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut shift_rng);
                    c.benchmark_shift * z
                })
                .collect()
        })
        .collect();
    let mut q_rng = derived_rng(c.seed, &[STREAM, 1]);
    let mut vectors = Matrix::zeros(c.n_questions, c.question_dim);
    for q in 0..c.n_questions {
        let centre = &centres[benchmark_of[q]];
        for (v, mu) in vectors.row_mut(q).iter_mut().zip(centre) {
            let z: f64 = StandardNormal.sample(&mut q_rng);
            *v = mu + z;
        }
    }

    let mut label_rng = derived_rng(c.seed, &[STREAM, 3]);
    let mut records = Vec::with_capacity(c.n_models * c.n_questions);
    let mut correct = vec![0usize; c.n_models];
    for (q, &benchmark) in benchmark_of.iter().enumerate() {
        let h = project(&truth, vectors.row(q));
        for (i, hits) in correct.iter_mut().enumerate() {
            let score = output_from_projection(&truth, i, &h).score;
            let mut label = match c.label_rule {
                LabelRule::Deterministic => u8::from(score >= 0.5),
                LabelRule::Bernoulli => u8::from(label_rng.random::<f64>() < score),
            };
            if c.noise_rate > 0.0 && label_rng.random::<f64>() < c.noise_rate {
                label = 1 - label;
            }
            *hits += label as usize;
            records.push(CorrectnessRecord {
                model: i,
                question: q,
                benchmark,
                label,
            });
        }
    }
    records.sort_unstable();
    let dataset = CorrectnessDataset::new(
        (0..c.n_models).map(|i| model_id(i, c.n_models)).collect(),
        (0..c.n_questions)
            .map(|q| question_id(q, c.n_questions))
            .collect(),
        (0..c.n_benchmarks)
            .map(|b| bench_id(b, c.n_benchmarks))
            .collect(),
        benchmark_of.clone(),
        records,
    )?;
    Ok(PlantedWorld {
        config: c.clone(),
        truth,
        embeddings: QuestionEmbeddingTable::new(vectors)?,
        dataset,
        benchmark_of,
        model_accuracy: correct
            .iter()
            .map(|&k| k as f64 / c.n_questions as f64)
            .collect(),
    })
}

/// True correctness probability of `model_id` on `question_id`.
pub fn oracle_score(world: &PlantedWorld, model_id: usize, question_id: usize) -> f64 {
    let h = project(&world.truth, world.embeddings.vector(question_id));
    output_from_projection(&world.truth, model_id, &h).score
}

/// Per-model accuracy target that is an affine function of the true model
/// embeddings, spread over `[0.1, 0.9]`.
pub fn linear_accuracy_targets(truth: &MfParams, seed: u64) -> Vec<f64> {
    let mut rng = derived_rng(seed, &[STREAM, 4]);
    let direction: Vec<f64> = (0..truth.embed_dim())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw: Vec<f64> = truth
        .model_table
        .iter_rows()
        .map(|row| dot(row, &direction))
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    raw.iter().map(|t| 0.1 + 0.8 * (t - lo) / span).collect()
}

impl PlantedWorld {
    /// Append a benchmark of `n_questions` standard-normal questions on which
    /// model `i` answers the first `round(targets[i] * n_questions)` correctly,
    /// so its accuracy tracks [`linear_accuracy_targets`] to within rounding.
    pub fn with_linear_benchmark(
        &self,
        name: &str,
        n_questions: usize,
    ) -> Result<(PlantedWorld, Vec<f64>)> {
        if n_questions == 0 {
            return Err(Error::Config("linear benchmark needs questions".into()));
        }
        if self.dataset.benchmark_index(name).is_some() {
            return Err(Error::Config(format!("benchmark `{name}` already exists")));
        }
        let targets = linear_accuracy_targets(&self.truth, self.config.seed);
        let m = self.config.n_models;
        let n_old = self.dataset.n_questions();
        let n_new = n_old + n_questions;
        let b_new = self.dataset.benchmarks().len();

        let mut benchmarks = self.dataset.benchmarks().to_vec();
        benchmarks.push(name.to_owned());
        // keep lexicographic benchmark order so a save/load round trip is exact
        let mut order: Vec<usize> = (0..benchmarks.len()).collect();
        order.sort_by(|&a, &b| benchmarks[a].cmp(&benchmarks[b]));
        let mut remap = vec![0; benchmarks.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let sorted_benchmarks: Vec<String> = order.iter().map(|&i| benchmarks[i].clone()).collect();

        let question_ids: Vec<String> = (0..n_new).map(|q| question_id(q, n_new)).collect();
        let mut benchmark_of: Vec<usize> = self.benchmark_of.iter().map(|&b| remap[b]).collect();
        benchmark_of.extend(std::iter::repeat_n(remap[b_new], n_questions));

        let mut records: Vec<CorrectnessRecord> = self
            .dataset
            .records()
            .iter()
            .map(|r| CorrectnessRecord {
                benchmark: remap[r.benchmark],
                ..*r
            })
            .collect();
        for (i, &t) in targets.iter().enumerate() {
            let k = (t * n_questions as f64).round() as usize;
            for j in 0..n_questions {
                records.push(CorrectnessRecord {
                    model: i,
                    question: n_old + j,
                    benchmark: remap[b_new],
                    label: u8::from(j < k),
                });
            }
        }
        records.sort_unstable();

        let mut rng = derived_rng(self.config.seed, &[STREAM, 5]);
        let d_q = self.config.question_dim;
        let mut vectors = Matrix::zeros(n_new, d_q);
        for q in 0..n_old {
            vectors
                .row_mut(q)
                .copy_from_slice(self.embeddings.vector(q));
        }
        for q in n_old..n_new {
            vectors
                .row_mut(q)
                .iter_mut()
                .for_each(|v| *v = StandardNormal.sample(&mut rng));
        }

        let dataset = CorrectnessDataset::new(
            self.dataset.model_ids().to_vec(),
            question_ids,
            sorted_benchmarks,
            benchmark_of.clone(),
            records,
        )?;
        let mut correct = vec![0usize; m];
        for r in dataset.records() {
            correct[r.model] += r.label as usize;
        }
        let world = PlantedWorld {
            config: WorldConfig {
                n_questions: n_new,
                n_benchmarks: dataset.benchmarks().len(),
                ..self.config.clone()
            },
            truth: self.truth.clone(),
            embeddings: QuestionEmbeddingTable::new(vectors)?,
            dataset,
            benchmark_of,
            model_accuracy: correct.iter().map(|&k| k as f64 / n_new as f64).collect(),
        };
        Ok((world, targets))
    }

    /// Write `correctness.csv`, `questions.csv`, `models.csv`,
    /// `truth_params.csv` (+ `.json`) and `truth_embeddings.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dataset.save(&dir.join("correctness.csv"))?;
        self.dataset.save_metadata(&dir.join("models.csv"))?;
        self.embeddings
            .save(&dir.join("questions.csv"), self.dataset.question_ids())?;
        let sidecar = ParamsSidecar {
            n_models: self.truth.n_models(),
            question_dim: self.truth.question_dim(),
            embed_dim: self.truth.embed_dim(),
            seed: self.config.seed,
            config: TrainConfig {
                embed_dim: self.truth.embed_dim(),
                seed: self.config.seed,
                ..TrainConfig::default()
            },
            model_ids: self.dataset.model_ids().to_vec(),
        };
        save_params(
            &self.truth,
            &dir.join("truth_params.csv"),
            &dir.join("truth_params.json"),
            &sidecar,
        )?;
        save_model_embeddings(
            &dir.join("truth_embeddings.csv"),
            self.dataset.model_ids(),
            &self.truth.model_table,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{accuracy_by_model, load_correctness};
    use crate::mf::forward;

    fn small(seed: u64) -> WorldConfig {
        WorldConfig {
            n_models: 6,
            n_questions: 50,
            embed_dim: 4,
            question_dim: 5,
            n_benchmarks: 3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_deterministic_labels_follow_scores() {
        let w = generate(&small(1)).unwrap();
        for r in w.dataset.records() {
            assert_eq!(oracle_score(&w, r.model, r.question) >= 0.5, r.label == 1);
        }
        // labels are not all one class
        let ones: usize = w.dataset.records().iter().map(|r| r.label as usize).sum();
        assert!(ones > 0 && ones < w.dataset.records().len());
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate(&small(2)).unwrap();
        let b = generate(&small(2)).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.embeddings, b.embeddings);
        let c = generate(&small(3)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn oracle_matches_forward_on_truth() {
        let w = generate(&small(4)).unwrap();
        for q in [0, 17, 49] {
            for i in 0..6 {
                let f = forward(&w.truth, i, w.embeddings.vector(q)).unwrap().score;
                assert_eq!(oracle_score(&w, i, q), f);
            }
        }
        let mut zeroed = w.clone();
        zeroed.truth.model_table.row_mut(0).fill(0.0);
        assert_eq!(oracle_score(&zeroed, 0, 3), 0.5);
    }

    #[test]
    fn stored_accuracy_matches_dataset() {
        let w = generate(&WorldConfig {
            noise_rate: 0.2,
            ..small(5)
        })
        .unwrap();
        let all: Vec<usize> = (0..50).collect();
        assert_eq!(
            accuracy_by_model(&w.dataset, &all).unwrap(),
            w.model_accuracy
        );
    }

    #[test]
    fn contiguous_assignment() {
        assert_eq!(contiguous_benchmarks(7, 3), vec![0, 0, 0, 1, 1, 2, 2]);
        let w = generate(&small(6)).unwrap();
        assert_eq!(w.dataset.benchmarks(), ["bench0", "bench1", "bench2"]);
        assert_eq!(w.dataset.questions_in_benchmark(0).len(), 17);
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(matches!(
            generate(&WorldConfig {
                noise_rate: 0.5,
                ..small(1)
            }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate(&WorldConfig {
                n_models: 0,
                ..small(1)
            }),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn linear_benchmark_accuracy_tracks_targets() {
        let w = generate(&small(7)).unwrap();
        let (lw, targets) = w.with_linear_benchmark("linear", 1000).unwrap();
        let b = lw.dataset.benchmark_index("linear").unwrap();
        let acc = accuracy_by_model(&lw.dataset, &lw.dataset.questions_in_benchmark(b)).unwrap();
        for (a, t) in acc.iter().zip(&targets) {
            assert!((a - t).abs() <= 0.0005 + 1e-12);
        }
        // original benchmarks untouched
        let b0 = lw.dataset.benchmark_index("bench0").unwrap();
        let old0 = w.dataset.benchmark_index("bench0").unwrap();
        assert_eq!(
            accuracy_by_model(&lw.dataset, &lw.dataset.questions_in_benchmark(b0)).unwrap(),
            accuracy_by_model(&w.dataset, &w.dataset.questions_in_benchmark(old0)).unwrap()
        );
    }

    #[test]
    fn saved_world_loads_identically() {
        let w = generate(&WorldConfig {
            noise_rate: 0.1,
            ..small(8)
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.save(dir.path()).unwrap();
        let ds = load_correctness(&dir.path().join("correctness.csv")).unwrap();
        assert_eq!(ds, w.dataset);
        let emb = QuestionEmbeddingTable::load(&dir.path().join("questions.csv"), &ds).unwrap();
        assert_eq!(emb, w.embeddings);
    }
}
