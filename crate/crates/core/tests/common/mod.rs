//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use mfembed_core::mf::{loss_and_gradients, Example};
use mfembed_core::rng::rng_from_seed;
use mfembed_core::{
    generate, CorrectnessDataset, CorrectnessRecord, Matrix, MfParams, PlantedWorld,
    QuestionEmbeddingTable, TrainConfig, WorldConfig,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Training settings sized for the small planted worlds.
pub fn planted_train_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        learning_rate: 1e-2,
        epochs,
        batch_size: 128,
        seed,
        ..TrainConfig::default()
    }
}

pub fn world(seed: u64, noise_rate: f64) -> PlantedWorld {
    generate(&WorldConfig {
        seed,
        noise_rate,
        ..WorldConfig::default()
    })
    .unwrap()
}

/// Owned examples for a gradient check.
pub struct Batch {
    pub models: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn examples(&self) -> Vec<Example<'_>> {
        self.models
            .iter()
            .zip(&self.vectors)
            .zip(&self.labels)
            .map(|((&model, v), &label)| Example {
                model,
                q_vector: v,
                label,
            })
            .collect()
    }
}

/// A random parameter set and batch; config `c` fixes the seed and shapes.
pub fn random_problem(c: u64) -> (MfParams, Batch) {
    let mut rng = rng_from_seed(1000 + c);
    let m = rng.random_range(1..=6);
    let d_q = rng.random_range(1..=7);
    let d_e = rng.random_range(1..=6);
    let n = rng.random_range(1..=12);
    let mut p = MfParams::zeros(m, d_q, d_e);
    let unit = Uniform::new(-1.0, 1.0).unwrap();
    for i in 0..p.param_count() {
        *p.scalar_mut(i) = unit.sample(&mut rng);
    }
    let batch = Batch {
        models: (0..n).map(|_| rng.random_range(0..m)).collect(),
        vectors: (0..n)
            .map(|_| (0..d_q).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect(),
        labels: (0..n).map(|_| rng.random_range(0..=1u8)).collect(),
    };
    (p, batch)
}

/// Worst relative error `|a - n| / max(|a|, |n|, floor)` between analytic
/// gradients and central differences of step `h`, over every scalar.
pub fn gradient_check(params: &MfParams, batch: &Batch, h: f64, floor: f64) -> f64 {
    let ex = batch.examples();
    let analytic = loss_and_gradients(params, &ex).unwrap().1.flatten();
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let base = *p.scalar_mut(i);
        *p.scalar_mut(i) = base + h;
        let up = loss_and_gradients(&p, &ex).unwrap().0;
        *p.scalar_mut(i) = base - h;
        let down = loss_and_gradients(&p, &ex).unwrap().0;
        *p.scalar_mut(i) = base;
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// O(n²) pair counting: (S, pairs untied in x, pairs untied in y).
pub fn brute_pairs(x: &[f64], y: &[f64]) -> (i64, u64, u64) {
    let (mut s, mut ux, mut uy) = (0i64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap() as i64;
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap() as i64;
            s += dx * dy;
            ux += u64::from(dx != 0);
            uy += u64::from(dy != 0);
        }
    }
    (s, ux, uy)
}

pub fn brute_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let (s, ux, uy) = brute_pairs(x, y);
    if ux == 0 || uy == 0 {
        return None;
    }
    Some(s as f64 / ((ux as f64) * (uy as f64)).sqrt())
}

/// Random vector pair `v` of 200: small integers (heavy ties) or reals.
pub fn kendall_case(v: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(5000 + v);
    let n = rng.random_range(2..=50);
    let ints = v.is_multiple_of(2);
    let draw = |rng: &mut mfembed_core::rng::Rng| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if ints {
                    f64::from(rng.random_range(0..5))
                } else {
                    StandardNormal.sample(rng)
                }
            })
            .collect()
    };
    let x = draw(&mut rng);
    let y = draw(&mut rng);
    (x, y)
}

/// Append a copy of benchmark `src` under `name`: same question vectors and
/// labels, fresh question ids.
pub fn with_duplicate_benchmark(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    src: usize,
    name: &str,
) -> (CorrectnessDataset, QuestionEmbeddingTable) {
    let copied = dataset.questions_in_benchmark(src);
    let n_old = dataset.n_questions();
    let mut benchmarks = dataset.benchmarks().to_vec();
    benchmarks.push(name.to_owned());
    let new_b = benchmarks.len() - 1;
    let mut question_ids = dataset.question_ids().to_vec();
    let mut bench_of: Vec<usize> = (0..n_old).map(|q| dataset.question_benchmark(q)).collect();
    let mut rows: Vec<Vec<f64>> = (0..n_old).map(|q| embeddings.vector(q).to_vec()).collect();
    let mut records = dataset.records().to_vec();
    for (k, &q) in copied.iter().enumerate() {
        question_ids.push(format!("{}_{name}", dataset.question_ids()[q]));
        bench_of.push(new_b);
        rows.push(embeddings.vector(q).to_vec());
        for m in 0..dataset.n_models() {
            if let Some(label) = dataset.label(m, q) {
                records.push(CorrectnessRecord {
                    model: m,
                    question: n_old + k,
                    benchmark: new_b,
                    label,
                });
            }
        }
    }
    records.sort_unstable();
    let ds = CorrectnessDataset::new(
        dataset.model_ids().to_vec(),
        question_ids,
        benchmarks,
        bench_of,
        records,
    )
    .unwrap();
    (
        ds,
        QuestionEmbeddingTable::new(Matrix::from_rows(&rows)).unwrap(),
    )
}
