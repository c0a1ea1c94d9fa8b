//! Command-line arguments and the flat JSON config they can be read from.
//!
//! Every option is optional at the clap level so that a `--config` file can
//! supply it. Flags given on the command line win over file values; whatever
//! is still unset afterwards falls back to the defaults in `resolve`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use mfembed_core::TrainConfig;

/// A problem with how the program was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "mfembed",
    version,
    about = "Model embeddings from binary correctness data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-truth synthetic dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Train model embeddings and write the parameters.
    Train(TrainArgs),
    /// Compare MF and KNN correctness forecasting over training-set sizes.
    EvalForecast(EvalForecastArgs),
    /// Route questions to the model with the highest predicted correctness.
    Route(RouteArgs),
    /// Predict per-model accuracy on a held-out benchmark from embeddings.
    BenchPredict(BenchPredictArgs),
    /// Benchmark-contribution matrix from leave-out training.
    Contribution(ContributionArgs),
    /// Distances within and across tagged model communities.
    ProbeCommunities(ProbeArgs),
    /// Export the model embedding table from a parameter file.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CommonArgs {
    /// Flat JSON object whose keys are flag names without the leading dashes.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DataArgs {
    /// Correctness CSV: model_id,question_id,benchmark,label.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Question embeddings CSV: question_id,x0,x1,...
    #[arg(long)]
    pub qemb: Option<PathBuf>,
    /// Optional model metadata CSV: model_id,name,tags.
    #[arg(long)]
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainingArgs {
    /// Seed for initialisation and minibatch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for the question train/validation/test split.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

impl TrainingArgs {
    fn resolve(&mut self) {
        let d = TrainConfig::default();
        self.seed.get_or_insert(d.seed);
        self.split_seed.get_or_insert(0);
        self.split.get_or_insert_with(|| vec![0.8, 0.1, 0.1]);
        self.embed_dim.get_or_insert(d.embed_dim);
        self.learning_rate.get_or_insert(d.learning_rate);
        self.epochs.get_or_insert(d.epochs);
        self.batch_size.get_or_insert(d.batch_size);
        self.weight_decay.get_or_insert(d.weight_decay);
    }

    /// Only valid after `resolve`.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            embed_dim: self.embed_dim.unwrap(),
            learning_rate: self.learning_rate.unwrap(),
            epochs: self.epochs.unwrap(),
            batch_size: self.batch_size.unwrap(),
            seed: self.seed.unwrap(),
            weight_decay: self.weight_decay.unwrap(),
            ..TrainConfig::default()
        }
    }

    pub fn split_ratios(&self) -> anyhow::Result<(f64, f64, f64)> {
        match self.split.as_deref() {
            Some(&[a, b, c]) => Ok((a, b, c)),
            _ => Err(usage("--split takes three fractions, e.g. 0.8,0.1,0.1")),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenSyntheticArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n_models: Option<usize>,
    #[arg(long)]
    pub n_questions: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub question_dim: Option<usize>,
    #[arg(long)]
    pub n_benchmarks: Option<usize>,
    /// Probability of flipping each label.
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// `deterministic` or `bernoulli`.
    #[arg(long)]
    pub label_rule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scale of the per-benchmark offset of question vectors.
    #[arg(long)]
    pub benchmark_shift: Option<f64>,
    /// Also add a benchmark whose per-model accuracy is linear in the true embeddings.
    #[arg(long)]
    pub linear_benchmark: Option<String>,
    /// Question count of the linear benchmark.
    #[arg(long)]
    pub linear_questions: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Benchmarks whose questions are dropped before training.
    #[arg(long, value_delimiter = ',')]
    pub exclude_benchmarks: Option<Vec<String>>,
}

/// A training-subset size: a question count or the whole training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetSize {
    Count(usize),
    Full,
}

impl FromStr for SubsetSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(SubsetSize::Full);
        }
        s.parse()
            .map(SubsetSize::Count)
            .map_err(|_| format!("`{s}` is neither a question count nor `full`"))
    }
}

impl Serialize for SubsetSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SubsetSize::Count(n) => s.serialize_u64(*n as u64),
            SubsetSize::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for SubsetSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n
                .as_u64()
                .map(|n| SubsetSize::Count(n as usize))
                .ok_or_else(|| {
                    serde::de::Error::custom("subset size must be a non-negative integer")
                }),
            Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("bad subset size {other}"))),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalForecastArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Training-set sizes in questions (`full` for the whole training split).
    #[arg(long, value_delimiter = ',')]
    pub subset_sizes: Option<Vec<SubsetSize>>,
    /// MF embedding dimensions tuned on validation.
    #[arg(long, value_delimiter = ',')]
    pub mf_dims: Option<Vec<usize>>,
    /// KNN neighbour counts tuned on validation.
    #[arg(long, value_delimiter = ',')]
    pub knn_ks: Option<Vec<usize>>,
    /// Seed for drawing the nested training subsets.
    #[arg(long)]
    pub subset_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RouteArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Parameter CSV written by `train`; its `.json` sidecar must sit next to it.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    /// `test` to route the test split, `all` to route every question.
    #[arg(long)]
    pub questions: Option<String>,
    /// Timed routing passes written to timing.json (0 skips timing).
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BenchPredictArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Benchmark whose per-model accuracy is predicted.
    #[arg(long)]
    pub target: Option<String>,
    /// Number of random model splits.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Ridge penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Share of models used to fit each regression.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Benchmarks left out of embedding training besides the target.
    #[arg(long, value_delimiter = ',')]
    pub exclude_benchmarks: Option<Vec<String>>,
    /// Use these model embeddings (model_id,e0,...) instead of training.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ContributionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Benchmarks in the matrix (default: all).
    #[arg(long, value_delimiter = ',')]
    pub benchmarks: Option<Vec<String>>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProbeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Model embeddings CSV: model_id,e0,...
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Model metadata CSV: model_id,name,tags.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Community labels to measure.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Also list the nearest neighbours of this model id.
    #[arg(long)]
    pub nearest: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Parameter CSV written by `train`; its `.json` sidecar must sit next to it.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

/// Overlay command-line values on the `--config` file, then fill defaults.
pub trait Resolve: Serialize + DeserializeOwned + Default {
    fn common(&self) -> &CommonArgs;
    fn common_mut(&mut self) -> &mut CommonArgs;
    fn resolve(&mut self) -> anyhow::Result<()>;

    fn merged(self) -> anyhow::Result<Self> {
        let config_path = self.common().config.clone();
        let mut merged = match &config_path {
            Some(path) => {
                let mut file = read_config(path)?;
                let known = keys_of(&Self::default());
                if let Some(bad) = file.keys().find(|k| !known.contains(*k)) {
                    return Err(usage(format!("unknown key `{bad}` in {}", path.display())));
                }
                let cli = serde_json::to_value(&self)?;
                for (k, v) in cli.as_object().expect("args serialize to an object") {
                    if !v.is_null() {
                        file.insert(k.clone(), v.clone());
                    }
                }
                serde_json::from_value::<Self>(Value::Object(file))
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => self,
        };
        merged.common_mut().config = config_path;
        merged.resolve()?;
        Ok(merged)
    }
}

fn read_config(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(usage(format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(usage(format!("{}: {e}", path.display()))),
    }
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> anyhow::Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("missing --{flag} (flag or config key `{flag}`)")))
}

macro_rules! common_access {
    () => {
        fn common(&self) -> &CommonArgs {
            &self.common
        }
        fn common_mut(&mut self) -> &mut CommonArgs {
            &mut self.common
        }
    };
}

fn require_data(data: &DataArgs) -> anyhow::Result<()> {
    required(&data.data, "data")?;
    required(&data.qemb, "qemb")?;
    Ok(())
}

impl Resolve for GenSyntheticArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        let d = mfembed_core::WorldConfig::default();
        required(&self.common.out, "out")?;
        self.n_models.get_or_insert(d.n_models);
        self.n_questions.get_or_insert(d.n_questions);
        self.embed_dim.get_or_insert(d.embed_dim);
        self.question_dim.get_or_insert(d.question_dim);
        self.n_benchmarks.get_or_insert(d.n_benchmarks);
        self.noise_rate.get_or_insert(d.noise_rate);
        self.label_rule
            .get_or_insert_with(|| "deterministic".into());
        self.seed.get_or_insert(d.seed);
        self.benchmark_shift.get_or_insert(d.benchmark_shift);
        if self.linear_benchmark.is_some() {
            self.linear_questions.get_or_insert(500);
        }
        Ok(())
    }
}

impl Resolve for TrainArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        require_data(&self.data)?;
        self.training.resolve();
        self.exclude_benchmarks.get_or_insert_with(Vec::new);
        Ok(())
    }
}

impl Resolve for EvalForecastArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        require_data(&self.data)?;
        self.training.resolve();
        self.subset_sizes
            .get_or_insert_with(|| vec![SubsetSize::Full]);
        let d = self.training.embed_dim.unwrap();
        self.mf_dims.get_or_insert_with(|| vec![d]);
        self.knn_ks
            .get_or_insert_with(|| vec![1, 3, 5, 9, 15, 25, 41, 65, 101]);
        self.subset_seed.get_or_insert(0);
        Ok(())
    }
}

impl Resolve for RouteArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        require_data(&self.data)?;
        required(&self.params, "params")?;
        self.split_seed.get_or_insert(0);
        self.split.get_or_insert_with(|| vec![0.8, 0.1, 0.1]);
        let q = self.questions.get_or_insert_with(|| "test".into());
        if q != "test" && q != "all" {
            return Err(usage(format!(
                "--questions must be `test` or `all`, got `{q}`"
            )));
        }
        self.repeats.get_or_insert(0);
        Ok(())
    }
}

impl Resolve for BenchPredictArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        require_data(&self.data)?;
        required(&self.target, "target")?;
        self.training.resolve();
        let d = mfembed_core::PredictionConfig::default();
        self.splits.get_or_insert(d.n_splits);
        self.lambda.get_or_insert(d.lambda);
        self.train_fraction.get_or_insert(d.train_fraction);
        self.exclude_benchmarks.get_or_insert_with(Vec::new);
        Ok(())
    }
}

impl Resolve for ContributionArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        require_data(&self.data)?;
        self.training.resolve();
        let d = mfembed_core::PredictionConfig::default();
        self.splits.get_or_insert(d.n_splits);
        self.lambda.get_or_insert(d.lambda);
        self.train_fraction.get_or_insert(d.train_fraction);
        Ok(())
    }
}

impl Resolve for ProbeArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        required(&self.embeddings, "embeddings")?;
        required(&self.models, "models")?;
        required(&self.labels, "labels")?;
        self.top_k.get_or_insert(5);
        Ok(())
    }
}

impl Resolve for ExportArgs {
    common_access!();

    fn resolve(&mut self) -> anyhow::Result<()> {
        required(&self.common.out, "out")?;
        required(&self.params, "params")?;
        Ok(())
    }
}
