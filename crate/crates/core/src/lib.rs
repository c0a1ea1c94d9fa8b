//! Learn vector embeddings of language models from binary correctness data
//! and use them to forecast correctness, route questions, predict benchmark
//! accuracy and probe the embedding space.
//!
//! All randomness is seeded (`ChaCha8Rng`); every public operation is
//! deterministic given its inputs.

pub mod bench_predict;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kendall;
pub mod knn;
pub mod matrix;
pub mod mf;
pub mod probing;
pub mod ridge;
pub mod rng;
pub mod router;
pub mod synth;

pub use bench_predict::{
    contribution_matrix, predict_benchmark, predict_from_embeddings, BenchmarkPredictionReport,
    ContributionConfig, ContributionMatrix, EmbeddingSource, PredictionConfig,
};
pub use dataset::{
    accuracy_by_model, load_correctness, load_model_metadata, split_questions, CorrectnessDataset,
    CorrectnessRecord, QuestionEmbeddingTable, SplitAssignment,
};
pub use error::{Error, Result};
pub use kendall::{kendall_tau, KendallResult};
pub use knn::{knn_accuracy, knn_predict, KnnConfig};
pub use matrix::Matrix;
pub use mf::{
    bce_loss, forward, gradients, init_params, predict_correctness, test_accuracy, train,
    train_with_init, MfParams, TrainConfig, TrainHistory,
};
pub use probing::{community_distances, nearest_models, CommunityReport};
pub use ridge::{fit_regression, RegressionModel};
pub use router::{route, route_batch_timed, router_accuracy, RouterReport};
pub use synth::{generate, oracle_score, LabelRule, PlantedWorld, WorldConfig};
