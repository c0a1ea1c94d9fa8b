//! Subcommand implementations. Each takes fully resolved arguments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use mfembed_core::bench_predict::ContributionMatrix;
use mfembed_core::dataset::ModelMetadata;
use mfembed_core::experiment::{forecast_table, ForecastConfig, ForecastRow};
use mfembed_core::mf::{
    load_model_embeddings, load_params, save_model_embeddings, save_params, ParamsSidecar,
};
use mfembed_core::router::{BenchmarkRouting, RouterAccuracies};
use mfembed_core::{
    community_distances, contribution_matrix, generate, load_correctness, load_model_metadata,
    nearest_models, predict_benchmark, route_batch_timed, router_accuracy, split_questions,
    test_accuracy, train, BenchmarkPredictionReport, CommunityReport, ContributionConfig,
    CorrectnessDataset, EmbeddingSource, Matrix, MfParams, PredictionConfig,
    QuestionEmbeddingTable, WorldConfig,
};

use crate::args::*;
use crate::report::{write_json, write_report, Provenance};

fn out_dir(common: &CommonArgs) -> anyhow::Result<PathBuf> {
    let out = common.out.clone().expect("resolved");
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn load_data(data: &DataArgs) -> anyhow::Result<(CorrectnessDataset, QuestionEmbeddingTable)> {
    let data_path = data.data.as_deref().expect("resolved");
    let qemb_path = data.qemb.as_deref().expect("resolved");
    let mut ds =
        load_correctness(data_path).with_context(|| format!("loading {}", data_path.display()))?;
    if let Some(models) = &data.models {
        let meta =
            load_model_metadata(models).with_context(|| format!("loading {}", models.display()))?;
        ds.apply_metadata(&meta)?;
    }
    let emb = QuestionEmbeddingTable::load(qemb_path, &ds)
        .with_context(|| format!("loading {}", qemb_path.display()))?;
    Ok((ds, emb))
}

fn data_provenance<C: Serialize>(
    config: &C,
    data: &DataArgs,
) -> anyhow::Result<(Provenance, serde_json::Value)> {
    let (p, value) = Provenance::new(config)?;
    let p = p
        .input("data", data.data.as_deref())?
        .input("qemb", data.qemb.as_deref())?
        .input("models", data.models.as_deref())?;
    Ok((p, value))
}

fn benchmark_indices(ds: &CorrectnessDataset, names: &[String]) -> anyhow::Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            ds.benchmark_index(n)
                .with_context(|| format!("unknown benchmark `{n}`"))
        })
        .collect()
}

fn sidecar_path(params: &Path) -> PathBuf {
    params.with_extension("json")
}

/// Reorder embedding rows to the dataset's model order.
fn align_rows(ids: &[String], rows: &Matrix, want: &[String]) -> anyhow::Result<Matrix> {
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let order = want
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .with_context(|| format!("no embedding for model `{id}`"))
        })
        .collect::<anyhow::Result<Vec<usize>>>()?;
    Ok(rows.select_rows(&order))
}

#[derive(Serialize)]
struct GenSyntheticResult {
    n_models: usize,
    n_questions: usize,
    n_records: usize,
    benchmarks: Vec<String>,
    model_accuracy: BTreeMap<String, f64>,
    linear_targets: Option<BTreeMap<String, f64>>,
}

pub fn gen_synthetic(args: GenSyntheticArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let cfg = WorldConfig {
        n_models: args.n_models.unwrap(),
        n_questions: args.n_questions.unwrap(),
        embed_dim: args.embed_dim.unwrap(),
        question_dim: args.question_dim.unwrap(),
        n_benchmarks: args.n_benchmarks.unwrap(),
        noise_rate: args.noise_rate.unwrap(),
        label_rule: args.label_rule.as_deref().unwrap().parse()?,
        seed: args.seed.unwrap(),
        benchmark_shift: args.benchmark_shift.unwrap(),
    };
    let mut world = generate(&cfg)?;
    let mut linear_targets = None;
    if let Some(name) = &args.linear_benchmark {
        let (w, targets) = world.with_linear_benchmark(name, args.linear_questions.unwrap())?;
        world = w;
        linear_targets = Some(targets);
    }
    world.save(&out)?;

    let ids = world.dataset.model_ids();
    let by_model = |v: &[f64]| ids.iter().cloned().zip(v.iter().copied()).collect();
    let (p, config) = Provenance::new(&args)?;
    let p = p
        .seed("seed", args.seed)
        .input("data", Some(&out.join("correctness.csv")))?;
    let result = GenSyntheticResult {
        n_models: world.dataset.n_models(),
        n_questions: world.dataset.n_questions(),
        n_records: world.dataset.records().len(),
        benchmarks: world.dataset.benchmarks().to_vec(),
        model_accuracy: by_model(&world.model_accuracy),
        linear_targets: linear_targets.as_deref().map(by_model),
    };
    write_report(&out, "gen-synthetic", &p, &config, &result)
}

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Serialize)]
struct TrainResult {
    n_models: usize,
    n_questions: usize,
    n_records: usize,
    excluded_benchmarks: Vec<String>,
    split: SplitSizes,
    best_epoch: usize,
    train_loss: Vec<f64>,
    val_accuracy: Vec<f64>,
    accuracy: BTreeMap<&'static str, Option<f64>>,
}

fn accuracy_on(
    params: &MfParams,
    ds: &CorrectnessDataset,
    emb: &QuestionEmbeddingTable,
    questions: &[usize],
) -> anyhow::Result<Option<f64>> {
    if questions.is_empty() {
        return Ok(None);
    }
    Ok(Some(test_accuracy(params, ds, emb, questions)?))
}

pub fn train_cmd(args: TrainArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let (mut ds, mut emb) = load_data(&args.data)?;
    let excluded = args.exclude_benchmarks.clone().unwrap();
    if !excluded.is_empty() {
        let drop = benchmark_indices(&ds, &excluded)?;
        let keep: Vec<usize> = (0..ds.benchmarks().len())
            .filter(|b| !drop.contains(b))
            .collect();
        let (sub, map) = ds.restrict_to_benchmarks(&keep);
        emb = emb.select(&map);
        ds = sub;
    }
    let cfg = args.training.train_config();
    let split = split_questions(
        &ds,
        args.training.split_ratios()?,
        args.training.split_seed.unwrap(),
    )?;
    let (params, history) = train(&ds, &emb, &split, &cfg)?;

    let sidecar = ParamsSidecar {
        n_models: params.n_models(),
        question_dim: params.question_dim(),
        embed_dim: params.embed_dim(),
        seed: cfg.seed,
        config: cfg.clone(),
        model_ids: ds.model_ids().to_vec(),
    };
    save_params(
        &params,
        &out.join("params.csv"),
        &out.join("params.json"),
        &sidecar,
    )?;
    save_model_embeddings(
        &out.join("model_embeddings.csv"),
        ds.model_ids(),
        &params.model_table,
    )?;

    let mut accuracy = BTreeMap::new();
    accuracy.insert("train", accuracy_on(&params, &ds, &emb, &split.train)?);
    accuracy.insert(
        "validation",
        accuracy_on(&params, &ds, &emb, &split.validation)?,
    );
    accuracy.insert("test", accuracy_on(&params, &ds, &emb, &split.test)?);
    let result = TrainResult {
        n_models: ds.n_models(),
        n_questions: ds.n_questions(),
        n_records: ds.records().len(),
        excluded_benchmarks: excluded,
        split: SplitSizes {
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        best_epoch: history.best_epoch,
        train_loss: history.train_loss,
        val_accuracy: history.val_accuracy,
        accuracy,
    };
    let (p, config) = data_provenance(&args, &args.data)?;
    let p = p
        .seed("seed", args.training.seed)
        .seed("split-seed", args.training.split_seed);
    write_report(&out, "train", &p, &config, &result)
}

fn forecast_csv(rows: &[ForecastRow]) -> String {
    let mut s =
        String::from("algorithm,train_questions,chosen,validation_accuracy,test_accuracy\n");
    for r in rows {
        let alg = serde_json::to_value(r.algorithm).unwrap();
        writeln!(
            s,
            "{},{},{},{},{}",
            alg.as_str().unwrap(),
            r.train_questions,
            r.chosen,
            r.validation_accuracy,
            r.test_accuracy
        )
        .unwrap();
    }
    s
}

#[derive(Serialize)]
struct ForecastResult {
    train_questions_available: usize,
    rows: Vec<ForecastRow>,
}

pub fn eval_forecast(args: EvalForecastArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let (ds, emb) = load_data(&args.data)?;
    let split = split_questions(
        &ds,
        args.training.split_ratios()?,
        args.training.split_seed.unwrap(),
    )?;
    let cfg = ForecastConfig {
        subset_sizes: args
            .subset_sizes
            .as_ref()
            .unwrap()
            .iter()
            .map(|s| match s {
                SubsetSize::Count(n) => Some(*n),
                SubsetSize::Full => None,
            })
            .collect(),
        mf_dims: args.mf_dims.clone().unwrap(),
        knn_ks: args.knn_ks.clone().unwrap(),
        train: args.training.train_config(),
        subset_seed: args.subset_seed.unwrap(),
    };
    let rows = forecast_table(&ds, &emb, &split, &cfg)?;
    std::fs::write(out.join("forecast.csv"), forecast_csv(&rows))?;
    let (p, config) = data_provenance(&args, &args.data)?;
    let p = p
        .seed("seed", args.training.seed)
        .seed("split-seed", args.training.split_seed)
        .seed("subset-seed", args.subset_seed);
    let result = ForecastResult {
        train_questions_available: split.train.len(),
        rows,
    };
    write_report(&out, "eval-forecast", &p, &config, &result)
}

#[derive(Serialize)]
struct RouteResult {
    n_questions: usize,
    overall: RouterAccuracies,
    single_best_model_id: String,
    per_benchmark: Vec<BenchmarkRouting>,
    selection_frequencies: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct TimingReport {
    n_questions: usize,
    n_models: usize,
    repeats: usize,
    median_secs: f64,
    samples_secs: Vec<f64>,
}

fn load_params_for(path: &Path) -> anyhow::Result<(MfParams, ParamsSidecar)> {
    load_params(path, &sidecar_path(path)).with_context(|| format!("loading {}", path.display()))
}

pub fn route_cmd(args: RouteArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let (ds, emb) = load_data(&args.data)?;
    let params_path = args.params.as_deref().unwrap();
    let (params, sidecar) = load_params_for(params_path)?;
    if sidecar.model_ids != ds.model_ids() {
        bail!(
            "the parameter file was trained on a different model list than {}",
            args.data.data.as_ref().unwrap().display()
        );
    }
    let questions = if args.questions.as_deref() == Some("all") {
        (0..ds.n_questions()).collect()
    } else {
        let ratios = match args.split.as_deref() {
            Some(&[a, b, c]) => (a, b, c),
            _ => return Err(usage("--split takes three fractions")),
        };
        split_questions(&ds, ratios, args.split_seed.unwrap())?.test
    };
    let report = router_accuracy(&params, &ds, &emb, &questions)?;

    let mut csv = String::from("question_id,model_id,correct\n");
    for r in &report.routed {
        writeln!(
            csv,
            "{},{},{}",
            ds.question_ids()[r.question],
            ds.model_ids()[r.model],
            u8::from(r.correct)
        )
        .unwrap();
    }
    std::fs::write(out.join("assignments.csv"), csv)?;

    let repeats = args.repeats.unwrap();
    if repeats > 0 {
        let xs = emb.vectors().select_rows(&questions);
        let all: Vec<usize> = (0..ds.n_models()).collect();
        let (_, timing) = route_batch_timed(&params, &xs, &all, repeats)?;
        write_json(
            &out.join("timing.json"),
            &TimingReport {
                n_questions: questions.len(),
                n_models: all.len(),
                repeats,
                median_secs: timing.median_secs,
                samples_secs: timing.samples_secs,
            },
        )?;
    }

    let result = RouteResult {
        n_questions: questions.len(),
        overall: report.overall,
        single_best_model_id: ds.model_ids()[report.overall.single_best_model].clone(),
        per_benchmark: report.per_benchmark,
        selection_frequencies: ds
            .model_ids()
            .iter()
            .cloned()
            .zip(report.selection_frequencies)
            .collect(),
    };
    let (p, config) = data_provenance(&args, &args.data)?;
    let p = p
        .input("params", Some(params_path))?
        .seed("split-seed", args.split_seed);
    write_report(&out, "route", &p, &config, &result)
}

fn prediction_config(
    seed: u64,
    splits: usize,
    lambda: f64,
    train_fraction: f64,
) -> PredictionConfig {
    PredictionConfig {
        n_splits: splits,
        lambda,
        train_fraction,
        seed,
    }
}

pub fn bench_predict(args: BenchPredictArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let (ds, emb) = load_data(&args.data)?;
    let target = args.target.as_deref().unwrap();
    let seed = args.training.seed.unwrap();
    let pred = prediction_config(
        seed,
        args.splits.unwrap(),
        args.lambda.unwrap(),
        args.train_fraction.unwrap(),
    );
    let source = match &args.embeddings {
        Some(path) => {
            let (ids, rows) = load_model_embeddings(path)
                .with_context(|| format!("loading {}", path.display()))?;
            EmbeddingSource::Supplied(align_rows(&ids, &rows, ds.model_ids())?)
        }
        None => EmbeddingSource::LeaveOut {
            train: args.training.train_config(),
            split_ratios: args.training.split_ratios()?,
            split_seed: args.training.split_seed.unwrap(),
            exclude: benchmark_indices(&ds, args.exclude_benchmarks.as_deref().unwrap())?,
        },
    };
    let (report, embeddings): (BenchmarkPredictionReport, Matrix) =
        predict_benchmark(&ds, &emb, target, &source, &pred)?;
    save_model_embeddings(
        &out.join("model_embeddings.csv"),
        ds.model_ids(),
        &embeddings,
    )?;
    let (p, config) = data_provenance(&args, &args.data)?;
    let p = p
        .input("embeddings", args.embeddings.as_deref())?
        .seed("seed", Some(seed))
        .seed("split-seed", args.training.split_seed);
    write_report(&out, "bench-predict", &p, &config, &report)
}

pub fn contribution(args: ContributionArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let (ds, emb) = load_data(&args.data)?;
    let benchmarks = match &args.benchmarks {
        Some(names) => benchmark_indices(&ds, names)?,
        None => (0..ds.benchmarks().len()).collect(),
    };
    let seed = args.training.seed.unwrap();
    let cfg = ContributionConfig {
        train: args.training.train_config(),
        split_ratios: args.training.split_ratios()?,
        split_seed: args.training.split_seed.unwrap(),
        prediction: prediction_config(
            seed,
            args.splits.unwrap(),
            args.lambda.unwrap(),
            args.train_fraction.unwrap(),
        ),
    };
    let matrix: ContributionMatrix = contribution_matrix(&ds, &emb, &benchmarks, &cfg)?;
    std::fs::write(out.join("contribution.csv"), matrix.to_csv())?;
    let (p, config) = data_provenance(&args, &args.data)?;
    let p = p
        .seed("seed", Some(seed))
        .seed("split-seed", args.training.split_seed);
    write_report(&out, "contribution", &p, &config, &matrix)
}

#[derive(Serialize)]
struct NeighbourRow {
    model_id: String,
    distance: f64,
}

#[derive(Serialize)]
struct ProbeResult {
    communities: CommunityReport,
    nearest: Option<Vec<NeighbourRow>>,
}

pub fn probe_communities(args: ProbeArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let emb_path = args.embeddings.as_deref().unwrap();
    let models_path = args.models.as_deref().unwrap();
    let (ids, rows) = load_model_embeddings(emb_path)
        .with_context(|| format!("loading {}", emb_path.display()))?;
    let meta: Vec<ModelMetadata> = load_model_metadata(models_path)
        .with_context(|| format!("loading {}", models_path.display()))?;
    let by_id: BTreeMap<&str, &ModelMetadata> =
        meta.iter().map(|m| (m.model_id.as_str(), m)).collect();
    let tags = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|m| m.tags.clone())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>();
    let communities = community_distances(&rows, &tags, args.labels.as_deref().unwrap())?;
    let nearest = match &args.nearest {
        Some(id) => {
            let i = ids
                .iter()
                .position(|m| m == id)
                .with_context(|| format!("model `{id}` is not in {}", emb_path.display()))?;
            let list = nearest_models(&rows, i, args.top_k.unwrap())?;
            Some(
                list.into_iter()
                    .map(|n| NeighbourRow {
                        model_id: ids[n.model].clone(),
                        distance: n.distance,
                    })
                    .collect(),
            )
        }
        None => None,
    };
    std::fs::write(out.join("communities.csv"), communities.to_csv())?;
    let (p, config) = Provenance::new(&args)?;
    let p = p
        .input("embeddings", Some(emb_path))?
        .input("models", Some(models_path))?;
    write_report(
        &out,
        "probe-communities",
        &p,
        &config,
        &ProbeResult {
            communities,
            nearest,
        },
    )
}

#[derive(Serialize)]
struct ExportResult {
    n_models: usize,
    embed_dim: usize,
}

pub fn export_embeddings(args: ExportArgs) -> anyhow::Result<()> {
    let out = out_dir(&args.common)?;
    let params_path = args.params.as_deref().unwrap();
    let (params, sidecar) = load_params_for(params_path)?;
    if sidecar.model_ids.len() != params.n_models() {
        bail!(
            "sidecar lists {} model ids for {} rows",
            sidecar.model_ids.len(),
            params.n_models()
        );
    }
    save_model_embeddings(
        &out.join("model_embeddings.csv"),
        &sidecar.model_ids,
        &params.model_table,
    )?;
    let (p, config) = Provenance::new(&args)?;
    let p = p
        .input("params", Some(params_path))?
        .seed("seed", Some(sidecar.seed));
    let result = ExportResult {
        n_models: params.n_models(),
        embed_dim: params.embed_dim(),
    };
    write_report(&out, "export-embeddings", &p, &config, &result)
}
