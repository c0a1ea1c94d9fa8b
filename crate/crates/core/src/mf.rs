//! Encoder/decoder correctness model ("matrix factorization").
//!
//! A model `m` is a learned row `v_m` of the model table. A question vector
//! `x` is projected to `h = W^T x + b`. The decoder is a two-logit linear head
//! applied to `v_m ⊙ h`, and the correctness score is
//! `sigmoid(logit_1 - logit_0)`. Training minimises binary cross-entropy with
//! hand-derived gradients and Adam.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_labelled_rows, CorrectnessDataset, QuestionEmbeddingTable, SplitAssignment,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, derived_rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    /// One row per model (`m × d_e`).
    pub model_table: Matrix,
    /// `d_q × d_e`.
    pub projection_weight: Matrix,
    pub projection_bias: Vec<f64>,
    /// Row 0 produces `logit_0`, row 1 produces `logit_1`.
    pub head_weight: Matrix,
    pub head_bias: [f64; 2],
}

impl MfParams {
    pub fn zeros(m: usize, d_q: usize, d_e: usize) -> Self {
        MfParams {
            model_table: Matrix::zeros(m, d_e),
            projection_weight: Matrix::zeros(d_q, d_e),
            projection_bias: vec![0.0; d_e],
            head_weight: Matrix::zeros(2, d_e),
            head_bias: [0.0; 2],
        }
    }

    pub fn n_models(&self) -> usize {
        self.model_table.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.model_table.cols()
    }

    pub fn question_dim(&self) -> usize {
        self.projection_weight.rows()
    }

    /// The learned model embeddings, one row per model.
    pub fn embeddings(&self) -> &Matrix {
        &self.model_table
    }

    pub fn is_finite(&self) -> bool {
        self.model_table.is_finite()
            && self.projection_weight.is_finite()
            && self.projection_bias.iter().all(|v| v.is_finite())
            && self.head_weight.is_finite()
            && self.head_bias.iter().all(|v| v.is_finite())
    }

    fn check_consistent(&self) -> Result<()> {
        let d_e = self.embed_dim();
        if self.projection_weight.cols() != d_e
            || self.projection_bias.len() != d_e
            || self.head_weight.shape() != (2, d_e)
        {
            return Err(Error::Domain(
                "parameter tensors have inconsistent dimensions".into(),
            ));
        }
        Ok(())
    }

    /// All tensors as flat slices, in a fixed order.
    fn tensors(&self) -> [&[f64]; 5] {
        [
            self.model_table.as_slice(),
            self.projection_weight.as_slice(),
            &self.projection_bias,
            self.head_weight.as_slice(),
            &self.head_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.model_table.as_mut_slice(),
            self.projection_weight.as_mut_slice(),
            &mut self.projection_bias,
            self.head_weight.as_mut_slice(),
            &mut self.head_bias,
        ]
    }

    /// Every scalar parameter, in the order of [`MfParams::tensors`].
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Mutable access to the `idx`-th scalar of [`MfParams::flatten`].
    pub fn scalar_mut(&mut self, mut idx: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if idx < t.len() {
                return &mut t[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range")
    }

    /// Same parameters with model rows reordered: row `i` of the result is
    /// row `perm[i]` of `self`.
    pub fn permute_models(&self, perm: &[usize]) -> MfParams {
        MfParams {
            model_table: self.model_table.select_rows(perm),
            ..self.clone()
        }
    }
}

/// Gradients share the parameter layout.
pub type Gradients = MfParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 128,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 512,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !self.eps.is_finite()
            || self.eps <= 0.0
            || self.weight_decay.is_nan()
            || self.weight_decay < 0.0
        {
            return Err(Error::Config(
                "eps must be positive and weight_decay nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Draw fresh parameters: every weight uniform in `±1/sqrt(d_e)`, biases zero.
pub fn init_params(m: usize, d_q: usize, config: &TrainConfig) -> Result<MfParams> {
    init_params_with(
        m,
        d_q,
        config.embed_dim,
        &mut derived_rng(config.seed, &[0]),
    )
}

pub(crate) fn init_params_with(
    m: usize,
    d_q: usize,
    d_e: usize,
    rng: &mut Rng,
) -> Result<MfParams> {
    if m == 0 || d_q == 0 || d_e == 0 {
        return Err(Error::Config(format!(
            "init needs m, d_q, d_e >= 1 (got {m}, {d_q}, {d_e})"
        )));
    }
    let bound = 1.0 / (d_e as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
    let mut p = MfParams::zeros(m, d_q, d_e);
    for t in [
        p.model_table.as_mut_slice(),
        p.projection_weight.as_mut_slice(),
        p.head_weight.as_mut_slice(),
    ] {
        t.iter_mut().for_each(|v| *v = dist.sample(rng));
    }
    Ok(p)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Cross-entropy of a score against a binary label. `ln` arguments are
/// floored at the smallest positive double so the result is always finite.
pub fn bce_loss(score: f64, label: u8) -> f64 {
    let p = if label == 1 { score } else { 1.0 - score };
    -p.max(f64::MIN_POSITIVE).ln()
}

/// Cross-entropy in terms of the logit difference `z = logit_1 - logit_0`:
/// `softplus(z) - y z`.
#[inline]
pub fn bce_loss_logit(z: f64, label: u8) -> f64 {
    softplus(z) - f64::from(label) * z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOutput {
    pub logit0: f64,
    pub logit1: f64,
    pub score: f64,
}

impl ForwardOutput {
    #[inline]
    pub fn logit_diff(&self) -> f64 {
        self.logit1 - self.logit0
    }
}

/// `h = W^T x + b`, written into `out`.
#[inline]
pub(crate) fn project_into(params: &MfParams, x: &[f64], out: &mut [f64]) {
    let d_e = out.len();
    out.copy_from_slice(&params.projection_bias);
    let w = params.projection_weight.as_slice();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * d_e..(i + 1) * d_e];
        for (o, &wk) in out.iter_mut().zip(row) {
            *o += xi * wk;
        }
    }
}

pub fn project(params: &MfParams, x: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; params.embed_dim()];
    project_into(params, x, &mut h);
    h
}

/// Logits for a model given an already projected question.
#[inline]
pub(crate) fn logits_from_projection(params: &MfParams, model: usize, h: &[f64]) -> (f64, f64) {
    let v = params.model_table.row(model);
    let w0 = params.head_weight.row(0);
    let w1 = params.head_weight.row(1);
    let mut l0 = params.head_bias[0];
    let mut l1 = params.head_bias[1];
    for k in 0..h.len() {
        let a = v[k] * h[k];
        l0 += w0[k] * a;
        l1 += w1[k] * a;
    }
    (l0, l1)
}

#[inline]
pub(crate) fn output_from_projection(params: &MfParams, model: usize, h: &[f64]) -> ForwardOutput {
    let (logit0, logit1) = logits_from_projection(params, model, h);
    ForwardOutput {
        logit0,
        logit1,
        score: sigmoid(logit1 - logit0),
    }
}

pub fn forward(params: &MfParams, model_id: usize, q_vector: &[f64]) -> Result<ForwardOutput> {
    if model_id >= params.n_models() {
        return Err(Error::Domain(format!(
            "model {model_id} out of range for {} models",
            params.n_models()
        )));
    }
    if q_vector.len() != params.question_dim() {
        return Err(Error::Domain(format!(
            "question vector has dimension {}, expected {}",
            q_vector.len(),
            params.question_dim()
        )));
    }
    if q_vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("question vector is not finite".into()));
    }
    let h = project(params, q_vector);
    Ok(output_from_projection(params, model_id, &h))
}

/// Label 1 iff score ≥ 0.5, i.e. iff `logit_1 - logit_0 ≥ 0`.
pub fn predict_correctness(params: &MfParams, model_id: usize, q_vector: &[f64]) -> Result<u8> {
    Ok(u8::from(forward(params, model_id, q_vector)?.score >= 0.5))
}

#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub model: usize,
    pub q_vector: &'a [f64],
    pub label: u8,
}

/// Mean BCE loss over the batch and its exact gradient.
pub fn loss_and_gradients(params: &MfParams, batch: &[Example<'_>]) -> Result<(f64, Gradients)> {
    let mut grads = MfParams::zeros(params.n_models(), params.question_dim(), params.embed_dim());
    let loss = accumulate_gradients(params, batch, &mut grads)?;
    Ok((loss, grads))
}

/// Mean-over-batch gradient of the BCE loss for every parameter tensor.
pub fn gradients(params: &MfParams, batch: &[Example<'_>]) -> Result<Gradients> {
    loss_and_gradients(params, batch).map(|(_, g)| g)
}

/// Overwrites `grads` with the mean gradient; returns the mean loss.
fn accumulate_gradients(
    params: &MfParams,
    batch: &[Example<'_>],
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("gradient batch is empty".into()));
    }
    params.check_consistent()?;
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
    let d_e = params.embed_dim();
    let scale = 1.0 / batch.len() as f64;
    let w0 = params.head_weight.row(0);
    let w1 = params.head_weight.row(1);
    let mut h = vec![0.0; d_e];
    let mut dh = vec![0.0; d_e];
    let mut loss = 0.0;
    for ex in batch {
        if ex.model >= params.n_models() || ex.q_vector.len() != params.question_dim() {
            return Err(Error::Domain(
                "example does not match parameter dimensions".into(),
            ));
        }
        project_into(params, ex.q_vector, &mut h);
        let out = output_from_projection(params, ex.model, &h);
        let z = out.logit_diff();
        loss += bce_loss_logit(z, ex.label);
        // dL/dz = s - y; dL/dlogit_1 = g, dL/dlogit_0 = -g
        let g = (out.score - f64::from(ex.label)) * scale;
        let v = params.model_table.row(ex.model);
        {
            let (gw0, gw1) = grads.head_weight.as_mut_slice().split_at_mut(d_e);
            let gv = grads.model_table.row_mut(ex.model);
            for k in 0..d_e {
                let a = v[k] * h[k];
                gw0[k] -= g * a;
                gw1[k] += g * a;
                let da = g * (w1[k] - w0[k]);
                gv[k] += da * h[k];
                dh[k] = da * v[k];
            }
        }
        grads.head_bias[0] -= g;
        grads.head_bias[1] += g;
        for (gb, d) in grads.projection_bias.iter_mut().zip(&dh) {
            *gb += d;
        }
        let gw = grads.projection_weight.as_mut_slice();
        for (i, &xi) in ex.q_vector.iter().enumerate() {
            let row = &mut gw[i * d_e..(i + 1) * d_e];
            for (r, d) in row.iter_mut().zip(&dh) {
                *r += xi * d;
            }
        }
    }
    Ok(loss * scale)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut MfParams, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let mut offset = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                let gi = g[i] + cfg.weight_decay * p[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
            }
            offset += p.len();
        }
    }
}

fn question_mask(n: usize, questions: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &q in questions {
        mask[q] = true;
    }
    mask
}

fn check_pairing(dataset: &CorrectnessDataset, embeddings: &QuestionEmbeddingTable) -> Result<()> {
    if embeddings.len() != dataset.n_questions() {
        return Err(Error::Domain(format!(
            "{} question embeddings for {} questions",
            embeddings.len(),
            dataset.n_questions()
        )));
    }
    Ok(())
}

/// Fraction of records whose question lies in `questions` that are
/// predicted correctly (label 1 iff score ≥ 0.5).
pub fn test_accuracy(
    params: &MfParams,
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    questions: &[usize],
) -> Result<f64> {
    if questions.is_empty() {
        return Err(Error::Domain("question set is empty".into()));
    }
    check_pairing(dataset, embeddings)?;
    let mask = question_mask(dataset.n_questions(), questions);
    let (hits, total) = count_hits(params, dataset, embeddings, &mask);
    if total == 0 {
        return Err(Error::Domain("no records fall in the question set".into()));
    }
    Ok(hits as f64 / total as f64)
}

fn count_hits(
    params: &MfParams,
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    mask: &[bool],
) -> (usize, usize) {
    let mut h = vec![0.0; params.embed_dim()];
    let mut hits = 0;
    let mut total = 0;
    for q in (0..dataset.n_questions()).filter(|&q| mask[q]) {
        project_into(params, embeddings.vector(q), &mut h);
        for model in 0..dataset.n_models() {
            if let Some(label) = dataset.label(model, q) {
                let pred = u8::from(output_from_projection(params, model, &h).score >= 0.5);
                hits += usize::from(pred == label);
                total += 1;
            }
        }
    }
    (hits, total)
}

/// 64-bit FNV-1a, used to give every record a stable identity.
fn fnv1a(parts: &[&str]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for p in parts {
        for b in p.bytes().chain([0xff]) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Minibatch Adam on the training questions, keeping the parameters of the
/// epoch with the best validation accuracy (first such epoch on ties).
///
/// When the validation split has no records, training accuracy is used for
/// the checkpoint choice instead.
pub fn train(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    config: &TrainConfig,
) -> Result<(MfParams, TrainHistory)> {
    config.validate()?;
    let init = init_params(dataset.n_models(), embeddings.dim(), config)?;
    train_with_init(dataset, embeddings, split, config, init)
}

/// [`train`] from explicit starting parameters (`config.embed_dim` is ignored).
///
/// Each epoch visits the training records in the order of a keyed hash of
/// `(seed, epoch, model id, question id)`. The visiting order therefore
/// depends only on record identity, not on internal indices, so relabelling
/// models together with the starting rows relabels the result exactly.
pub fn train_with_init(
    dataset: &CorrectnessDataset,
    embeddings: &QuestionEmbeddingTable,
    split: &SplitAssignment,
    config: &TrainConfig,
    init: MfParams,
) -> Result<(MfParams, TrainHistory)> {
    let config = &TrainConfig {
        embed_dim: init.embed_dim(),
        ..config.clone()
    };
    config.validate()?;
    check_pairing(dataset, embeddings)?;
    init.check_consistent()?;
    if init.n_models() != dataset.n_models() || init.question_dim() != embeddings.dim() {
        return Err(Error::Domain(
            "initial parameters do not match the data".into(),
        ));
    }
    let train_mask = question_mask(dataset.n_questions(), &split.train);
    let val_mask = question_mask(dataset.n_questions(), &split.validation);
    let train_records: Vec<(u64, Example<'_>)> = dataset
        .records()
        .iter()
        .filter(|r| train_mask[r.question])
        .map(|r| {
            let id = fnv1a(&[
                &dataset.model_ids()[r.model],
                &dataset.question_ids()[r.question],
            ]);
            let ex = Example {
                model: r.model,
                q_vector: embeddings.vector(r.question),
                label: r.label,
            };
            (id, ex)
        })
        .collect();
    if train_records.is_empty() {
        return Err(Error::Domain("training split has no records".into()));
    }
    let has_val = dataset.records().iter().any(|r| val_mask[r.question]);
    let select_mask = if has_val { &val_mask } else { &train_mask };

    let mut params = init;
    let mut adam = Adam::new(params.param_count());
    let mut grads = MfParams::zeros(params.n_models(), params.question_dim(), params.embed_dim());
    let mut order: Vec<(u64, usize)> = Vec::with_capacity(train_records.len());
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_accuracy: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, MfParams)> = None;

    for epoch in 0..config.epochs {
        let epoch_key = derive_seed(config.seed, &[1, epoch as u64]);
        order.clear();
        order.extend(
            train_records
                .iter()
                .enumerate()
                .map(|(i, (id, _))| (derive_seed(epoch_key, &[*id]), i)),
        );
        order.sort_unstable_by_key(|&(key, i)| (key, train_records[i].0));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&(_, i)| train_records[i].1));
            let loss = accumulate_gradients(&params, &batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "loss is not finite".into(),
                });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut params, &grads, config);
        }
        if !params.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "parameters are not finite".into(),
            });
        }
        history
            .train_loss
            .push(loss_sum / train_records.len() as f64);
        let (hits, total) = count_hits(&params, dataset, embeddings, select_mask);
        let acc = hits as f64 / total as f64;
        history.val_accuracy.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            history.best_epoch = epoch;
            best = Some((acc, params.clone()));
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

/// Dimensions and provenance stored next to a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSidecar {
    pub n_models: usize,
    pub question_dim: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub model_ids: Vec<String>,
}

const SECTIONS: [&str; 5] = [
    "model_table",
    "projection_weight",
    "projection_bias",
    "head_weight",
    "head_bias",
];

fn write_rows<W: Write>(w: &mut W, data: &[f64], cols: usize) -> std::io::Result<()> {
    for row in data.chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Write parameters as `# section:<name>` CSV blocks plus a JSON sidecar.
pub fn save_params(
    params: &MfParams,
    csv_path: &Path,
    sidecar_path: &Path,
    sidecar: &ParamsSidecar,
) -> Result<()> {
    let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(csv_path, e);
    let d_e = params.embed_dim();
    let cols = [d_e, d_e, d_e, d_e, 2];
    for ((name, data), cols) in SECTIONS.iter().zip(params.tensors()).zip(cols) {
        writeln!(w, "# section:{name}").map_err(io)?;
        write_rows(&mut w, data, cols).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(sidecar_path, json + "\n").map_err(|e| Error::io(sidecar_path, e))
}

pub fn load_params(csv_path: &Path, sidecar_path: &Path) -> Result<(MfParams, ParamsSidecar)> {
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: ParamsSidecar = serde_json::from_str(&text)?;
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut sections: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(csv_path, e))?;
        let lineno = i as u64 + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("# section:") {
            sections.push((name.trim().to_owned(), Vec::new()));
            continue;
        }
        let Some((_, values)) = sections.last_mut() else {
            return Err(Error::Parse {
                line: lineno,
                message: "data before first section header".into(),
            });
        };
        for tok in line.split(',') {
            values.push(tok.trim().parse().map_err(|e| Error::Parse {
                line: lineno,
                message: format!("{e}"),
            })?);
        }
    }
    let names: Vec<&str> = sections.iter().map(|(n, _)| n.as_str()).collect();
    if names != SECTIONS {
        return Err(Error::Parse {
            line: 0,
            message: format!("expected sections {SECTIONS:?}, found {names:?}"),
        });
    }
    let (m, d_q, d_e) = (sidecar.n_models, sidecar.question_dim, sidecar.embed_dim);
    let mut params = MfParams::zeros(m, d_q, d_e);
    for (dst, (name, src)) in params.tensors_mut().into_iter().zip(&sections) {
        if dst.len() != src.len() {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "section {name} has {} values, expected {}",
                    src.len(),
                    dst.len()
                ),
            });
        }
        dst.copy_from_slice(src);
    }
    if !params.is_finite() {
        return Err(Error::Numeric(
            "parameter file contains non-finite values".into(),
        ));
    }
    Ok((params, sidecar))
}

/// Write `model_id,e0,...` rows.
pub fn save_model_embeddings(path: &Path, model_ids: &[String], embeddings: &Matrix) -> Result<()> {
    write_labelled_rows(path, "model_id", model_ids, embeddings)
}

/// Read a `model_id,e0,...` file, keeping file order.
pub fn load_model_embeddings(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 || &header[0] != "model_id" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `model_id,e0,...`".into(),
        });
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        ids.push(rec[0].to_owned());
        let row = rec
            .iter()
            .skip(1)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok((ids, Matrix::from_rows(&rows)))
}
