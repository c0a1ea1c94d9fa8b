//! Correctness records, question embeddings, splits and per-model accuracy.
//!
//! Identifiers in files are arbitrary strings. On load they are densified to
//! contiguous 0-based indices in lexicographic order of the original ids, so
//! the same file always produces the same internal indexing regardless of
//! row order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

pub const CORRECTNESS_HEADER: [&str; 4] = ["model_id", "question_id", "benchmark", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorrectnessRecord {
    pub model: usize,
    pub question: usize,
    /// Index into [`CorrectnessDataset::benchmarks`].
    pub benchmark: usize,
    pub label: u8,
}

/// Binary correctness labels of `m` models over `n` questions.
///
/// Missing (model, question) pairs are allowed; everything downstream only
/// looks at present records.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessDataset {
    records: Vec<CorrectnessRecord>,
    model_ids: Vec<String>,
    model_names: Vec<String>,
    model_tags: Vec<BTreeSet<String>>,
    question_ids: Vec<String>,
    question_benchmark: Vec<usize>,
    benchmarks: Vec<String>,
    // m*n, -1 where absent
    dense: Vec<i8>,
}

impl CorrectnessDataset {
    /// Build from already-indexed parts, validating every invariant.
    pub fn new(
        model_ids: Vec<String>,
        question_ids: Vec<String>,
        benchmarks: Vec<String>,
        question_benchmark: Vec<usize>,
        records: Vec<CorrectnessRecord>,
    ) -> Result<Self> {
        let m = model_ids.len();
        let n = question_ids.len();
        if question_benchmark.len() != n {
            return Err(Error::Domain(format!(
                "question_benchmark has {} entries for {n} questions",
                question_benchmark.len()
            )));
        }
        if let Some(&b) = question_benchmark.iter().find(|&&b| b >= benchmarks.len()) {
            return Err(Error::Domain(format!("benchmark index {b} out of range")));
        }
        let mut dense = vec![-1i8; m * n];
        for r in &records {
            if r.model >= m || r.question >= n {
                return Err(Error::Domain(format!(
                    "record ({}, {}) out of range for m={m}, n={n}",
                    r.model, r.question
                )));
            }
            if r.label > 1 {
                return Err(Error::Domain(format!("label {} is not 0 or 1", r.label)));
            }
            if r.benchmark != question_benchmark[r.question] {
                return Err(Error::Domain(format!(
                    "record for question `{}` has benchmark `{}` but the question belongs to `{}`",
                    question_ids[r.question],
                    benchmarks.get(r.benchmark).map_or("?", String::as_str),
                    benchmarks[question_benchmark[r.question]]
                )));
            }
            let cell = &mut dense[r.model * n + r.question];
            if *cell >= 0 {
                return Err(Error::Duplicate {
                    model: model_ids[r.model].clone(),
                    question: question_ids[r.question].clone(),
                    line: 0,
                });
            }
            *cell = r.label as i8;
        }
        Ok(CorrectnessDataset {
            records,
            model_names: model_ids.clone(),
            model_tags: vec![BTreeSet::new(); m],
            model_ids,
            question_ids,
            question_benchmark,
            benchmarks,
            dense,
        })
    }

    /// Build from string-keyed rows. Ids are indexed lexicographically.
    ///
    /// Each row carries the 1-based line number used in error messages.
    pub fn from_string_rows<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, String, String, String, u8)>,
    {
        let rows: Vec<_> = rows.into_iter().collect();
        let models: BTreeSet<&str> = rows.iter().map(|r| r.1.as_str()).collect();
        let questions: BTreeSet<&str> = rows.iter().map(|r| r.2.as_str()).collect();
        let benches: BTreeSet<&str> = rows.iter().map(|r| r.3.as_str()).collect();
        let model_idx: BTreeMap<&str, usize> =
            models.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let question_idx: BTreeMap<&str, usize> =
            questions.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let bench_idx: BTreeMap<&str, usize> =
            benches.iter().enumerate().map(|(i, s)| (*s, i)).collect();

        let n = questions.len();
        let m = models.len();
        let mut question_benchmark = vec![usize::MAX; n];
        let mut seen = vec![false; m * n];
        let mut records = Vec::with_capacity(rows.len());
        for (line, model, question, bench, label) in &rows {
            let (mi, qi, bi) = (
                model_idx[model.as_str()],
                question_idx[question.as_str()],
                bench_idx[bench.as_str()],
            );
            if *label > 1 {
                return Err(Error::Domain(format!(
                    "label {label} at line {line} is not 0 or 1"
                )));
            }
            if question_benchmark[qi] == usize::MAX {
                question_benchmark[qi] = bi;
            } else if question_benchmark[qi] != bi {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("question `{question}` appears under two benchmarks"),
                });
            }
            if std::mem::replace(&mut seen[mi * n + qi], true) {
                return Err(Error::Duplicate {
                    model: model.clone(),
                    question: question.clone(),
                    line: *line,
                });
            }
            records.push(CorrectnessRecord {
                model: mi,
                question: qi,
                benchmark: bi,
                label: *label,
            });
        }
        records.sort_unstable();
        CorrectnessDataset::new(
            models.into_iter().map(str::to_owned).collect(),
            questions.into_iter().map(str::to_owned).collect(),
            benches.into_iter().map(str::to_owned).collect(),
            question_benchmark,
            records,
        )
    }

    pub fn records(&self) -> &[CorrectnessRecord] {
        &self.records
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn benchmarks(&self) -> &[String] {
        &self.benchmarks
    }

    pub fn benchmark_index(&self, name: &str) -> Option<usize> {
        self.benchmarks.iter().position(|b| b == name)
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    /// Display names; equal to the ids unless metadata was applied.
    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn model_tags(&self) -> &[BTreeSet<String>] {
        &self.model_tags
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn question_benchmark(&self, question: usize) -> usize {
        self.question_benchmark[question]
    }

    pub fn questions_in_benchmark(&self, benchmark: usize) -> Vec<usize> {
        (0..self.n_questions())
            .filter(|&q| self.question_benchmark[q] == benchmark)
            .collect()
    }

    #[inline]
    pub fn label(&self, model: usize, question: usize) -> Option<u8> {
        let v = self.dense[model * self.n_questions() + question];
        (v >= 0).then_some(v as u8)
    }

    /// Attach display names and community tags. Unknown model ids are an error.
    pub fn apply_metadata(&mut self, meta: &[ModelMetadata]) -> Result<()> {
        for entry in meta {
            let idx = self
                .model_ids
                .iter()
                .position(|id| *id == entry.model_id)
                .ok_or_else(|| {
                    Error::Domain(format!("metadata names unknown model `{}`", entry.model_id))
                })?;
            self.model_names[idx] = entry.name.clone();
            self.model_tags[idx] = entry.tags.clone();
        }
        Ok(())
    }

    /// Keep only questions from the given benchmarks, renumbering questions
    /// densely. Returns the new dataset and, for each new question index, the
    /// old one (use it with [`QuestionEmbeddingTable::select`]). Models and
    /// their tags are kept as-is, even if they lose every record.
    pub fn restrict_to_benchmarks(&self, keep: &[usize]) -> (CorrectnessDataset, Vec<usize>) {
        let keep: BTreeSet<usize> = keep.iter().copied().collect();
        let old_questions: Vec<usize> = (0..self.n_questions())
            .filter(|&q| keep.contains(&self.question_benchmark[q]))
            .collect();
        let mut new_index = vec![usize::MAX; self.n_questions()];
        for (new, &old) in old_questions.iter().enumerate() {
            new_index[old] = new;
        }
        let records = self
            .records
            .iter()
            .filter(|r| new_index[r.question] != usize::MAX)
            .map(|r| CorrectnessRecord {
                question: new_index[r.question],
                ..*r
            })
            .collect();
        let mut out = CorrectnessDataset::new(
            self.model_ids.clone(),
            old_questions
                .iter()
                .map(|&q| self.question_ids[q].clone())
                .collect(),
            self.benchmarks.clone(),
            old_questions
                .iter()
                .map(|&q| self.question_benchmark[q])
                .collect(),
            records,
        )
        .expect("restriction of a valid dataset is valid");
        out.model_names = self.model_names.clone();
        out.model_tags = self.model_tags.clone();
        (out, old_questions)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", CORRECTNESS_HEADER.join(",")).map_err(io)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                self.model_ids[r.model],
                self.question_ids[r.question],
                self.benchmarks[r.benchmark],
                r.label
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn save_metadata(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "model_id,name,tags").map_err(io)?;
        for i in 0..self.n_models() {
            let tags: Vec<&str> = self.model_tags[i].iter().map(String::as_str).collect();
            writeln!(
                w,
                "{},{},{}",
                self.model_ids[i],
                self.model_names[i],
                tags.join("|")
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn check_header(rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(csv_error)?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

/// Load a correctness CSV (`model_id,question_id,benchmark,label`).
pub fn load_correctness(path: &Path) -> Result<CorrectnessDataset> {
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, &CORRECTNESS_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let label = match &rec[3] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Domain(format!(
                    "label `{other}` at line {line} is not 0 or 1"
                )))
            }
        };
        if rec[0].is_empty() || rec[1].is_empty() || rec[2].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty identifier".into(),
            });
        }
        rows.push((
            line,
            rec[0].to_owned(),
            rec[1].to_owned(),
            rec[2].to_owned(),
            label,
        ));
    }
    CorrectnessDataset::from_string_rows(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelMetadata {
    pub model_id: String,
    pub name: String,
    pub tags: BTreeSet<String>,
}

/// Load the optional model metadata CSV (`model_id,name,tags`, tags `|`-separated).
pub fn load_model_metadata(path: &Path) -> Result<Vec<ModelMetadata>> {
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, &["model_id", "name", "tags"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let tags = rec[2]
            .split('|')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect();
        out.push(ModelMetadata {
            model_id: rec[0].to_owned(),
            name: rec[1].to_owned(),
            tags,
        });
    }
    Ok(out)
}

/// Precomputed question vectors, one row per dataset question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEmbeddingTable {
    vectors: Matrix,
}

impl QuestionEmbeddingTable {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if !vectors.is_finite() {
            return Err(Error::Numeric(
                "question embeddings contain non-finite values".into(),
            ));
        }
        Ok(QuestionEmbeddingTable { vectors })
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    #[inline]
    pub fn vector(&self, question: usize) -> &[f64] {
        self.vectors.row(question)
    }

    pub fn select(&self, questions: &[usize]) -> QuestionEmbeddingTable {
        QuestionEmbeddingTable {
            vectors: self.vectors.select_rows(questions),
        }
    }

    /// Load `question_id,e0,...` and align rows to `dataset`'s question order.
    /// Rows for questions the dataset does not contain are ignored.
    pub fn load(path: &Path, dataset: &CorrectnessDataset) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.len() < 2 || &header[0] != "question_id" {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `question_id,e0,e1,...`".into(),
            });
        }
        let d = header.len() - 1;
        for (k, h) in header.iter().skip(1).enumerate() {
            if h != format!("e{k}") {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("column {} should be `e{k}`, found `{h}`", k + 1),
                });
            }
        }
        let index: BTreeMap<&str, usize> = dataset
            .question_ids()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let n = dataset.n_questions();
        let mut vectors = Matrix::zeros(n, d);
        let mut filled = vec![false; n];
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            let Some(&q) = index.get(&rec[0]) else {
                continue;
            };
            if std::mem::replace(&mut filled[q], true) {
                return Err(Error::Parse {
                    line,
                    message: format!("question `{}` embedded twice", &rec[0]),
                });
            }
            let row = vectors.row_mut(q);
            for k in 0..d {
                let v: f64 = rec[k + 1].parse().map_err(|e| Error::Parse {
                    line,
                    message: format!("column e{k}: {e}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite value at line {line}")));
                }
                row[k] = v;
            }
        }
        if let Some(q) = filled.iter().position(|f| !f) {
            return Err(Error::Coverage(format!(
                "question `{}` has no embedding",
                dataset.question_ids()[q]
            )));
        }
        QuestionEmbeddingTable::new(vectors)
    }

    pub fn save(&self, path: &Path, question_ids: &[String]) -> Result<()> {
        assert_eq!(question_ids.len(), self.len());
        write_labelled_rows(path, "question_id", question_ids, &self.vectors)
    }
}

/// Write `id_col,e0,...,e{d-1}` rows.
pub(crate) fn write_labelled_rows(
    path: &Path,
    id_col: &str,
    ids: &[String],
    rows: &Matrix,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "{id_col}").map_err(io)?;
    for k in 0..rows.cols() {
        write!(w, ",e{k}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (id, row) in ids.iter().zip(rows.iter_rows()) {
        write!(w, "{id}").map_err(io)?;
        for v in row {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Train/validation/test partition of question indices (each sorted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Largest-remainder apportionment of `n` items over `ratios`.
///
/// Equal remainders go to the later part first.
pub fn apportion(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::Config(format!(
            "ratios must be positive, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios sum to {total}, expected 1")));
    }
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(b.cmp(&a))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Shuffle `0..n` with `seed` and cut it into consecutive parts of the
/// apportioned sizes. Each part is returned sorted.
pub fn random_partition(n: usize, ratios: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let sizes = apportion(n, ratios)?;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng_from_seed(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for s in sizes {
        let mut part = ids[start..start + s].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += s;
    }
    Ok(parts)
}

/// Random (unstratified) train/validation/test split of the questions.
pub fn split_questions(
    dataset: &CorrectnessDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let mut parts =
        random_partition(dataset.n_questions(), &[ratios.0, ratios.1, ratios.2], seed)?.into_iter();
    Ok(SplitAssignment {
        train: parts.next().unwrap(),
        validation: parts.next().unwrap(),
        test: parts.next().unwrap(),
        seed,
    })
}

/// Mean label of every model over the questions in `question_subset`.
pub fn accuracy_by_model(
    dataset: &CorrectnessDataset,
    question_subset: &[usize],
) -> Result<Vec<f64>> {
    if question_subset.is_empty() {
        return Err(Error::Domain("question subset is empty".into()));
    }
    let m = dataset.n_models();
    let mut correct = vec![0usize; m];
    let mut seen = vec![0usize; m];
    for &q in question_subset {
        if q >= dataset.n_questions() {
            return Err(Error::Domain(format!("question index {q} out of range")));
        }
        for i in 0..m {
            if let Some(l) = dataset.label(i, q) {
                seen[i] += 1;
                correct[i] += l as usize;
            }
        }
    }
    if let Some(i) = seen.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!(
            "model `{}` has no records in the question subset",
            dataset.model_ids()[i]
        )));
    }
    Ok(correct
        .iter()
        .zip(&seen)
        .map(|(&c, &s)| c as f64 / s as f64)
        .collect())
}
