//! Text formats: decision matrices and assignment examples as CSV, models
//! and problem bundles as JSON. Field names are listed in `docs/formats.md`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{
    AssignmentExamples, CriterionScale, ProblemInstance, SortingModel, ValidationErrors,
};
use crate::robustness::PossibleAssignment;
use crate::simulate::ExperimentReport;
use crate::valuefn::{transform_to_uta, TransformedModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("matrix has no data rows")]
    EmptyMatrix,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: {cell:?} is not a finite number")]
    NonNumericCell {
        line: usize,
        column: usize,
        cell: String,
    },
    #[error("alternative id {0:?} appears more than once")]
    DuplicateAlternativeId(String),
    #[error("line {line}: unknown alternative {id:?}")]
    UnknownAlternative { line: usize, id: String },
    #[error("line {line}: category {category} outside 1..={q}")]
    CategoryOutOfRange { line: usize, category: String, q: usize },
    #[error("alternative {0:?} has more than one example")]
    DuplicateExample(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("model document has no criteria")]
    EmptyModel,
    #[error("invalid model document: {0}")]
    InvalidModel(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("{0}")]
    Json(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
}

/// Decision matrix with alternative ids and criterion names.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub ids: Vec<String>,
    pub criteria: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

fn csv_records(text: &str) -> Result<Vec<(usize, Vec<String>)>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse_number(cell: &str, line: usize, column: usize) -> Result<f64, IoError> {
    match cell.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(IoError::NonNumericCell {
            line,
            column,
            cell: cell.to_string(),
        }),
    }
}

/// Parses a matrix whose first row is `id,<criterion names…>`.
pub fn parse_matrix(text: &str) -> Result<Matrix, IoError> {
    let records = csv_records(text)?;
    let Some(((_, header), body)) = records.split_first() else {
        return Err(IoError::EmptyMatrix);
    };
    if header.len() < 2 {
        return Err(IoError::Malformed {
            line: 1,
            message: "header needs an id column and at least one criterion".into(),
        });
    }
    if body.is_empty() {
        return Err(IoError::EmptyMatrix);
    }
    let criteria = header[1..].to_vec();
    let mut ids = Vec::with_capacity(body.len());
    let mut rows = Vec::with_capacity(body.len());
    let mut seen = HashMap::new();
    for (line, fields) in body {
        if fields.len() != header.len() {
            return Err(IoError::RaggedRow {
                line: *line,
                expected: header.len(),
                found: fields.len(),
            });
        }
        let id = fields[0].clone();
        if seen.insert(id.clone(), ()).is_some() {
            return Err(IoError::DuplicateAlternativeId(id));
        }
        let row = fields[1..]
            .iter()
            .enumerate()
            .map(|(k, cell)| parse_number(cell, *line, k + 2))
            .collect::<Result<Vec<_>, _>>()?;
        ids.push(id);
        rows.push(row);
    }
    Ok(Matrix {
        ids,
        criteria,
        rows,
    })
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 input")
}

pub fn emit_matrix(matrix: &Matrix) -> String {
    let mut out = String::new();
    let mut header = vec!["alternative".to_string()];
    header.extend(matrix.criteria.iter().cloned());
    out.push_str(&csv_line(&header));
    for (id, row) in matrix.ids.iter().zip(&matrix.rows) {
        let mut fields = vec![id.clone()];
        fields.extend(row.iter().map(|x| x.to_string()));
        out.push_str(&csv_line(&fields));
    }
    out
}

/// Parses `id,category` lines. A first line whose category is not an
/// integer is taken as a header.
pub fn parse_examples(text: &str, ids: &[String], q: usize) -> Result<AssignmentExamples, IoError> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut pairs = Vec::new();
    let mut seen = HashMap::new();
    for (k, (line, fields)) in csv_records(text)?.into_iter().enumerate() {
        if fields.len() != 2 {
            return Err(IoError::RaggedRow {
                line,
                expected: 2,
                found: fields.len(),
            });
        }
        let Ok(category) = fields[1].parse::<usize>() else {
            if k == 0 {
                continue;
            }
            return Err(IoError::CategoryOutOfRange {
                line,
                category: fields[1].clone(),
                q,
            });
        };
        if !(1..=q).contains(&category) {
            return Err(IoError::CategoryOutOfRange {
                line,
                category: fields[1].clone(),
                q,
            });
        }
        let Some(&a) = index.get(fields[0].as_str()) else {
            return Err(IoError::UnknownAlternative {
                line,
                id: fields[0].clone(),
            });
        };
        if seen.insert(a, ()).is_some() {
            return Err(IoError::DuplicateExample(fields[0].clone()));
        }
        pairs.push((a, category));
    }
    Ok(AssignmentExamples::new(pairs))
}

pub fn emit_examples(examples: &AssignmentExamples, ids: &[String]) -> String {
    examples
        .iter()
        .map(|(a, c)| csv_line(&[ids[a].clone(), c.to_string()]))
        .collect()
}

/// One criterion of a model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionDocument {
    pub name: String,
    pub breakpoints: Vec<f64>,
    pub marginals: Vec<f64>,
}

/// The model in the UTA-like standard form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedDocument {
    pub marginals: Vec<Vec<f64>>,
    /// `(b_0^S, …, b_q^S)`.
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub categories: usize,
    pub criteria: Vec<CriterionDocument>,
    /// Interior thresholds `b_1 … b_{q-1}`.
    pub thresholds: Vec<f64>,
    pub b0: f64,
    pub bq: f64,
    pub epsilon: f64,
    /// Absent when every marginal function is constant.
    pub transformed: Option<TransformedDocument>,
}

pub const MODEL_FORMAT: &str = "mcsort-model/1";

impl From<&TransformedModel> for TransformedDocument {
    fn from(t: &TransformedModel) -> Self {
        Self {
            marginals: t.marginals.clone(),
            thresholds: t.thresholds.clone(),
            epsilon: t.epsilon,
            weights: t.weights.clone(),
        }
    }
}

/// Builds the document for a model. Criterion names default to `g1, g2, …`.
pub fn model_document(model: &SortingModel, names: Option<&[String]>) -> ModelDocument {
    let criteria = model
        .scales
        .iter()
        .zip(&model.marginals)
        .enumerate()
        .map(|(j, (scale, values))| CriterionDocument {
            name: names
                .and_then(|n| n.get(j).cloned())
                .unwrap_or_else(|| format!("g{}", j + 1)),
            breakpoints: scale.breakpoints().to_vec(),
            marginals: values.clone(),
        })
        .collect();
    ModelDocument {
        format: MODEL_FORMAT.to_string(),
        categories: model.categories(),
        criteria,
        thresholds: model.thresholds.clone(),
        b0: model.b0,
        bq: model.bq,
        epsilon: model.epsilon,
        transformed: transform_to_uta(model).ok().as_ref().map(Into::into),
    }
}

pub fn emit_model(model: &SortingModel, names: Option<&[String]>) -> String {
    let mut text = serde_json::to_string_pretty(&model_document(model, names))
        .expect("model documents always serialize");
    text.push('\n');
    text
}

/// Parses a model document back into a model and its criterion names.
pub fn parse_model(text: &str) -> Result<(SortingModel, Vec<String>), IoError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| IoError::Json(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(IoError::InvalidModel(format!("unknown format {:?}", doc.format)));
    }
    if doc.criteria.is_empty() {
        return Err(IoError::EmptyModel);
    }
    if doc.categories < 2 || doc.thresholds.len() + 1 != doc.categories {
        return Err(IoError::InvalidModel(format!(
            "{} categories need {} interior thresholds, found {}",
            doc.categories,
            doc.categories.saturating_sub(1),
            doc.thresholds.len()
        )));
    }
    let mut scales = Vec::with_capacity(doc.criteria.len());
    let mut marginals = Vec::with_capacity(doc.criteria.len());
    let mut names = Vec::with_capacity(doc.criteria.len());
    for c in doc.criteria {
        let scale = CriterionScale::from_breakpoints(c.breakpoints).map_err(|_| {
            IoError::InvalidModel(format!("criterion {}: breakpoints are not an equal grid", c.name))
        })?;
        if c.marginals.len() != scale.breakpoints().len() {
            return Err(IoError::InvalidModel(format!(
                "criterion {}: {} marginal values for {} breakpoints",
                c.name,
                c.marginals.len(),
                scale.breakpoints().len()
            )));
        }
        scales.push(scale);
        marginals.push(c.marginals);
        names.push(c.name);
    }
    let model = SortingModel {
        scales,
        marginals,
        thresholds: doc.thresholds,
        epsilon: doc.epsilon,
        b0: doc.b0,
        bq: doc.bq,
    };
    Ok((model, names))
}

/// Subinterval counts: one for every criterion or one each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subintervals {
    Uniform(usize),
    PerCriterion(Vec<usize>),
}

impl Subintervals {
    pub fn resolve(&self, criteria: usize) -> Result<Vec<usize>, String> {
        match self {
            Subintervals::Uniform(s) => Ok(vec![*s; criteria]),
            Subintervals::PerCriterion(v) if v.len() == criteria => Ok(v.clone()),
            Subintervals::PerCriterion(v) => Err(format!(
                "{} subinterval counts for {criteria} criteria",
                v.len()
            )),
        }
    }
}

/// Options file tying a matrix and an examples file together. Paths are
/// relative to the options file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleOptions {
    pub matrix: PathBuf,
    pub examples: PathBuf,
    pub categories: usize,
    pub subintervals: Subintervals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBundle {
    pub options: BundleOptions,
    pub matrix: Matrix,
    pub instance: ProblemInstance,
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Builds a validated instance from a matrix, examples text and options.
pub fn assemble_instance(
    matrix: &Matrix,
    examples_text: &str,
    categories: usize,
    subintervals: &Subintervals,
) -> Result<ProblemInstance, IoError> {
    let s = subintervals
        .resolve(matrix.criteria.len())
        .map_err(IoError::InvalidBundle)?;
    let examples = parse_examples(examples_text, &matrix.ids, categories)?;
    Ok(ProblemInstance::from_matrix(
        matrix.rows.clone(),
        &s,
        categories,
        examples,
    )?)
}

pub fn load_bundle(path: &Path) -> Result<ProblemBundle, IoError> {
    let options: BundleOptions =
        serde_json::from_str(&read_text(path)?).map_err(|e| IoError::Json(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let matrix = parse_matrix(&read_text(&base.join(&options.matrix))?)?;
    if let Some(names) = &options.criteria {
        if names != &matrix.criteria {
            return Err(IoError::InvalidBundle(format!(
                "criteria {names:?} do not match matrix header {:?}",
                matrix.criteria
            )));
        }
    }
    let examples = read_text(&base.join(&options.examples))?;
    let instance = assemble_instance(&matrix, &examples, options.categories, &options.subintervals)?;
    Ok(ProblemBundle {
        options,
        matrix,
        instance,
    })
}

/// `alternative,category` lines for the given assignments.
pub fn emit_assignments(assignments: &[(usize, usize)], ids: &[String]) -> String {
    let mut out = csv_line(&["alternative".into(), "category".into()]);
    for &(a, h) in assignments {
        out.push_str(&csv_line(&[ids[a].clone(), h.to_string()]));
    }
    out
}

/// One line per alternative: its possible categories joined by `;`, then
/// the largest ε per category (empty when infeasible).
pub fn emit_possible(sets: &[PossibleAssignment], ids: &[String], q: usize) -> String {
    let mut header = vec!["alternative".to_string(), "possible".to_string()];
    header.extend((1..=q).map(|h| format!("eps_c{h}")));
    let mut out = csv_line(&header);
    for s in sets {
        let possible: Vec<String> = s.categories.iter().map(|h| h.to_string()).collect();
        let mut fields = vec![ids[s.alternative].clone(), possible.join(";")];
        fields.extend(
            s.eps
                .iter()
                .map(|e| e.map(|x| x.to_string()).unwrap_or_default()),
        );
        out.push_str(&csv_line(&fields));
    }
    out
}

pub fn emit_report(report: &ExperimentReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("reports always serialize");
    text.push('\n');
    text
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `name,applicable,mean,std,failures,reference_violations`; means are
/// empty for learners that do not apply.
pub fn emit_summary_csv(report: &ExperimentReport) -> String {
    let header = ["name", "applicable", "mean", "std", "failures", "reference_violations"];
    let mut out = csv_line(&header.map(String::from));
    for s in &report.summaries {
        out.push_str(&csv_line(&[
            s.name.clone(),
            s.applicable.to_string(),
            opt(s.mean),
            opt(s.std),
            s.failures.to_string(),
            s.reference_violations.to_string(),
        ]));
    }
    out
}

/// `a,b,t,df,p,reject,note`, one line per paired test.
pub fn emit_tests_csv(report: &ExperimentReport) -> String {
    let header = ["a", "b", "t", "df", "p", "reject", "note"];
    let mut out = csv_line(&header.map(String::from));
    for c in &report.comparisons {
        let t = c.test.as_ref();
        out.push_str(&csv_line(&[
            c.a.clone(),
            c.b.clone(),
            opt(t.map(|t| t.t)),
            t.map(|t| t.df.to_string()).unwrap_or_default(),
            opt(t.map(|t| t.p)),
            t.map(|t| t.reject.to_string()).unwrap_or_default(),
            c.note.clone().unwrap_or_default(),
        ]));
    }
    out
}
