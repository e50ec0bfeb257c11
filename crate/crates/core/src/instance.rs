//! Problem instances: decision matrix, criterion scales, assignment examples
//! and the learned sorting model.
//!
//! Categories are 1-indexed (`1` is the worst category, `q` the best) while
//! alternatives and criteria are 0-indexed.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single violated invariant found while validating a [`ProblemInstance`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("matrix: the decision matrix has no alternatives or no criteria")]
    EmptyMatrix,
    #[error("matrix[{row}][{column}]: performance level {value} is not finite")]
    NonFinitePerformance { row: usize, column: usize, value: f64 },
    #[error("matrix[{row}]: expected {expected} performance levels, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("criteria: expected {expected} criterion scales, found {found}")]
    CriteriaCount { expected: usize, found: usize },
    #[error("criteria[{criterion}]: scale minimum {min} is not below maximum {max}")]
    DegenerateCriterion { criterion: usize, min: f64, max: f64 },
    #[error("criteria[{criterion}]: breakpoints are not the equally spaced grid of the scale")]
    MalformedBreakpoints { criterion: usize },
    #[error("examples: alternative {alternative} appears more than once")]
    DuplicateExample { alternative: usize },
    #[error("examples: alternative index {alternative} is outside 0..{n}")]
    AlternativeOutOfRange { alternative: usize, n: usize },
    #[error("{field}: category {category} is outside 1..={q}")]
    CategoryOutOfRange {
        field: &'static str,
        category: usize,
        q: usize,
    },
}

/// Every violation found by [`ProblemInstance::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid problem instance:")?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Equally spaced breakpoints `min = β¹ < β² < … < β^{s+1} = max`.
pub fn compute_breakpoints(min: f64, max: f64, s: usize) -> Result<Vec<f64>, ValidationError> {
    if !(min < max) || s == 0 {
        return Err(ValidationError::DegenerateCriterion {
            criterion: 0,
            min,
            max,
        });
    }
    let width = max - min;
    Ok((0..=s)
        .map(|l| {
            if l == s {
                max
            } else {
                min + (l as f64 / s as f64) * width
            }
        })
        .collect())
}

/// Performance range of one criterion split into `s` equal subintervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScale {
    min: f64,
    max: f64,
    breakpoints: Vec<f64>,
}

impl CriterionScale {
    pub fn new(min: f64, max: f64, subintervals: usize) -> Result<Self, ValidationError> {
        let breakpoints = compute_breakpoints(min, max, subintervals)?;
        Ok(Self {
            min,
            max,
            breakpoints,
        })
    }

    /// Rebuilds a scale from stored breakpoints, checking they form the
    /// equally spaced grid of their endpoints.
    pub fn from_breakpoints(breakpoints: Vec<f64>) -> Result<Self, ValidationError> {
        if breakpoints.len() < 2 {
            return Err(ValidationError::MalformedBreakpoints { criterion: 0 });
        }
        let min = breakpoints[0];
        let max = *breakpoints.last().unwrap();
        let expected = compute_breakpoints(min, max, breakpoints.len() - 1)?;
        let tol = 1e-9 * (max - min).abs().max(1.0);
        if expected
            .iter()
            .zip(&breakpoints)
            .any(|(a, b)| (a - b).abs() > tol)
        {
            return Err(ValidationError::MalformedBreakpoints { criterion: 0 });
        }
        Ok(Self {
            min,
            max,
            breakpoints,
        })
    }

    /// Scale spanning the observed range of a column.
    pub fn from_observations(values: &[f64], subintervals: usize) -> Result<Self, ValidationError> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(min, max, subintervals)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn subintervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Width of every subinterval.
    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.subintervals() as f64
    }

    /// Clamps `x` into the scale; the flag is set when clamping moved it.
    pub fn clamp(&self, x: f64) -> (f64, bool) {
        if x < self.min {
            (self.min, true)
        } else if x > self.max {
            (self.max, true)
        } else {
            (x, false)
        }
    }

    /// Locates a (clamped) performance level: returns the index `l` of the
    /// left breakpoint of the containing subinterval and the interpolation
    /// weight `θ ∈ [0, 1]` of the right breakpoint. Exact breakpoints get
    /// `θ = 0` except the last one, which is reported as `(s - 1, 1)`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let (x, _) = self.clamp(x);
        let s = self.subintervals();
        if let Some(l) = self.breakpoints.iter().position(|&b| b == x) {
            return if l == s { (s - 1, 1.0) } else { (l, 0.0) };
        }
        let mut l = ((x - self.min) / self.step()).floor() as usize;
        l = l.min(s - 1);
        // floating point can put x just outside the computed cell
        while l > 0 && x < self.breakpoints[l] {
            l -= 1;
        }
        while l + 1 < s && x >= self.breakpoints[l + 1] {
            l += 1;
        }
        let (lo, hi) = (self.breakpoints[l], self.breakpoints[l + 1]);
        let theta = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        (l, theta)
    }
}

/// Decision-maker statements `a_i → C_{B_i}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentExamples {
    pairs: Vec<(usize, usize)>,
}

impl AssignmentExamples {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn category_of(&self, alternative: usize) -> Option<usize> {
        self.pairs
            .iter()
            .find(|(a, _)| *a == alternative)
            .map(|&(_, c)| c)
    }

    pub fn contains(&self, alternative: usize) -> bool {
        self.category_of(alternative).is_some()
    }

    /// Copy with one more statement appended.
    pub fn with_example(&self, alternative: usize, category: usize) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.push((alternative, category));
        Self { pairs }
    }
}

impl FromIterator<(usize, usize)> for AssignmentExamples {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// A multi-criteria sorting problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    matrix: Vec<Vec<f64>>,
    criteria: Vec<CriterionScale>,
    categories: usize,
    examples: AssignmentExamples,
}

impl ProblemInstance {
    /// Assembles an instance without checking it; call [`validate`](Self::validate)
    /// before handing it to a learner.
    pub fn new(
        matrix: Vec<Vec<f64>>,
        criteria: Vec<CriterionScale>,
        categories: usize,
        examples: AssignmentExamples,
    ) -> Self {
        Self {
            matrix,
            criteria,
            categories,
            examples,
        }
    }

    /// Builds scales from the observed range of each matrix column and validates.
    pub fn from_matrix(
        matrix: Vec<Vec<f64>>,
        subintervals: &[usize],
        categories: usize,
        examples: AssignmentExamples,
    ) -> Result<Self, ValidationErrors> {
        let m = matrix.first().map_or(0, Vec::len);
        if matrix.is_empty() || m == 0 {
            return Err(ValidationErrors(vec![ValidationError::EmptyMatrix]));
        }
        if subintervals.len() != m {
            return Err(ValidationErrors(vec![ValidationError::CriteriaCount {
                expected: m,
                found: subintervals.len(),
            }]));
        }
        let mut errors = Vec::new();
        let mut criteria = Vec::with_capacity(m);
        for (j, &s) in subintervals.iter().enumerate() {
            let column: Vec<f64> = matrix.iter().filter_map(|r| r.get(j).copied()).collect();
            match CriterionScale::from_observations(&column, s.max(1)) {
                Ok(scale) => criteria.push(scale),
                Err(ValidationError::DegenerateCriterion { min, max, .. }) => {
                    errors.push(ValidationError::DegenerateCriterion {
                        criterion: j,
                        min,
                        max,
                    })
                }
                Err(e) => errors.push(e),
            }
        }
        if !errors.is_empty() {
            return Err(ValidationErrors(errors));
        }
        Self::new(matrix, criteria, categories, examples).validate()
    }

    /// Returns the instance unchanged when every invariant holds, otherwise
    /// all violations.
    pub fn validate(self) -> Result<Self, ValidationErrors> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(ValidationErrors(errors))
        }
    }

    fn violations(&self) -> Vec<ValidationError> {
        let mut errors = Vec::new();
        let n = self.matrix.len();
        let m = self.matrix.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            errors.push(ValidationError::EmptyMatrix);
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != m {
                errors.push(ValidationError::RaggedRow {
                    row: i,
                    expected: m,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    errors.push(ValidationError::NonFinitePerformance {
                        row: i,
                        column: j,
                        value: x,
                    });
                }
            }
        }
        if self.criteria.len() != m {
            errors.push(ValidationError::CriteriaCount {
                expected: m,
                found: self.criteria.len(),
            });
        }
        for (j, c) in self.criteria.iter().enumerate() {
            if !(c.min < c.max) {
                errors.push(ValidationError::DegenerateCriterion {
                    criterion: j,
                    min: c.min,
                    max: c.max,
                });
            } else if CriterionScale::from_breakpoints(c.breakpoints.clone()).is_err() {
                errors.push(ValidationError::MalformedBreakpoints { criterion: j });
            }
        }
        if self.categories < 2 {
            errors.push(ValidationError::CategoryOutOfRange {
                field: "categories",
                category: self.categories,
                q: 2,
            });
        }
        let mut seen = HashSet::new();
        for (a, c) in self.examples.iter() {
            if a >= n {
                errors.push(ValidationError::AlternativeOutOfRange { alternative: a, n });
            }
            if !seen.insert(a) {
                errors.push(ValidationError::DuplicateExample { alternative: a });
            }
            if c < 1 || c > self.categories {
                errors.push(ValidationError::CategoryOutOfRange {
                    field: "examples",
                    category: c,
                    q: self.categories,
                });
            }
        }
        errors
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn row(&self, alternative: usize) -> &[f64] {
        &self.matrix[alternative]
    }

    pub fn criteria(&self) -> &[CriterionScale] {
        &self.criteria
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn examples(&self) -> &AssignmentExamples {
        &self.examples
    }

    pub fn alternatives(&self) -> usize {
        self.matrix.len()
    }

    pub fn criteria_count(&self) -> usize {
        self.criteria.len()
    }

    /// Same matrix and scales, different examples.
    pub fn with_examples(&self, examples: AssignmentExamples) -> Self {
        Self {
            examples,
            ..self.clone()
        }
    }

    /// Alternatives without an assignment example, in index order.
    pub fn non_reference(&self) -> Vec<usize> {
        (0..self.alternatives())
            .filter(|&i| !self.examples.contains(i))
            .collect()
    }

    /// True when at least one criterion has two or more subintervals, i.e.
    /// slope changes exist.
    pub fn has_slope_changes(&self) -> bool {
        self.criteria.iter().any(|c| c.subintervals() >= 2)
    }
}

/// Learned threshold-based additive sorting model.
///
/// `marginals[j][l]` is the value of criterion `j` at breakpoint `l`;
/// `thresholds` holds the interior thresholds `b_1 … b_{q-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingModel {
    pub scales: Vec<CriterionScale>,
    pub marginals: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub b0: f64,
    pub bq: f64,
}

impl SortingModel {
    /// Number of categories `q`.
    pub fn categories(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Full threshold vector `(b_0, b_1, …, b_q)`.
    pub fn full_thresholds(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.thresholds.len() + 2);
        b.push(self.b0);
        b.extend_from_slice(&self.thresholds);
        b.push(self.bq);
        b
    }
}
