//! Piecewise-linear marginal values, global values, threshold-based category
//! assignment and the transformation into the UTA-like standard form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{CriterionScale, SortingModel};

/// Slack allowed when comparing a global value with a threshold. Learned
/// models satisfy their rows only up to solver feasibility, so a value that
/// sits on a threshold may come back a few ulps below it.
pub const THRESHOLD_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueFnError {
    #[error("performance row has {found} entries but the model has {expected} criteria")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("every marginal value function is constant; the transformation is undefined")]
    ZeroRange,
}

/// Marginal value of `x` by linear interpolation between the breakpoint
/// values. `x` is clamped into the scale first.
pub fn marginal_value(scale: &CriterionScale, values: &[f64], x: f64) -> f64 {
    let (l, theta) = scale.locate(x);
    if theta == 0.0 {
        values[l]
    } else if theta == 1.0 {
        values[l + 1]
    } else {
        values[l] + theta * (values[l + 1] - values[l])
    }
}

/// A global value together with whether any performance level had to be
/// clamped into its scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub clamped: bool,
}

fn evaluate_with(
    scales: &[CriterionScale],
    marginals: &[Vec<f64>],
    row: &[f64],
) -> Result<Evaluation, ValueFnError> {
    if row.len() != scales.len() {
        return Err(ValueFnError::DimensionMismatch {
            expected: scales.len(),
            found: row.len(),
        });
    }
    let mut value = 0.0;
    let mut clamped = false;
    for ((scale, values), &x) in scales.iter().zip(marginals).zip(row) {
        clamped |= scale.clamp(x).1;
        value += marginal_value(scale, values, x);
    }
    Ok(Evaluation { value, clamped })
}

/// Category `h` with `b_{h-1} ≤ value < b_h`, given the full threshold
/// vector `(b_0, …, b_q)`. Values below `b_0` go to `1`, values at or above
/// `b_q` go to `q`.
pub fn category_for(full_thresholds: &[f64], value: f64) -> usize {
    let q = full_thresholds.len() - 1;
    let interior = &full_thresholds[1..q];
    1 + interior
        .iter()
        .filter(|&&b| value + THRESHOLD_TOLERANCE >= b)
        .count()
}

impl SortingModel {
    /// Additive global value of a performance row.
    pub fn evaluate(&self, row: &[f64]) -> Result<Evaluation, ValueFnError> {
        evaluate_with(&self.scales, &self.marginals, row)
    }

    pub fn global_value(&self, row: &[f64]) -> Result<f64, ValueFnError> {
        self.evaluate(row).map(|e| e.value)
    }

    pub fn assign_category(&self, value: f64) -> usize {
        category_for(&self.full_thresholds(), value)
    }

    /// Global value and category of a row.
    pub fn sort_row(&self, row: &[f64]) -> Result<usize, ValueFnError> {
        Ok(self.assign_category(self.global_value(row)?))
    }

    /// Builds a model from learned breakpoint values and interior
    /// thresholds, deriving the outer thresholds.
    pub fn from_parts(
        scales: Vec<CriterionScale>,
        marginals: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
        epsilon: f64,
    ) -> Self {
        let (b0, bq) = derive_outer_thresholds(&marginals, epsilon);
        Self {
            scales,
            marginals,
            thresholds,
            epsilon,
            b0,
            bq,
        }
    }

    /// Total absolute slope change of all marginal functions.
    pub fn slope_change(&self) -> f64 {
        self.scales
            .iter()
            .zip(&self.marginals)
            .map(|(scale, v)| {
                let step = scale.step();
                v.windows(3)
                    .map(|w| ((w[1] - w[0]) / step - (w[2] - w[1]) / step).abs())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `b_0 = Σ_j min_l v_j(β^l)` and `b_q = Σ_j max_l v_j(β^l) + ε`.
pub fn derive_outer_thresholds(marginals: &[Vec<f64>], epsilon: f64) -> (f64, f64) {
    let b0 = marginals
        .iter()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    let top: f64 = marginals
        .iter()
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    (b0, top + epsilon)
}

/// A sorting model rescaled so that every marginal function is 0 at its
/// worst breakpoint and the best breakpoints sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedModel {
    pub scales: Vec<CriterionScale>,
    pub marginals: Vec<Vec<f64>>,
    /// Full vector `(b_0^S, …, b_q^S)`.
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub weights: Vec<f64>,
    /// Breakpoint index attaining the minimum (g⁻) and maximum (g⁺) per criterion.
    pub worst: Vec<usize>,
    pub best: Vec<usize>,
}

impl TransformedModel {
    pub fn evaluate(&self, row: &[f64]) -> Result<Evaluation, ValueFnError> {
        evaluate_with(&self.scales, &self.marginals, row)
    }

    pub fn global_value(&self, row: &[f64]) -> Result<f64, ValueFnError> {
        self.evaluate(row).map(|e| e.value)
    }

    pub fn assign_category(&self, value: f64) -> usize {
        category_for(&self.thresholds, value)
    }
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Maps a model into the UTA-like functional space. Ties for g⁻/g⁺ resolve
/// to the lowest breakpoint index.
pub fn transform_to_uta(model: &SortingModel) -> Result<TransformedModel, ValueFnError> {
    let worst: Vec<usize> = model.marginals.iter().map(|v| argmin_first(v)).collect();
    let best: Vec<usize> = model.marginals.iter().map(|v| argmax_first(v)).collect();
    let ranges: Vec<f64> = model
        .marginals
        .iter()
        .zip(worst.iter().zip(&best))
        .map(|(v, (&lo, &hi))| v[hi] - v[lo])
        .collect();
    let denominator: f64 = ranges.iter().sum();
    if !(denominator > 0.0) {
        return Err(ValueFnError::ZeroRange);
    }
    let worst_sum: f64 = model
        .marginals
        .iter()
        .zip(&worst)
        .map(|(v, &lo)| v[lo])
        .sum();

    let marginals = model
        .marginals
        .iter()
        .zip(&worst)
        .map(|(v, &lo)| v.iter().map(|x| (x - v[lo]) / denominator).collect())
        .collect();
    let thresholds = model
        .full_thresholds()
        .iter()
        .map(|b| (b - worst_sum) / denominator)
        .collect();
    Ok(TransformedModel {
        scales: model.scales.clone(),
        marginals,
        thresholds,
        epsilon: model.epsilon / denominator,
        weights: ranges.iter().map(|r| r / denominator).collect(),
        worst,
        best,
    })
}
