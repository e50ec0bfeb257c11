//! Possible assignments of non-reference alternatives and the APA metric.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::{
    add_assignment_examples, add_threshold_ordering, add_value_bounds, BoundBox, EpsilonTerm,
    VariableLayout,
};
use crate::instance::ProblemInstance;
use crate::solver::{LinearProgram, ObjectiveSense, Solver, SolverError, Status};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RobustnessError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("APA needs at least two categories")]
    TooFewCategories,
    #[error("APA needs at least one alternative")]
    NoAlternatives,
    #[error("alternative {0} has no possible category")]
    EmptySet(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessConfig {
    /// A category is possible when its largest ε exceeds this.
    pub tau: f64,
    /// Upper bound for ε; `None` means `m`.
    pub eps_cap: Option<f64>,
    pub bounds: BoundBox,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            tau: 1e-6,
            eps_cap: None,
            bounds: BoundBox::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PossibleAssignment {
    pub alternative: usize,
    /// Possible categories in increasing order.
    pub categories: Vec<usize>,
    /// Largest ε per category `1..=q`; `None` when infeasible.
    pub eps: Vec<Option<f64>>,
}

/// Largest ε for which the examples plus `alternative → category` admit a
/// model, or `None` when they admit none.
pub fn max_epsilon_with(
    instance: &ProblemInstance,
    alternative: usize,
    category: usize,
    config: &RobustnessConfig,
    solver: &Solver,
) -> Result<Option<f64>, SolverError> {
    let extended = instance.with_examples(instance.examples().with_example(alternative, category));
    let cap = config.eps_cap.unwrap_or(instance.criteria_count() as f64);
    let mut lp = LinearProgram::new(ObjectiveSense::Maximize);
    let eps = lp.add_variable("eps", 0.0, cap);
    let layout = VariableLayout::new(&mut lp, &extended, EpsilonTerm::Variable(eps), config.bounds);
    add_value_bounds(&mut lp, &layout);
    add_threshold_ordering(&mut lp, &layout);
    add_assignment_examples(&mut lp, &layout, &extended, extended.examples());
    lp.set_objective(ObjectiveSense::Maximize, vec![(eps, 1.0)]);
    let label = format!("possible_a{}_c{}", alternative + 1, category);
    let sol = solver.solve(&lp, &label)?;
    match sol.status {
        Status::Optimal => Ok(Some(sol.value(eps))),
        Status::Infeasible => Ok(None),
        Status::Unbounded => Err(SolverError::BackendFailure(format!(
            "{label}: bounded program reported unbounded"
        ))),
    }
}

/// Possible categories of one alternative.
pub fn possible_assignments(
    instance: &ProblemInstance,
    alternative: usize,
    config: &RobustnessConfig,
    solver: &Solver,
) -> Result<PossibleAssignment, SolverError> {
    let eps = (1..=instance.categories())
        .map(|h| max_epsilon_with(instance, alternative, h, config, solver))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(collect_set(alternative, eps, config.tau))
}

fn collect_set(alternative: usize, eps: Vec<Option<f64>>, tau: f64) -> PossibleAssignment {
    let categories = eps
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_some_and(|e| e > tau))
        .map(|(h, _)| h + 1)
        .collect();
    PossibleAssignment {
        alternative,
        categories,
        eps,
    }
}

/// Possible categories of every listed alternative. The `q` solves per
/// alternative run in parallel; results come back in input order.
pub fn possible_assignment_sets(
    instance: &ProblemInstance,
    alternatives: &[usize],
    config: &RobustnessConfig,
    solver: &Solver,
) -> Result<Vec<PossibleAssignment>, SolverError> {
    let q = instance.categories();
    let jobs: Vec<(usize, usize)> = alternatives
        .iter()
        .flat_map(|&a| (1..=q).map(move |h| (a, h)))
        .collect();
    let eps = jobs
        .par_iter()
        .map(|&(a, h)| max_epsilon_with(instance, a, h, config, solver))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(alternatives
        .iter()
        .zip(eps.chunks(q))
        .map(|(&a, chunk)| collect_set(a, chunk.to_vec(), config.tau))
        .collect())
}

/// `1 − mean((|C^P| − 1) / (q − 1))`.
pub fn apa(sets: &[PossibleAssignment], q: usize) -> Result<f64, RobustnessError> {
    if q < 2 {
        return Err(RobustnessError::TooFewCategories);
    }
    if sets.is_empty() {
        return Err(RobustnessError::NoAlternatives);
    }
    let mut total = 0.0;
    for s in sets {
        if s.categories.is_empty() {
            return Err(RobustnessError::EmptySet(s.alternative));
        }
        total += (s.categories.len() - 1) as f64 / (q - 1) as f64;
    }
    Ok(1.0 - total / sets.len() as f64)
}
