//! Learning a representative sorting model from assignment examples.
//!
//! Every learner works on a validated [`ProblemInstance`] whose examples are
//! consistent. [`run_pipeline`] chains the consistency check, the minimum
//! adjustment (when needed), a learner and the final sorting.

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{
    add_assignment_examples, add_indicator_assignments,
    add_relaxed_assignment_examples, add_slope_changes, add_threshold_ordering, add_value_bounds,
    BoundBox, ConstraintError, EpsilonTerm, VariableLayout,
};
use crate::instance::{AssignmentExamples, ProblemInstance, SortingModel};
use crate::solver::{
    LinearProgram, ObjectiveSense, RowSense, Solution, Solver, SolverError, Status, VarId,
};

/// Consistency-check optima at or below this count as consistent.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Approach {
    /// Least slope change first, then the largest ε.
    Approach1,
    /// Largest ε first, then the least slope change.
    Approach2,
    /// Minimum ratio of slope change to ε.
    Lfp,
    /// The consistency-check solution with a fixed ε.
    Utadis,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Approach1,
        Approach::Approach2,
        Approach::Lfp,
        Approach::Utadis,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Approach::Approach1 => "approach1",
            Approach::Approach2 => "approach2",
            Approach::Lfp => "lfp",
            Approach::Utadis => "utadis",
        }
    }

    /// Whether the learner needs at least one criterion with two or more
    /// subintervals.
    pub fn needs_slope_changes(&self) -> bool {
        matches!(self, Approach::Approach1 | Approach::Lfp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub approach: Approach,
    /// ε used wherever it is a constant, and the floor for ε in Approach 1.
    pub eps_fixed: f64,
    /// Lower bound for ε when it is maximised.
    pub eps_floor: f64,
    /// Upper bound for ε when it is a variable; `None` means `m`.
    pub eps_cap: Option<f64>,
    /// Slack on the stage-1 optimum when it becomes a stage-2 constraint.
    pub tol_lex: f64,
    pub bounds: BoundBox,
    /// Smallest acceptable homogenising scale in the fractional program.
    pub tau: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            approach: Approach::Approach2,
            eps_fixed: 1e-3,
            eps_floor: 1e-6,
            eps_cap: None,
            tol_lex: 1e-7,
            bounds: BoundBox::default(),
            tau: 1e-9,
        }
    }
}

impl LearnConfig {
    pub fn with_approach(approach: Approach) -> Self {
        Self {
            approach,
            ..Self::default()
        }
    }

    pub fn eps_cap_for(&self, criteria: usize) -> f64 {
        self.eps_cap.unwrap_or(criteria as f64)
    }

    fn check(&self, criteria: usize) -> Result<(), LearnError> {
        let cap = self.eps_cap_for(criteria);
        if !(0.0 < self.eps_floor && self.eps_floor <= self.eps_fixed && self.eps_fixed <= cap) {
            return Err(LearnError::InvalidConfig(format!(
                "need 0 < eps_floor ({}) <= eps_fixed ({}) <= eps_cap ({cap})",
                self.eps_floor, self.eps_fixed
            )));
        }
        if !(self.bounds.lo < self.bounds.hi) {
            return Err(LearnError::InvalidConfig(format!(
                "empty bound box [{}, {}]",
                self.bounds.lo, self.bounds.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("{stage}: solver reported {status:?}")]
    UnexpectedStatus { stage: String, status: Status },
    #[error("assignment examples are still inconsistent after adjustment (slack {0})")]
    InfeasibleAfterAdjustment(f64),
    #[error("homogenising scale {0} is not positive; the fractional program is degenerate")]
    DegenerateScaling(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One solver call, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub label: String,
    pub status: String,
    pub objective: f64,
    pub variables: usize,
    pub rows: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub approach: Approach,
    pub model: SortingModel,
    /// Total slope change: the stage-1 optimum for Approach 1, the stage-2
    /// optimum for Approach 2 and the value of the model otherwise.
    pub gamma_star: f64,
    pub eps_star: f64,
    pub adjusted_examples: AssignmentExamples,
    /// Consistency-check optimum on the original examples, when the pipeline ran it.
    pub consistency_slack: Option<f64>,
    pub log: Vec<SolveRecord>,
}

fn solve_logged(
    solver: &Solver,
    lp: &LinearProgram,
    label: &str,
    log: &mut Vec<SolveRecord>,
) -> Result<Solution, LearnError> {
    let started = Instant::now();
    let sol = solver.solve(lp, label)?;
    log.push(SolveRecord {
        label: label.to_string(),
        status: format!("{:?}", sol.status),
        objective: sol.objective,
        variables: lp.num_variables(),
        rows: lp.num_rows(),
        seconds: started.elapsed().as_secs_f64(),
    });
    Ok(sol)
}

fn require_optimal(sol: Solution, stage: &str) -> Result<Solution, LearnError> {
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(LearnError::UnexpectedStatus {
            stage: stage.to_string(),
            status: sol.status,
        })
    }
}

/// Program with breakpoint values, thresholds, ε, the value box and the
/// threshold ordering. Assignment rows are left to the caller.
fn base_program(
    instance: &ProblemInstance,
    eps: Option<(f64, f64)>,
    eps_fixed: f64,
    bounds: BoundBox,
) -> (LinearProgram, VariableLayout) {
    let mut lp = LinearProgram::new(ObjectiveSense::Minimize);
    let eps_term = match eps {
        Some((lo, hi)) => EpsilonTerm::Variable(lp.add_variable("eps", lo, hi)),
        None => EpsilonTerm::Fixed(eps_fixed),
    };
    let layout = VariableLayout::new(&mut lp, instance, eps_term, bounds);
    add_value_bounds(&mut lp, &layout);
    add_threshold_ordering(&mut lp, &layout);
    (lp, layout)
}

fn model_from(instance: &ProblemInstance, layout: &VariableLayout, values: &[f64]) -> SortingModel {
    SortingModel::from_parts(
        instance.criteria().to_vec(),
        layout.values_of(values),
        layout.thresholds_of(values),
        layout.eps.value(values),
    )
}

/// Result of the consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// Minimum total slack `Σ(δ⁺ + δ⁻)`.
    pub optimum: f64,
    /// `(alternative, δ⁺, δ⁻)` per example.
    pub slacks: Vec<(usize, f64, f64)>,
    /// Model read off the optimum, with ε fixed.
    pub model: SortingModel,
    pub log: Vec<SolveRecord>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.optimum <= CONSISTENCY_TOLERANCE
    }
}

/// Minimum total slack needed to satisfy every example with ε fixed.
pub fn check_consistency(
    instance: &ProblemInstance,
    eps_fixed: f64,
    bounds: BoundBox,
    solver: &Solver,
) -> Result<ConsistencyReport, LearnError> {
    let (mut lp, mut layout) = base_program(instance, None, eps_fixed, bounds);
    let slacks = add_relaxed_assignment_examples(&mut lp, &mut layout, instance, instance.examples());
    lp.set_objective(
        ObjectiveSense::Minimize,
        slacks
            .iter()
            .flat_map(|s| [(s.plus, 1.0), (s.minus, 1.0)])
            .collect(),
    );
    let mut log = Vec::new();
    let sol = require_optimal(solve_logged(solver, &lp, "consistency", &mut log)?, "consistency")?;
    Ok(ConsistencyReport {
        optimum: sol.objective.max(0.0),
        slacks: slacks
            .iter()
            .map(|s| (s.alternative, sol.value(s.plus), sol.value(s.minus)))
            .collect(),
        model: model_from(instance, &layout, &sol.values),
        log,
    })
}

/// Outcome of the minimum adjustment program.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub examples: AssignmentExamples,
    /// Total number of category steps moved, `Σ|B̄ − B|`.
    pub moves: usize,
    /// `(alternative, original, adjusted)` for every changed example.
    pub changes: Vec<(usize, usize, usize)>,
    pub log: Vec<SolveRecord>,
}

/// Reassigns the fewest category steps needed to make the examples
/// consistent, with ε fixed. The result is re-checked by the consistency check.
pub fn minimum_adjustment(
    instance: &ProblemInstance,
    eps_fixed: f64,
    bounds: BoundBox,
    solver: &Solver,
) -> Result<Adjustment, LearnError> {
    let (mut lp, mut layout) = base_program(instance, None, eps_fixed, bounds);
    let indicators = add_indicator_assignments(&mut lp, &mut layout, instance, instance.examples());
    lp.set_objective(
        ObjectiveSense::Minimize,
        indicators
            .iter()
            .flat_map(|iv| [(iv.up, 1.0), (iv.down, 1.0)])
            .collect(),
    );
    let mut log = Vec::new();
    let sol = require_optimal(solve_logged(solver, &lp, "adjustment", &mut log)?, "adjustment")?;
    let mut pairs = Vec::with_capacity(indicators.len());
    let mut changes = Vec::new();
    let mut moves = 0;
    for (iv, (a, original)) in indicators.iter().zip(instance.examples().iter()) {
        let adjusted = iv.category(&sol.values);
        if adjusted != original {
            changes.push((a, original, adjusted));
            moves += adjusted.abs_diff(original);
        }
        pairs.push((a, adjusted));
    }
    let examples = AssignmentExamples::new(pairs);
    let check = check_consistency(&instance.with_examples(examples.clone()), eps_fixed, bounds, solver)?;
    log.extend(check.log.iter().cloned());
    if !check.is_consistent() {
        return Err(LearnError::InfeasibleAfterAdjustment(check.optimum));
    }
    Ok(Adjustment {
        examples,
        moves,
        changes,
        log,
    })
}

fn outcome(
    approach: Approach,
    instance: &ProblemInstance,
    model: SortingModel,
    gamma_star: f64,
    eps_star: f64,
    log: Vec<SolveRecord>,
) -> LearnOutcome {
    let outcome = LearnOutcome {
        approach,
        model,
        gamma_star,
        eps_star,
        adjusted_examples: instance.examples().clone(),
        consistency_slack: None,
        log,
    };
    let missed = example_mismatches(&outcome.model, instance);
    if !missed.is_empty() {
        log::warn!(
            "{}: model does not reproduce {} example(s): {:?}",
            approach.name(),
            missed.len(),
            missed
        );
    }
    outcome
}

/// Examples whose category differs under the model, as
/// `(alternative, example category, model category)`.
pub fn example_mismatches(
    model: &SortingModel,
    instance: &ProblemInstance,
) -> Vec<(usize, usize, usize)> {
    instance
        .examples()
        .iter()
        .filter_map(|(a, cat)| {
            let got = model.sort_row(instance.row(a)).ok()?;
            (got != cat).then_some((a, cat, got))
        })
        .collect()
}

/// Least total slope change with ε at least `eps_fixed`, then the largest
/// ε that keeps the slope change at its optimum.
pub fn learn_approach1(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<LearnOutcome, LearnError> {
    config.check(instance.criteria_count())?;
    let cap = config.eps_cap_for(instance.criteria_count());
    let (mut lp, mut layout) =
        base_program(instance, Some((config.eps_fixed, cap)), config.eps_fixed, config.bounds);
    add_assignment_examples(&mut lp, &layout, instance, instance.examples());
    add_slope_changes(&mut lp, &mut layout, instance)?;
    let gamma = layout.gamma_terms();
    let mut log = Vec::new();

    lp.set_objective(ObjectiveSense::Minimize, gamma.clone());
    let first = solve_logged(solver, &lp, "approach1_slope", &mut log)?;
    if first.status == Status::Infeasible {
        return Err(LearnError::InfeasibleAfterAdjustment(f64::NAN));
    }
    let gamma_star = require_optimal(first, "approach1_slope")?.objective.max(0.0);

    lp.add_row("lex_slope", gamma, RowSense::Le, gamma_star + config.tol_lex);
    let EpsilonTerm::Variable(eps) = layout.eps else {
        unreachable!("ε is a variable in this program")
    };
    lp.set_objective(ObjectiveSense::Maximize, vec![(eps, 1.0)]);
    let second = require_optimal(
        solve_logged(solver, &lp, "approach1_eps", &mut log)?,
        "approach1_eps",
    )?;
    let model = model_from(instance, &layout, &second.values);
    let eps_star = model.epsilon;
    Ok(outcome(Approach::Approach1, instance, model, gamma_star, eps_star, log))
}

/// Largest ε, then the least total slope change at that ε. With a single
/// subinterval everywhere the first stage is final.
pub fn learn_approach2(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<LearnOutcome, LearnError> {
    config.check(instance.criteria_count())?;
    let cap = config.eps_cap_for(instance.criteria_count());
    let (mut lp, layout) =
        base_program(instance, Some((config.eps_floor, cap)), config.eps_fixed, config.bounds);
    add_assignment_examples(&mut lp, &layout, instance, instance.examples());
    let EpsilonTerm::Variable(eps) = layout.eps else {
        unreachable!("ε is a variable in this program")
    };
    lp.set_objective(ObjectiveSense::Maximize, vec![(eps, 1.0)]);
    let mut log = Vec::new();
    let first = solve_logged(solver, &lp, "approach2_eps", &mut log)?;
    if first.status == Status::Infeasible {
        return Err(LearnError::InfeasibleAfterAdjustment(f64::NAN));
    }
    let first = require_optimal(first, "approach2_eps")?;
    let eps_star = first.value(eps);

    if !instance.has_slope_changes() {
        let model = model_from(instance, &layout, &first.values);
        return Ok(outcome(Approach::Approach2, instance, model, 0.0, eps_star, log));
    }

    let attempt = |eps_value: f64, log: &mut Vec<SolveRecord>| {
        let (mut lp, mut layout) = base_program(instance, None, eps_value, config.bounds);
        add_assignment_examples(&mut lp, &layout, instance, instance.examples());
        add_slope_changes(&mut lp, &mut layout, instance)?;
        lp.set_objective(ObjectiveSense::Minimize, layout.gamma_terms());
        let sol = solve_logged(solver, &lp, "approach2_slope", log)?;
        Ok::<_, LearnError>((sol, layout))
    };
    let (mut sol, mut layout) = attempt(eps_star, &mut log)?;
    if sol.status == Status::Infeasible {
        log::debug!("approach2: slope stage infeasible at ε*, backing off by tol_lex");
        (sol, layout) = attempt(eps_star - config.tol_lex, &mut log)?;
    }
    let sol = require_optimal(sol, "approach2_slope")?;
    let model = model_from(instance, &layout, &sol.values);
    Ok(outcome(
        Approach::Approach2,
        instance,
        model,
        sol.objective.max(0.0),
        eps_star,
        log,
    ))
}

/// Charnes–Cooper form of `min c·x / x_d` over the rows and bounds of `lp`.
///
/// Variables keep their indices; one extra variable, the scale `t`, is
/// appended. Every constant moves onto `t`, finite bounds become rows, and
/// the scaled denominator is fixed to 1. Integer variables are rejected.
pub fn charnes_cooper(lp: &LinearProgram, denominator: VarId) -> Result<(LinearProgram, VarId), SolverError> {
    if lp.is_mip() {
        return Err(SolverError::InvalidProgram(
            "fractional programs must be continuous".into(),
        ));
    }
    let mut out = LinearProgram::new(ObjectiveSense::Minimize);
    for v in &lp.variables {
        // A zero lower bound scales to itself, so it can stay a bound.
        let lower = if v.lower == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        out.add_variable(v.name.clone(), lower, f64::INFINITY);
    }
    let t = out.add_variable("scale_t", 0.0, f64::INFINITY);
    for (i, v) in lp.variables.iter().enumerate() {
        let y = VarId(i);
        if v.lower.is_finite() && v.lower != 0.0 {
            out.add_row(format!("{}_lo", v.name), vec![(y, 1.0), (t, -v.lower)], RowSense::Ge, 0.0);
        }
        if v.upper.is_finite() {
            out.add_row(format!("{}_hi", v.name), vec![(y, 1.0), (t, -v.upper)], RowSense::Le, 0.0);
        }
    }
    for r in &lp.rows {
        let mut coeffs = r.coeffs.clone();
        coeffs.push((t, -r.rhs));
        out.add_row(r.name.clone(), coeffs, r.sense, 0.0);
    }
    out.add_row("unit_denominator", vec![(denominator, 1.0)], RowSense::Eq, 1.0);
    let objective = match lp.sense {
        ObjectiveSense::Minimize => lp.objective.clone(),
        ObjectiveSense::Maximize => lp.objective.iter().map(|&(v, c)| (v, -c)).collect(),
    };
    out.set_objective(ObjectiveSense::Minimize, objective);
    Ok((out, t))
}

/// Least ratio of total slope change to ε.
pub fn learn_lfp(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<LearnOutcome, LearnError> {
    config.check(instance.criteria_count())?;
    let cap = config.eps_cap_for(instance.criteria_count());
    let (mut lp, mut layout) =
        base_program(instance, Some((config.eps_floor, cap)), config.eps_fixed, config.bounds);
    add_assignment_examples(&mut lp, &layout, instance, instance.examples());
    add_slope_changes(&mut lp, &mut layout, instance)?;
    lp.set_objective(ObjectiveSense::Minimize, layout.gamma_terms());
    let EpsilonTerm::Variable(eps) = layout.eps else {
        unreachable!("ε is a variable in this program")
    };
    let (scaled, t) = charnes_cooper(&lp, eps)?;
    let mut log = Vec::new();
    let sol = solve_logged(solver, &scaled, "lfp", &mut log)?;
    if sol.status == Status::Infeasible {
        return Err(LearnError::InfeasibleAfterAdjustment(f64::NAN));
    }
    let sol = require_optimal(sol, "lfp")?;
    let scale = sol.value(t);
    if !(scale > config.tau) {
        return Err(LearnError::DegenerateScaling(scale));
    }
    let values: Vec<f64> = sol.values[..lp.num_variables()]
        .iter()
        .map(|y| y / scale)
        .collect();
    let model = model_from(instance, &layout, &values);
    let gamma_star = lp.objective_value(&values).max(0.0);
    let eps_star = model.epsilon;
    Ok(outcome(Approach::Lfp, instance, model, gamma_star, eps_star, log))
}

/// The consistency-check optimum used directly as the model.
pub fn learn_utadis(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<LearnOutcome, LearnError> {
    config.check(instance.criteria_count())?;
    let report = check_consistency(instance, config.eps_fixed, config.bounds, solver)?;
    let gamma = report.model.slope_change();
    let mut out = outcome(
        Approach::Utadis,
        instance,
        report.model,
        gamma,
        config.eps_fixed,
        report.log,
    );
    out.consistency_slack = Some(report.optimum);
    Ok(out)
}

pub fn learn(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<LearnOutcome, LearnError> {
    match config.approach {
        Approach::Approach1 => learn_approach1(instance, config, solver),
        Approach::Approach2 => learn_approach2(instance, config, solver),
        Approach::Lfp => learn_lfp(instance, config, solver),
        Approach::Utadis => learn_utadis(instance, config, solver),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub consistency: ConsistencyReport,
    pub adjustment: Option<Adjustment>,
    pub outcome: LearnOutcome,
    /// `(alternative, category)` for every non-reference alternative.
    pub assignments: Vec<(usize, usize)>,
}

/// Check, adjust if needed, learn, then sort the non-reference alternatives.
pub fn run_pipeline(
    instance: &ProblemInstance,
    config: &LearnConfig,
    solver: &Solver,
) -> Result<PipelineResult, LearnError> {
    config.check(instance.criteria_count())?;
    let consistency = check_consistency(instance, config.eps_fixed, config.bounds, solver)?;
    let adjustment = if consistency.is_consistent() {
        None
    } else {
        log::info!(
            "examples inconsistent (slack {:.3e}); adjusting",
            consistency.optimum
        );
        Some(minimum_adjustment(instance, config.eps_fixed, config.bounds, solver)?)
    };
    let working = match &adjustment {
        Some(adj) => instance.with_examples(adj.examples.clone()),
        None => instance.clone(),
    };
    let mut outcome = learn(&working, config, solver)?;
    outcome.consistency_slack = Some(consistency.optimum);
    let assignments = working
        .non_reference()
        .into_iter()
        .map(|a| {
            let cat = outcome
                .model
                .sort_row(working.row(a))
                .expect("model built from this instance");
            (a, cat)
        })
        .collect();
    Ok(PipelineResult {
        consistency,
        adjustment,
        outcome,
        assignments,
    })
}
