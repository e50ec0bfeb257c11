//! Builders that translate an instance into rows of a [`LinearProgram`].
//!
//! Global values never get their own variables: `V(a)` is substituted as a
//! linear expression over the breakpoint values.

use thiserror::Error;

use crate::instance::{AssignmentExamples, CriterionScale, ProblemInstance};
use crate::solver::{LinearProgram, RowSense, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("every criterion has a single subinterval, so there are no slope changes to measure")]
    NoSlopeVariables,
}

/// Bounds imposed on every breakpoint value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundBox {
    pub lo: f64,
    pub hi: f64,
}

impl Default for BoundBox {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl BoundBox {
    /// Range that interior thresholds are allowed to take.
    pub fn threshold_range(&self, criteria: usize) -> (f64, f64) {
        let m = criteria as f64;
        (m * self.lo, m * self.hi + 1.0)
    }

    /// Big-M that dominates any gap between a global value and a threshold.
    pub fn big_m(&self, criteria: usize) -> f64 {
        criteria as f64 * (self.hi - self.lo) + 2.0
    }
}

/// ε is a constant in some programs and a decision variable in others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonTerm {
    Fixed(f64),
    Variable(VarId),
}

/// Sparse affine expression `Σ c·x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn add(mut self, other: &LinExpr, scale: f64) -> Self {
        self.terms
            .extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>() + self.constant
    }
}

/// Adds `expr (sense) 0`, moving the constant to the right-hand side.
pub fn add_expr_row(lp: &mut LinearProgram, name: &str, expr: LinExpr, sense: RowSense) {
    lp.add_row(name, expr.terms, sense, -expr.constant);
}

impl EpsilonTerm {
    pub fn expr(&self) -> LinExpr {
        match *self {
            EpsilonTerm::Fixed(e) => LinExpr::constant(e),
            EpsilonTerm::Variable(v) => LinExpr::var(v),
        }
    }

    pub fn value(&self, values: &[f64]) -> f64 {
        match *self {
            EpsilonTerm::Fixed(e) => e,
            EpsilonTerm::Variable(v) => values[v.0],
        }
    }
}

/// Binaries and adjustment variables for one example in the minimum
/// adjustment program.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorVars {
    pub alternative: usize,
    /// `t[h-1]` is 1 iff the alternative is placed in category `h`.
    pub t: Vec<VarId>,
    pub up: VarId,
    pub down: VarId,
}

impl IndicatorVars {
    /// Category chosen in a solution, rounding the binaries.
    pub fn category(&self, values: &[f64]) -> usize {
        let mut best = 0;
        for (h, t) in self.t.iter().enumerate() {
            if values[t.0] > values[self.t[best].0] {
                best = h;
            }
        }
        best + 1
    }
}

/// Per-example slacks relaxing the lower (`plus`) and upper (`minus`)
/// assignment rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackPair {
    pub alternative: usize,
    pub plus: VarId,
    pub minus: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    /// `v[j][l]`: value of criterion `j` at breakpoint `l` (both 0-based).
    pub v: Vec<Vec<VarId>>,
    /// `b[h-1]` is the interior threshold `b_h`, `h = 1..q-1`.
    pub b: Vec<VarId>,
    pub eps: EpsilonTerm,
    /// `gamma[j][k-1]` measures the slope change at interior breakpoint `k`.
    pub gamma: Vec<Vec<VarId>>,
    pub slacks: Vec<SlackPair>,
    pub indicators: Vec<IndicatorVars>,
    pub bounds: BoundBox,
}

impl VariableLayout {
    /// Declares breakpoint values (unbounded until [`add_value_bounds`]) and
    /// interior thresholds.
    pub fn new(
        lp: &mut LinearProgram,
        instance: &ProblemInstance,
        eps: EpsilonTerm,
        bounds: BoundBox,
    ) -> Self {
        let v = instance
            .criteria()
            .iter()
            .enumerate()
            .map(|(j, scale)| {
                (0..scale.breakpoints().len())
                    .map(|l| {
                        lp.add_variable(format!("v_{}_{}", j + 1, l + 1), f64::NEG_INFINITY, f64::INFINITY)
                    })
                    .collect()
            })
            .collect();
        let (b_lo, b_hi) = bounds.threshold_range(instance.criteria_count());
        let b = (1..instance.categories())
            .map(|h| lp.add_variable(format!("b_{h}"), b_lo, b_hi))
            .collect();
        Self {
            v,
            b,
            eps,
            gamma: Vec::new(),
            slacks: Vec::new(),
            indicators: Vec::new(),
            bounds,
        }
    }

    pub fn categories(&self) -> usize {
        self.b.len() + 1
    }

    /// Expression for `b_h`, `h = 1..q-1`.
    pub fn threshold(&self, h: usize) -> LinExpr {
        LinExpr::var(self.b[h - 1])
    }

    /// `V(a)` for a performance row.
    pub fn global_expression(&self, criteria: &[CriterionScale], row: &[f64]) -> LinExpr {
        let mut terms = Vec::with_capacity(2 * row.len());
        for ((scale, vars), &x) in criteria.iter().zip(&self.v).zip(row) {
            terms.extend(value_expression(scale, vars, x));
        }
        LinExpr {
            terms,
            constant: 0.0,
        }
    }

    pub fn values_of(&self, values: &[f64]) -> Vec<Vec<f64>> {
        self.v
            .iter()
            .map(|vars| vars.iter().map(|v| values[v.0]).collect())
            .collect()
    }

    pub fn thresholds_of(&self, values: &[f64]) -> Vec<f64> {
        self.b.iter().map(|v| values[v.0]).collect()
    }

    pub fn gamma_terms(&self) -> Vec<(VarId, f64)> {
        self.gamma.iter().flatten().map(|&g| (g, 1.0)).collect()
    }
}

/// Linear-interpolation coefficients of `v_j(x)` over the breakpoint
/// variables of one criterion. `x` is clamped into the scale.
pub fn value_expression(scale: &CriterionScale, vars: &[VarId], x: f64) -> Vec<(VarId, f64)> {
    let (l, theta) = scale.locate(x);
    if theta == 0.0 {
        vec![(vars[l], 1.0)]
    } else if theta == 1.0 {
        vec![(vars[l + 1], 1.0)]
    } else {
        vec![(vars[l], 1.0 - theta), (vars[l + 1], theta)]
    }
}

/// Assignment rows for every example: `b_{B-1} ≤ V(a)` unless `B = 1` and
/// `V(a) ≤ b_B − ε` unless `B = q`.
pub fn add_assignment_examples(
    lp: &mut LinearProgram,
    layout: &VariableLayout,
    instance: &ProblemInstance,
    examples: &AssignmentExamples,
) -> usize {
    let before = lp.num_rows();
    let q = layout.categories();
    for (a, cat) in examples.iter() {
        let value = layout.global_expression(instance.criteria(), instance.row(a));
        if cat > 1 {
            let expr = value.clone().add(&layout.threshold(cat - 1), -1.0);
            add_expr_row(lp, &format!("lo_a{}", a + 1), expr, RowSense::Ge);
        }
        if cat < q {
            let expr = value
                .add(&layout.threshold(cat), -1.0)
                .add(&layout.eps.expr(), 1.0);
            add_expr_row(lp, &format!("up_a{}", a + 1), expr, RowSense::Le);
        }
    }
    lp.num_rows() - before
}

/// Assignment rows with nonnegative slacks: `V(a) − b_{B-1} + δ⁺ ≥ 0` and
/// `V(a) − b_B + ε − δ⁻ ≤ 0`. Returns the slack variables.
pub fn add_relaxed_assignment_examples(
    lp: &mut LinearProgram,
    layout: &mut VariableLayout,
    instance: &ProblemInstance,
    examples: &AssignmentExamples,
) -> Vec<SlackPair> {
    let q = layout.categories();
    let mut slacks = Vec::with_capacity(examples.len());
    for (a, cat) in examples.iter() {
        let plus = lp.add_variable(format!("dp_a{}", a + 1), 0.0, f64::INFINITY);
        let minus = lp.add_variable(format!("dm_a{}", a + 1), 0.0, f64::INFINITY);
        let value = layout.global_expression(instance.criteria(), instance.row(a));
        if cat > 1 {
            let expr = value
                .clone()
                .add(&layout.threshold(cat - 1), -1.0)
                .add(&LinExpr::var(plus), 1.0);
            add_expr_row(lp, &format!("lo_a{}", a + 1), expr, RowSense::Ge);
        }
        if cat < q {
            let expr = value
                .add(&layout.threshold(cat), -1.0)
                .add(&layout.eps.expr(), 1.0)
                .add(&LinExpr::var(minus), -1.0);
            add_expr_row(lp, &format!("up_a{}", a + 1), expr, RowSense::Le);
        }
        slacks.push(SlackPair {
            alternative: a,
            plus,
            minus,
        });
    }
    layout.slacks.extend(slacks.iter().copied());
    slacks
}

/// `b_h − b_{h-1} ≥ ε` for `h = 2..q-1`.
pub fn add_threshold_ordering(lp: &mut LinearProgram, layout: &VariableLayout) -> usize {
    let q = layout.categories();
    for h in 2..q {
        let expr = layout
            .threshold(h)
            .add(&layout.threshold(h - 1), -1.0)
            .add(&layout.eps.expr(), -1.0);
        add_expr_row(lp, &format!("sort_{h}"), expr, RowSense::Ge);
    }
    q.saturating_sub(2)
}

/// Boxes every breakpoint value. Returns the number of bounded variables.
pub fn add_value_bounds(lp: &mut LinearProgram, layout: &VariableLayout) -> usize {
    let BoundBox { lo, hi } = layout.bounds;
    let mut count = 0;
    for &v in layout.v.iter().flatten() {
        lp.set_bounds(v, lo, hi);
        count += 1;
    }
    count
}

/// Slope-change magnitudes `γ ≥ |slope(k-1,k) − slope(k,k+1)|` at every
/// interior breakpoint. Returns the number of rows.
pub fn add_slope_changes(
    lp: &mut LinearProgram,
    layout: &mut VariableLayout,
    instance: &ProblemInstance,
) -> Result<usize, ConstraintError> {
    if !instance.has_slope_changes() {
        return Err(ConstraintError::NoSlopeVariables);
    }
    let before = lp.num_rows();
    let mut gamma = Vec::with_capacity(layout.v.len());
    for (j, (scale, vars)) in instance.criteria().iter().zip(&layout.v).enumerate() {
        let step = scale.step();
        let mut gj = Vec::new();
        for k in 1..vars.len() - 1 {
            let g = lp.add_variable(format!("gamma_{}_{}", j + 1, k + 1), 0.0, f64::INFINITY);
            let change = [
                (vars[k - 1], -1.0 / step),
                (vars[k], 2.0 / step),
                (vars[k + 1], -1.0 / step),
            ];
            for sign in [1.0, -1.0] {
                let mut terms = vec![(g, 1.0)];
                terms.extend(change.iter().map(|&(v, c)| (v, -sign * c)));
                lp.add_row(format!("slope_{}_{}", j + 1, k + 1), terms, RowSense::Ge, 0.0);
            }
            gj.push(g);
        }
        gamma.push(gj);
    }
    layout.gamma = gamma;
    Ok(lp.num_rows() - before)
}

/// Big-M rows letting each example pick any category, with `B̄ − B = p − n`.
pub fn add_indicator_assignments(
    lp: &mut LinearProgram,
    layout: &mut VariableLayout,
    instance: &ProblemInstance,
    examples: &AssignmentExamples,
) -> Vec<IndicatorVars> {
    let q = layout.categories();
    let big_m = layout.bounds.big_m(instance.criteria_count());
    let mut out = Vec::with_capacity(examples.len());
    for (a, cat) in examples.iter() {
        let tag = format!("a{}", a + 1);
        let t: Vec<VarId> = (1..=q)
            .map(|h| lp.add_integer_variable(format!("t_{h}_{tag}"), 0.0, 1.0))
            .collect();
        let value = layout.global_expression(instance.criteria(), instance.row(a));
        for h in 2..=q {
            // V − b_{h-1} − M·t_h ≥ −M
            let expr = value
                .clone()
                .add(&layout.threshold(h - 1), -1.0)
                .add(&LinExpr::var(t[h - 1]), -big_m)
                .add(&LinExpr::constant(big_m), 1.0);
            add_expr_row(lp, &format!("blo_{h}_{tag}"), expr, RowSense::Ge);
        }
        for h in 1..q {
            // V − b_h + ε + M·t_h ≤ M
            let expr = value
                .clone()
                .add(&layout.threshold(h), -1.0)
                .add(&layout.eps.expr(), 1.0)
                .add(&LinExpr::var(t[h - 1]), big_m)
                .add(&LinExpr::constant(big_m), -1.0);
            add_expr_row(lp, &format!("bup_{h}_{tag}"), expr, RowSense::Le);
        }
        lp.add_row(
            format!("one_{tag}"),
            t.iter().map(|&v| (v, 1.0)).collect(),
            RowSense::Eq,
            1.0,
        );
        let up = lp.add_variable(format!("p_{tag}"), 0.0, f64::INFINITY);
        let down = lp.add_variable(format!("n_{tag}"), 0.0, f64::INFINITY);
        let mut terms: Vec<(VarId, f64)> =
            t.iter().enumerate().map(|(h, &v)| (v, (h + 1) as f64)).collect();
        terms.push((up, -1.0));
        terms.push((down, 1.0));
        lp.add_row(format!("adj_{tag}"), terms, RowSense::Eq, cat as f64);
        out.push(IndicatorVars {
            alternative: a,
            t,
            up,
            down,
        });
    }
    layout.indicators.extend(out.iter().cloned());
    out
}
