//! Solver-agnostic linear and mixed-integer programs, and a HiGHS backend.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use highs::{HighsModelStatus, RowProblem, Sense};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - lhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Vec<(VarId, f64)>,
    pub sense: ObjectiveSense,
}

impl LinearProgram {
    pub fn new(sense: ObjectiveSense) -> Self {
        Self {
            variables: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            sense,
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.push_variable(name.into(), lower, upper, false)
    }

    pub fn add_integer_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> VarId {
        self.push_variable(name.into(), lower, upper, true)
    }

    fn push_variable(&mut self, name: String, lower: f64, upper: f64, integer: bool) -> VarId {
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integer,
        });
        VarId(self.variables.len() - 1)
    }

    /// Adds a row, merging repeated variables in `coeffs`.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: RowSense,
        rhs: f64,
    ) {
        self.rows.push(Row {
            name: name.into(),
            coeffs: merge_terms(coeffs),
            sense,
            rhs,
        });
    }

    pub fn set_objective(&mut self, sense: ObjectiveSense, terms: Vec<(VarId, f64)>) {
        self.sense = sense;
        self.objective = merge_terms(terms);
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_mip(&self) -> bool {
        self.variables.iter().any(|v| v.integer)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Largest row or bound violation of a candidate point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(values));
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    fn check(&self) -> Result<(), SolverError> {
        let n = self.variables.len();
        if n == 0 {
            return Err(SolverError::InvalidProgram("no variables".into()));
        }
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(SolverError::InvalidProgram(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        let terms = self
            .rows
            .iter()
            .flat_map(|r| r.coeffs.iter())
            .chain(&self.objective);
        for &(var, c) in terms {
            if var.0 >= n || !c.is_finite() {
                return Err(SolverError::InvalidProgram(format!(
                    "bad term {c} on variable index {}",
                    var.0
                )));
            }
        }
        if let Some(r) = self.rows.iter().find(|r| !r.rhs.is_finite()) {
            return Err(SolverError::InvalidProgram(format!(
                "row {} has right-hand side {}",
                r.name, r.rhs
            )));
        }
        Ok(())
    }

    /// CPLEX LP text of the program.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = self.variables.iter().map(|v| lp_name(&v.name)).collect();
        let term_list = |terms: &[(VarId, f64)]| -> String {
            if terms.is_empty() {
                return "0".to_string();
            }
            let mut s = String::new();
            for (i, &(v, c)) in terms.iter().enumerate() {
                let sign = if c < 0.0 { "-" } else { "+" };
                if i == 0 && c >= 0.0 {
                    let _ = write!(s, "{} {}", c, names[v.0]);
                } else {
                    let _ = write!(s, " {} {} {}", sign, c.abs(), names[v.0]);
                }
            }
            s
        };
        out.push_str(match self.sense {
            ObjectiveSense::Minimize => "Minimize\n",
            ObjectiveSense::Maximize => "Maximize\n",
        });
        let _ = writeln!(out, " obj: {}", term_list(&self.objective));
        out.push_str("Subject To\n");
        for (i, r) in self.rows.iter().enumerate() {
            let op = match r.sense {
                RowSense::Le => "<=",
                RowSense::Ge => ">=",
                RowSense::Eq => "=",
            };
            let name = if r.name.is_empty() {
                format!("r{i}")
            } else {
                format!("{}_{i}", lp_name(&r.name))
            };
            let _ = writeln!(out, " {name}: {} {op} {}", term_list(&r.coeffs), r.rhs);
        }
        out.push_str("Bounds\n");
        for (v, name) in self.variables.iter().zip(&names) {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {name} free");
                }
                (true, false) => {
                    let _ = writeln!(out, " {name} >= {}", v.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {name} <= {}", v.upper);
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
                }
            }
        }
        let ints: Vec<&String> = self
            .variables
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.integer)
            .map(|(_, n)| n)
            .collect();
        if !ints.is_empty() {
            out.push_str("General\n");
            for n in ints {
                let _ = writeln!(out, " {n}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn lp_name(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    match cleaned.chars().next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => cleaned,
        _ => format!("x_{cleaned}"),
    }
}

fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
}

impl Solution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    fn without_point(status: Status) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("solver backend failure: {0}")]
    BackendFailure(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tolerance: f64,
    pub mip_rel_gap: f64,
    /// Wall-clock limit per solve, in seconds.
    pub time_limit: Option<f64>,
    /// When set, every program is written there in LP format before solving.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-9,
            mip_rel_gap: 1e-6,
            time_limit: None,
            dump_dir: None,
        }
    }
}

/// HiGHS-backed solver. Stateless apart from the dump counter, so it can be
/// shared across threads.
#[derive(Debug, Default)]
pub struct Solver {
    options: SolverOptions,
    dumped: AtomicUsize,
}

impl Solver {
    pub fn new(options: SolverOptions) -> Self {
        Self {
            options,
            dumped: AtomicUsize::new(0),
        }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn solve(&self, lp: &LinearProgram, label: &str) -> Result<Solution, SolverError> {
        lp.check()?;
        if let Some(dir) = &self.options.dump_dir {
            let k = self.dumped.fetch_add(1, Ordering::Relaxed);
            let path = dir.join(format!("{k:05}_{}.lp", lp_name(label)));
            let text = format!("\\ {label}\n{}", lp.to_lp_format());
            std::fs::write(&path, text).map_err(|e| {
                SolverError::BackendFailure(format!("cannot write {}: {e}", path.display()))
            })?;
        }
        let started = std::time::Instant::now();
        let mut solution = self.run(lp, true)?;
        if solution.is_none() {
            log::debug!("{label}: infeasible-or-unbounded, retrying without presolve");
            solution = self.run(lp, false)?;
        }
        let solution = solution.ok_or_else(|| {
            SolverError::BackendFailure("could not separate infeasible from unbounded".into())
        })?;
        log::trace!(
            "{label}: {} vars, {} rows, {:?}, obj {} in {:?}",
            lp.num_variables(),
            lp.num_rows(),
            solution.status,
            solution.objective,
            started.elapsed()
        );
        Ok(solution)
    }

    /// `Ok(None)` when HiGHS cannot tell infeasible from unbounded.
    fn run(&self, lp: &LinearProgram, presolve: bool) -> Result<Option<Solution>, SolverError> {
        let mut pb = RowProblem::default();
        let mut cost = vec![0.0; lp.num_variables()];
        for &(v, c) in &lp.objective {
            cost[v.0] += c;
        }
        let cols: Vec<_> = lp
            .variables
            .iter()
            .zip(&cost)
            .map(|(v, &c)| pb.add_column_with_integrality(c, v.lower..=v.upper, v.integer))
            .collect();
        for r in &lp.rows {
            let coeffs: Vec<_> = r.coeffs.iter().map(|&(v, c)| (cols[v.0], c)).collect();
            match r.sense {
                RowSense::Le => pb.add_row(..=r.rhs, coeffs),
                RowSense::Ge => pb.add_row(r.rhs.., coeffs),
                RowSense::Eq => pb.add_row(r.rhs..=r.rhs, coeffs),
            }
        }
        let sense = match lp.sense {
            ObjectiveSense::Minimize => Sense::Minimise,
            ObjectiveSense::Maximize => Sense::Maximise,
        };
        let mut model = pb
            .try_optimise(sense)
            .map_err(|e| SolverError::BackendFailure(format!("loading program: {e:?}")))?;
        model.make_quiet();
        let o = &self.options;
        let set = |m: &mut highs::Model, k: &str, v: f64| {
            m.try_set_option(k, v)
                .map_err(|e| SolverError::BackendFailure(format!("option {k}: {e:?}")))
        };
        set(&mut model, "primal_feasibility_tolerance", o.feasibility_tolerance)?;
        set(&mut model, "dual_feasibility_tolerance", o.feasibility_tolerance)?;
        set(&mut model, "mip_rel_gap", o.mip_rel_gap)?;
        if let Some(t) = o.time_limit {
            set(&mut model, "time_limit", t)?;
        }
        if !presolve {
            model
                .try_set_option("presolve", "off")
                .map_err(|e| SolverError::BackendFailure(format!("option presolve: {e:?}")))?;
        }
        let solved = model
            .try_solve()
            .map_err(|e| SolverError::BackendFailure(format!("run: {e:?}")))?;
        match solved.status() {
            HighsModelStatus::Optimal => {
                let values = solved.get_solution().columns().to_vec();
                let objective = lp.objective_value(&values);
                Ok(Some(Solution {
                    status: Status::Optimal,
                    objective,
                    values,
                }))
            }
            HighsModelStatus::Infeasible => Ok(Some(Solution::without_point(Status::Infeasible))),
            HighsModelStatus::Unbounded => Ok(Some(Solution::without_point(Status::Unbounded))),
            HighsModelStatus::UnboundedOrInfeasible if presolve => Ok(None),
            other => Err(SolverError::BackendFailure(format!("status {other:?}"))),
        }
    }
}
