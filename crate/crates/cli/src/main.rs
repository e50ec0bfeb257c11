use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcsort::instance::ProblemInstance;
use mcsort::io::{
    assemble_instance, emit_assignments, emit_examples, emit_matrix, emit_model, emit_possible,
    emit_report, emit_summary_csv, emit_tests_csv, load_bundle, parse_matrix, parse_model,
    read_text, write_text, IoError, Matrix, Subintervals,
};
use mcsort::learn::{
    check_consistency, minimum_adjustment, run_pipeline, Approach, LearnConfig, LearnError,
};
use mcsort::robustness::{apa, possible_assignment_sets, RobustnessConfig, RobustnessError};
use mcsort::simulate::{
    generate_datasets, robustness_on, run_comparison, ExperimentReport, SimulateError,
    SimulationConfig,
};
use mcsort::solver::{Solver, SolverError, SolverOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_INCONSISTENT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "mcsort", version, about = "Learn threshold-based additive sorting models from assignment examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write every solved program in LP format to this directory.
    #[arg(long, global = true, value_name = "DIR")]
    dump_lp: Option<PathBuf>,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether the assignment examples admit a model.
    Check(Problem),
    /// Reassign the fewest examples needed to make them consistent.
    Adjust {
        #[command(flatten)]
        problem: Problem,
        /// Write the adjusted examples here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a model and sort the non-reference alternatives.
    Learn {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, value_enum, default_value = "2")]
        approach: ApproachArg,
        /// Threshold below which the fractional program's scale is rejected.
        #[arg(long)]
        tau: Option<f64>,
        /// Write the model document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign every row of a matrix with a saved model.
    Sort {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Expected category count; must match the model.
        #[arg(long)]
        categories: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Possible categories of each non-reference alternative, and APA.
    Robustness {
        #[command(flatten)]
        problem: Problem,
        /// Smallest ε at which a category counts as possible.
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// APA of possible assignments on generated datasets.
    Simulate {
        #[command(flatten)]
        experiment: Experiment,
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
        /// Also write each generated matrix, its true categories and hidden model here.
        #[arg(long, value_name = "DIR")]
        export: Option<PathBuf>,
    },
    /// Accuracy of the learners on generated datasets, with paired t-tests.
    Compare {
        #[command(flatten)]
        experiment: Experiment,
        /// Learners to run (repeatable); all four by default.
        #[arg(long, value_enum)]
        approach: Vec<ApproachArg>,
        /// Significance level of the one-tailed tests.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Args)]
struct Problem {
    /// Bundle JSON naming the matrix, examples, categories and subintervals.
    #[arg(long, conflicts_with_all = ["matrix", "examples", "categories", "subintervals"])]
    bundle: Option<PathBuf>,
    #[arg(long, required_unless_present = "bundle")]
    matrix: Option<PathBuf>,
    #[arg(long, required_unless_present = "bundle")]
    examples: Option<PathBuf>,
    #[arg(long, required_unless_present = "bundle")]
    categories: Option<usize>,
    /// One count for every criterion, or a comma-separated list.
    #[arg(long, required_unless_present = "bundle", value_parser = parse_subintervals)]
    subintervals: Option<Subintervals>,
    /// Fixed ε for the strict inequalities.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct Experiment {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    #[arg(long, default_value_t = 2)]
    subintervals: usize,
    /// Share of alternatives used as references.
    #[arg(long, default_value_t = 0.8)]
    r: f64,
    #[arg(long, default_value_t = 10)]
    datasets: usize,
    /// Defaults to 20, or 100 with --full-scale.
    #[arg(long)]
    replications: Option<usize>,
    /// 100 replications per dataset.
    #[arg(long, alias = "paper-scale")]
    full_scale: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Equal category sizes and stratified reference sets.
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for report.json, summary.csv and tests.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Lfp,
    Utadis,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::One => Approach::Approach1,
            ApproachArg::Two => Approach::Approach2,
            ApproachArg::Lfp => Approach::Lfp,
            ApproachArg::Utadis => Approach::Utadis,
        }
    }
}

fn parse_subintervals(text: &str) -> Result<Subintervals, String> {
    let counts = text
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match counts.as_slice() {
        [s] => Subintervals::Uniform(*s),
        _ => Subintervals::PerCriterion(counts),
    })
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    fn solver(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_SOLVER,
            error: error.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::usage(e)
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidProgram(_) => Failure::usage(e),
            SolverError::BackendFailure(_) => Failure::solver(e),
        }
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Solver(s) => s.into(),
            LearnError::Constraint(_) | LearnError::InvalidConfig(_) => Failure::usage(e),
            _ => Failure::solver(e),
        }
    }
}

impl From<RobustnessError> for Failure {
    fn from(e: RobustnessError) -> Self {
        match e {
            RobustnessError::Solver(s) => s.into(),
            _ => Failure::usage(e),
        }
    }
}

impl From<SimulateError> for Failure {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Solver(s) => s.into(),
            SimulateError::Learn(l) => l.into(),
            SimulateError::GenerationFailed(_) => Failure::solver(e),
            _ => Failure::usage(e),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(dir) = &cli.dump_lp {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::usage)?;
    }
    let solver = Solver::new(SolverOptions {
        time_limit: cli.time_limit,
        dump_dir: cli.dump_lp.clone(),
        ..SolverOptions::default()
    });
    let jobs = match &cli.command {
        Command::Simulate { experiment, .. } | Command::Compare { experiment, .. } => {
            experiment.jobs
        }
        _ => Some(1),
    };
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(Failure::usage)?;
    }

    match cli.command {
        Command::Check(problem) => check(&problem, &solver),
        Command::Adjust { problem, out } => adjust(&problem, out.as_deref(), &solver),
        Command::Learn {
            problem,
            approach,
            tau,
            out,
        } => learn(&problem, approach.into(), tau, out.as_deref(), &solver),
        Command::Sort {
            model,
            matrix,
            bundle,
            categories,
            out,
        } => sort(&model, matrix.as_deref(), bundle.as_deref(), categories, out.as_deref()),
        Command::Robustness { problem, tau, out } => {
            robustness(&problem, tau, out.as_deref(), &solver)
        }
        Command::Simulate {
            experiment,
            tau,
            export,
        } => simulate(&experiment, tau, export.as_deref(), &solver),
        Command::Compare {
            experiment,
            approach,
            alpha,
        } => compare(&experiment, &approach, alpha, &solver),
    }
}

struct Loaded {
    matrix: Matrix,
    instance: ProblemInstance,
    epsilon: f64,
}

fn load(problem: &Problem) -> Result<Loaded, Failure> {
    let (matrix, instance, bundle_eps) = match &problem.bundle {
        Some(path) => {
            let b = load_bundle(path)?;
            (b.matrix, b.instance, b.options.epsilon)
        }
        None => {
            let missing = |flag: &str| Failure::usage(anyhow!("{flag} is required"));
            let matrix = parse_matrix(&read_text(
                problem.matrix.as_deref().ok_or_else(|| missing("--matrix"))?,
            )?)?;
            let examples = read_text(problem.examples.as_deref().ok_or_else(|| missing("--examples"))?)?;
            let q = problem.categories.ok_or_else(|| missing("--categories"))?;
            let s = problem.subintervals.as_ref().ok_or_else(|| missing("--subintervals"))?;
            let instance = assemble_instance(&matrix, &examples, q, s)?;
            (matrix, instance, None)
        }
    };
    let epsilon = problem.epsilon.or(bundle_eps).unwrap_or(LearnConfig::default().eps_fixed);
    if !(epsilon > 0.0) {
        return Err(Failure::usage(anyhow!("--epsilon must be positive")));
    }
    Ok(Loaded {
        matrix,
        instance,
        epsilon,
    })
}

fn output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check(problem: &Problem, solver: &Solver) -> Outcome {
    let data = load(problem)?;
    let report = check_consistency(&data.instance, data.epsilon, Default::default(), solver)?;
    println!("optimum: {}", report.optimum);
    println!("alternative,category,slack_plus,slack_minus");
    for &(a, plus, minus) in &report.slacks {
        let h = data.instance.examples().category_of(a).unwrap_or_default();
        println!("{},{h},{plus},{minus}", data.matrix.ids[a]);
    }
    Ok(if report.is_consistent() {
        0
    } else {
        EXIT_INCONSISTENT
    })
}

fn adjust(problem: &Problem, out: Option<&Path>, solver: &Solver) -> Outcome {
    let data = load(problem)?;
    let adj = minimum_adjustment(&data.instance, data.epsilon, Default::default(), solver)?;
    eprintln!("moves: {}", adj.moves);
    for &(a, from, to) in &adj.changes {
        eprintln!("{}: {from} -> {to}", data.matrix.ids[a]);
    }
    output(out, &emit_examples(&adj.examples, &data.matrix.ids))?;
    Ok(0)
}

fn learn(
    problem: &Problem,
    approach: Approach,
    tau: Option<f64>,
    out: Option<&Path>,
    solver: &Solver,
) -> Outcome {
    let data = load(problem)?;
    let defaults = LearnConfig::default();
    let config = LearnConfig {
        approach,
        eps_fixed: data.epsilon,
        eps_floor: defaults.eps_floor.min(data.epsilon),
        tau: tau.unwrap_or(defaults.tau),
        ..defaults
    };
    let result = run_pipeline(&data.instance, &config, solver)?;
    if let Some(adj) = &result.adjustment {
        eprintln!("examples were inconsistent; {} reassigned", adj.moves);
        for &(a, from, to) in &adj.changes {
            eprintln!("{}: {from} -> {to}", data.matrix.ids[a]);
        }
    }
    let outcome = &result.outcome;
    println!("approach: {}", approach.name());
    println!("gamma*: {}", outcome.gamma_star);
    println!("eps*: {}", outcome.eps_star);
    print!("{}", emit_assignments(&result.assignments, &data.matrix.ids));
    if let Some(path) = out {
        write_text(path, &emit_model(&outcome.model, Some(&data.matrix.criteria)))?;
    }
    Ok(0)
}

fn sort(
    model_path: &Path,
    matrix_path: Option<&Path>,
    bundle: Option<&Path>,
    categories: Option<usize>,
    out: Option<&Path>,
) -> Outcome {
    let (model, _) = parse_model(&read_text(model_path)?)?;
    let (matrix, expected) = match bundle {
        Some(path) => {
            let b = load_bundle(path)?;
            (b.matrix, Some(b.options.categories))
        }
        None => {
            let path = matrix_path.ok_or_else(|| Failure::usage(anyhow!("--matrix is required")))?;
            (parse_matrix(&read_text(path)?)?, None)
        }
    };
    if let Some(q) = categories.or(expected) {
        if q != model.categories() {
            return Err(Failure::usage(anyhow!(
                "model has {} categories, expected {q}",
                model.categories()
            )));
        }
    }
    let mut assignments = Vec::with_capacity(matrix.rows.len());
    for (i, row) in matrix.rows.iter().enumerate() {
        let eval = model.evaluate(row).map_err(Failure::usage)?;
        if eval.clamped {
            log::warn!("{} lies outside the model's scales; clamped", matrix.ids[i]);
        }
        assignments.push((i, model.sort_row(row).map_err(Failure::usage)?));
    }
    output(out, &emit_assignments(&assignments, &matrix.ids))?;
    Ok(0)
}

fn robustness(problem: &Problem, tau: f64, out: Option<&Path>, solver: &Solver) -> Outcome {
    let data = load(problem)?;
    let config = RobustnessConfig {
        tau,
        ..RobustnessConfig::default()
    };
    let alternatives = data.instance.non_reference();
    if alternatives.is_empty() {
        return Err(Failure::usage(anyhow!("every alternative is a reference")));
    }
    let sets = possible_assignment_sets(&data.instance, &alternatives, &config, solver)?;
    let q = data.instance.categories();
    let value = apa(&sets, q)?;
    output(out, &emit_possible(&sets, &data.matrix.ids, q))?;
    println!("APA: {value}");
    Ok(0)
}

fn simulation_config(e: &Experiment) -> SimulationConfig {
    let defaults = SimulationConfig::default();
    let mut learn = defaults.learn.clone();
    if let Some(eps) = e.epsilon {
        learn.eps_fixed = eps;
        learn.eps_floor = learn.eps_floor.min(eps);
    }
    SimulationConfig {
        n: e.n,
        m: e.m,
        q: e.categories,
        subintervals: e.subintervals,
        r: e.r,
        replications: e
            .replications
            .unwrap_or(if e.full_scale { 100 } else { defaults.replications }),
        datasets: e.datasets,
        seed: e.seed,
        balanced: e.balanced,
        learn,
        ..defaults
    }
}

fn write_report(report: &ExperimentReport, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(Failure::usage)?;
            write_text(&dir.join("report.json"), &emit_report(report))?;
            write_text(&dir.join("summary.csv"), &emit_summary_csv(report))?;
            write_text(&dir.join("tests.csv"), &emit_tests_csv(report))?;
        }
        None => print!("{}", emit_summary_csv(report)),
    }
    Ok(())
}

fn simulate(e: &Experiment, tau: f64, export: Option<&Path>, solver: &Solver) -> Outcome {
    let mut config = simulation_config(e);
    config.robustness.tau = tau;
    let datasets = generate_datasets(&config, solver)?;
    if let Some(dir) = export {
        for (d, data) in datasets.iter().enumerate() {
            let sub = dir.join(format!("dataset{:02}", d + 1));
            std::fs::create_dir_all(&sub)
                .with_context(|| format!("creating {}", sub.display()))
                .map_err(Failure::usage)?;
            let matrix = data.to_matrix();
            write_text(&sub.join("matrix.csv"), &emit_matrix(&matrix))?;
            write_text(&sub.join("truth.csv"), &emit_examples(&data.truth_examples(), &matrix.ids))?;
            write_text(&sub.join("model.json"), &emit_model(&data.model, Some(&matrix.criteria)))?;
        }
    }
    let report = robustness_on(&config, &datasets, solver)?;
    write_report(&report, e.out.as_deref())?;
    Ok(0)
}

fn compare(e: &Experiment, approaches: &[ApproachArg], alpha: f64, solver: &Solver) -> Outcome {
    let mut config = simulation_config(e);
    config.alpha = alpha;
    if !approaches.is_empty() {
        config.approaches = approaches.iter().map(|&a| a.into()).collect();
    }
    let report = run_comparison(&config, solver)?;
    write_report(&report, e.out.as_deref())?;
    Ok(0)
}
