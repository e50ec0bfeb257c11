//! Synthetic datasets, accuracy and robustness experiments, and the
//! statistics used to compare learners.
//!
//! Randomness comes from one ChaCha8 seed. Dataset `d` draws from stream
//! `(d+1) << 32` and its replication `k` from stream `((d+1) << 32) | (k+1)`,
//! so results do not depend on how cells are scheduled.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::instance::{AssignmentExamples, CriterionScale, ProblemInstance, SortingModel};
use crate::io::Matrix;
use crate::learn::{
    check_consistency, example_mismatches, learn, Approach, LearnConfig, LearnError,
};
use crate::robustness::{apa, possible_assignment_sets, RobustnessConfig};
use crate::solver::{Solver, SolverError};

/// Attempts at drawing a usable dataset before giving up.
const MAX_REDRAWS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot place {references} references across {categories} nonempty categories")]
    InsufficientAlternatives { references: usize, categories: usize },
    #[error("partition leaves no non-reference alternatives")]
    EmptyNonReference,
    #[error("partition leaves no reference alternatives")]
    EmptyReference,
    #[error("samples have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("sample is empty")]
    EmptySet,
    #[error("differences have zero variance")]
    DegenerateSample,
    #[error("no usable dataset after {0} draws")]
    GenerationFailed(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub subintervals: usize,
    /// Share of alternatives used as references.
    pub r: f64,
    pub replications: usize,
    pub datasets: usize,
    pub seed: u64,
    pub balanced: bool,
    pub approaches: Vec<Approach>,
    /// Significance level of the one-tailed t-tests.
    pub alpha: f64,
    pub learn: LearnConfig,
    pub robustness: RobustnessConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 200,
            m: 6,
            q: 4,
            subintervals: 2,
            r: 0.8,
            replications: 20,
            datasets: 10,
            seed: 1,
            balanced: false,
            approaches: Approach::ALL.to_vec(),
            alpha: 0.05,
            learn: LearnConfig::default(),
            robustness: RobustnessConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn references(&self) -> usize {
        (self.n as f64 * self.r).floor() as usize
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let fail = |msg: String| Err(SimulateError::InvalidConfig(msg));
        if self.m == 0 || self.subintervals == 0 {
            return fail("need at least one criterion and one subinterval".into());
        }
        if self.q < 2 || self.n < self.q {
            return fail(format!("need 2 <= q ({}) <= n ({})", self.q, self.n));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return fail(format!("reference share {} outside (0, 1)", self.r));
        }
        if self.datasets == 0 || self.replications == 0 {
            return fail("need at least one dataset and one replication".into());
        }
        let k = self.references();
        if k == 0 {
            return Err(SimulateError::EmptyReference);
        }
        if k >= self.n {
            return Err(SimulateError::EmptyNonReference);
        }
        if self.balanced && k < self.q {
            return Err(SimulateError::InsufficientAlternatives {
                references: k,
                categories: self.q,
            });
        }
        Ok(())
    }

    pub fn summary(&self) -> ConfigSummary {
        ConfigSummary {
            n: self.n,
            m: self.m,
            q: self.q,
            subintervals: self.subintervals,
            r: self.r,
            datasets: self.datasets,
            replications: self.replications,
            seed: self.seed,
            balanced: self.balanced,
        }
    }
}

pub fn dataset_rng(seed: u64, dataset: usize) -> ChaCha8Rng {
    stream_rng(seed, dataset, 0)
}

pub fn replication_rng(seed: u64, dataset: usize, replication: usize) -> ChaCha8Rng {
    stream_rng(seed, dataset, replication as u64 + 1)
}

fn stream_rng(seed: u64, dataset: usize, low: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((dataset as u64 + 1) << 32) | low);
    rng
}

/// A generated decision matrix with its hidden model and true categories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: Vec<Vec<f64>>,
    pub truth: Vec<usize>,
    pub model: SortingModel,
}

impl Dataset {
    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            ids: (1..=self.matrix.len()).map(|i| format!("a{i}")).collect(),
            criteria: (1..=self.model.scales.len()).map(|j| format!("g{j}")).collect(),
            rows: self.matrix.clone(),
        }
    }

    pub fn truth_examples(&self) -> AssignmentExamples {
        self.truth.iter().copied().enumerate().collect()
    }

    pub fn category_counts(&self, q: usize) -> Vec<usize> {
        let mut counts = vec![0; q];
        for &c in &self.truth {
            counts[c - 1] += 1;
        }
        counts
    }

    /// Instance over this matrix with the given examples.
    pub fn instance(&self, examples: AssignmentExamples) -> ProblemInstance {
        ProblemInstance::new(
            self.matrix.clone(),
            self.model.scales.clone(),
            self.model.categories(),
            examples,
        )
    }
}

/// Matrix, scales and a normalised random model: every marginal function is
/// 0 at its minimum and the maxima sum to 1.
type Draw = (Vec<Vec<f64>>, Vec<CriterionScale>, Vec<Vec<f64>>);

fn draw_model(config: &SimulationConfig, rng: &mut ChaCha8Rng) -> Option<Draw> {
    let matrix: Vec<Vec<f64>> = (0..config.n)
        .map(|_| (0..config.m).map(|_| rng.random::<f64>() * 100.0).collect())
        .collect();
    let mut scales = Vec::with_capacity(config.m);
    for j in 0..config.m {
        let column: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
        scales.push(CriterionScale::from_observations(&column, config.subintervals).ok()?);
    }
    let raw: Vec<Vec<f64>> = (0..config.m)
        .map(|_| (0..=config.subintervals).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mins: Vec<f64> = raw
        .iter()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let denominator: f64 = raw
        .iter()
        .zip(&mins)
        .map(|(v, lo)| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo)
        .sum();
    if !(denominator > 0.0) {
        return None;
    }
    let marginals = raw
        .iter()
        .zip(&mins)
        .map(|(v, lo)| v.iter().map(|x| (x - lo) / denominator).collect())
        .collect();
    Some((matrix, scales, marginals))
}

fn finish_dataset(
    matrix: Vec<Vec<f64>>,
    scales: Vec<CriterionScale>,
    marginals: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    config: &SimulationConfig,
    solver: &Solver,
) -> Result<Option<Dataset>, SimulateError> {
    let model = SortingModel {
        scales,
        marginals,
        thresholds,
        epsilon: 0.0,
        b0: 0.0,
        bq: 1.0,
    };
    let truth = matrix
        .iter()
        .map(|row| model.sort_row(row).expect("row width matches model"))
        .collect();
    let dataset = Dataset {
        matrix,
        truth,
        model,
    };
    // The hidden model may separate two categories by less than the fixed ε
    // used by the learners; such draws are replaced.
    let full = dataset.instance(dataset.truth_examples());
    let report = check_consistency(&full, config.learn.eps_fixed, config.learn.bounds, solver)?;
    Ok(report.is_consistent().then_some(dataset))
}

/// Random matrix in `[0, 100]`, random normalised marginals, thresholds
/// `h/q`. Draws whose full example set is inconsistent are replaced.
pub fn generate_dataset(
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
    solver: &Solver,
) -> Result<Dataset, SimulateError> {
    let thresholds: Vec<f64> = (1..config.q).map(|h| h as f64 / config.q as f64).collect();
    for _ in 0..MAX_REDRAWS {
        let Some((matrix, scales, marginals)) = draw_model(config, rng) else {
            continue;
        };
        if let Some(d) =
            finish_dataset(matrix, scales, marginals, thresholds.clone(), config, solver)?
        {
            return Ok(d);
        }
    }
    Err(SimulateError::GenerationFailed(MAX_REDRAWS))
}

/// Midpoints between the order statistics at `⌊h·n/q⌋`, or `None` on a tie.
pub fn balanced_thresholds(values: &[f64], q: usize) -> Option<Vec<f64>> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..q)
        .map(|h| {
            let k = h * n / q;
            if k == 0 || sorted[k - 1] == sorted[k] {
                None
            } else {
                Some(0.5 * (sorted[k - 1] + sorted[k]))
            }
        })
        .collect()
}

/// As [`generate_dataset`], with thresholds at global-value quantiles so
/// category sizes differ by at most one.
pub fn generate_balanced_dataset(
    config: &SimulationConfig,
    rng: &mut ChaCha8Rng,
    solver: &Solver,
) -> Result<Dataset, SimulateError> {
    for _ in 0..MAX_REDRAWS {
        let Some((matrix, scales, marginals)) = draw_model(config, rng) else {
            continue;
        };
        let probe = SortingModel::from_parts(scales.clone(), marginals.clone(), Vec::new(), 0.0);
        let values: Vec<f64> = matrix
            .iter()
            .map(|r| probe.global_value(r).expect("row width matches model"))
            .collect();
        let Some(thresholds) = balanced_thresholds(&values, config.q) else {
            continue;
        };
        if let Some(d) = finish_dataset(matrix, scales, marginals, thresholds, config, solver)? {
            return Ok(d);
        }
    }
    Err(SimulateError::GenerationFailed(MAX_REDRAWS))
}

/// Splits alternatives into `⌊n·r⌋` references and the rest, both sorted.
/// Balanced mode spreads references evenly over the true categories.
pub fn partition_reference(
    truth: &[usize],
    q: usize,
    r: f64,
    balanced: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>), SimulateError> {
    let n = truth.len();
    let k = (n as f64 * r).floor() as usize;
    if k == 0 {
        return Err(SimulateError::EmptyReference);
    }
    if k >= n {
        return Err(SimulateError::EmptyNonReference);
    }
    let mut reference: Vec<usize> = if balanced {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); q];
        for (i, &c) in truth.iter().enumerate() {
            groups[c - 1].push(i);
        }
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let quotas = balanced_quotas(&sizes, k, rng)?;
        let mut picked = Vec::with_capacity(k);
        for (group, quota) in groups.iter().zip(quotas) {
            picked.extend(sample(rng, group.len(), quota).into_iter().map(|i| group[i]));
        }
        picked
    } else {
        sample(rng, n, k).into_vec()
    };
    reference.sort_unstable();
    let mut is_ref = vec![false; n];
    for &i in &reference {
        is_ref[i] = true;
    }
    let rest = (0..n).filter(|&i| !is_ref[i]).collect();
    Ok((reference, rest))
}

/// Water-filling: the largest common level every category can meet, then
/// the remainder to distinct random categories with spare members.
fn balanced_quotas(
    sizes: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, SimulateError> {
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if k < nonempty {
        return Err(SimulateError::InsufficientAlternatives {
            references: k,
            categories: nonempty,
        });
    }
    let filled = |level: usize| sizes.iter().map(|&s| s.min(level)).sum::<usize>();
    let mut level = 0;
    while filled(level + 1) <= k && level < k {
        level += 1;
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s.min(level)).collect();
    let mut spare: Vec<usize> = (0..sizes.len()).filter(|&h| sizes[h] > level).collect();
    spare.shuffle(rng);
    for &h in spare.iter().take(k - filled(level)) {
        quotas[h] += 1;
    }
    Ok(quotas)
}

/// Share of exact category matches.
pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64, SimulateError> {
    if truth.len() != predicted.len() {
        return Err(SimulateError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(SimulateError::EmptySet);
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// One-tailed p-value for `mean(a − b) > 0`.
    pub p: f64,
    pub reject: bool,
}

/// One-tailed paired t-test of `H₀: μ_a ≤ μ_b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest, SimulateError> {
    if a.len() != b.len() {
        return Err(SimulateError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SimulateError::EmptySet);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 1e-300) || d.iter().all(|x| *x == d[0]) {
        return Err(SimulateError::DegenerateSample);
    }
    let t = mean / (var / n).sqrt();
    let df = d.len() - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = dist.sf(t);
    Ok(TTest {
        t,
        df,
        p,
        reject: p < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub subintervals: usize,
    pub r: f64,
    pub datasets: usize,
    pub replications: usize,
    pub seed: u64,
    pub balanced: bool,
}

/// Aggregate of one learner (or of the APA metric) across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub applicable: bool,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Mean over replications per dataset; `None` when every cell failed.
    pub dataset_means: Vec<Option<f64>>,
    pub failures: usize,
    /// Replications whose model missed at least one reference example.
    pub reference_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub test: Option<TTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// `accuracy` or `apa`.
    pub metric: String,
    pub config: ConfigSummary,
    pub summaries: Vec<MetricSummary>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    pub fn summary(&self, name: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Per-cell outcome: a metric value and whether the references were all
/// reproduced, or `None` on failure.
type Cell = Option<(f64, bool)>;

fn summarise(name: &str, applicable: bool, cells: &[Vec<Cell>]) -> MetricSummary {
    let mut failures = 0;
    let mut violations = 0;
    let dataset_means: Vec<Option<f64>> = cells
        .iter()
        .map(|reps| {
            let ok: Vec<f64> = reps
                .iter()
                .filter_map(|c| {
                    match c {
                        None => failures += 1,
                        Some((_, false)) => violations += 1,
                        _ => {}
                    }
                    c.map(|(v, _)| v)
                })
                .collect();
            mean_std(&ok).map(|(m, _)| m)
        })
        .collect();
    let available: Vec<f64> = dataset_means.iter().flatten().copied().collect();
    let stats = if applicable { mean_std(&available) } else { None };
    MetricSummary {
        name: name.to_string(),
        applicable,
        mean: stats.map(|s| s.0),
        std: stats.map(|s| s.1),
        dataset_means: if applicable { dataset_means } else { Vec::new() },
        failures: if applicable { failures } else { 0 },
        reference_violations: violations,
    }
}

/// Datasets for a configuration, generated in parallel from their own streams.
pub fn generate_datasets(
    config: &SimulationConfig,
    solver: &Solver,
) -> Result<Vec<Dataset>, SimulateError> {
    config.validate()?;
    (0..config.datasets)
        .into_par_iter()
        .map(|d| {
            let mut rng = dataset_rng(config.seed, d);
            if config.balanced {
                generate_balanced_dataset(config, &mut rng, solver)
            } else {
                generate_dataset(config, &mut rng, solver)
            }
        })
        .collect()
}

fn for_each_cell<T: Send>(
    config: &SimulationConfig,
    datasets: &[Dataset],
    cell: impl Fn(&Dataset, &[usize], &[usize]) -> T + Sync,
) -> Result<Vec<Vec<T>>, SimulateError> {
    let jobs: Vec<(usize, usize)> = (0..datasets.len())
        .flat_map(|d| (0..config.replications).map(move |k| (d, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(d, k)| {
            let mut rng = replication_rng(config.seed, d, k);
            let data = &datasets[d];
            let (reference, rest) =
                partition_reference(&data.truth, config.q, config.r, config.balanced, &mut rng)?;
            Ok(cell(data, &reference, &rest))
        })
        .collect::<Result<Vec<T>, SimulateError>>()?;
    let mut grouped: Vec<Vec<T>> = (0..datasets.len()).map(|_| Vec::new()).collect();
    for ((d, _), r) in jobs.into_iter().zip(results) {
        grouped[d].push(r);
    }
    Ok(grouped)
}

fn examples_for(data: &Dataset, reference: &[usize]) -> AssignmentExamples {
    reference.iter().map(|&i| (i, data.truth[i])).collect()
}

/// Accuracy of every configured learner on the non-reference alternatives.
pub fn run_comparison(
    config: &SimulationConfig,
    solver: &Solver,
) -> Result<ExperimentReport, SimulateError> {
    let datasets = generate_datasets(config, solver)?;
    compare_on(config, &datasets, solver)
}

/// [`run_comparison`] on datasets that already exist.
pub fn compare_on(
    config: &SimulationConfig,
    datasets: &[Dataset],
    solver: &Solver,
) -> Result<ExperimentReport, SimulateError> {
    let slopes = config.subintervals >= 2;
    let approaches: Vec<Approach> = config.approaches.clone();
    let cells = for_each_cell(config, datasets, |data, reference, rest| {
        let inst = data.instance(examples_for(data, reference));
        approaches
            .iter()
            .map(|&approach| -> Cell {
                if approach.needs_slope_changes() && !slopes {
                    return None;
                }
                let cfg = LearnConfig {
                    approach,
                    ..config.learn.clone()
                };
                match learn(&inst, &cfg, solver) {
                    Ok(out) => {
                        let predicted: Vec<usize> = rest
                            .iter()
                            .map(|&i| out.model.sort_row(&data.matrix[i]).expect("row width"))
                            .collect();
                        let truth: Vec<usize> = rest.iter().map(|&i| data.truth[i]).collect();
                        let acc = accuracy(&truth, &predicted).ok()?;
                        Some((acc, example_mismatches(&out.model, &inst).is_empty()))
                    }
                    Err(e) => {
                        log::warn!("{}: {e}", approach.name());
                        None
                    }
                }
            })
            .collect::<Vec<Cell>>()
    })?;

    let summaries: Vec<MetricSummary> = approaches
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let per: Vec<Vec<Cell>> = cells
                .iter()
                .map(|reps| reps.iter().map(|r| r[i]).collect())
                .collect();
            summarise(a.name(), slopes || !a.needs_slope_changes(), &per)
        })
        .collect();

    let mut comparisons = Vec::new();
    if let Some(base) = summaries.iter().find(|s| s.name == Approach::Utadis.name()) {
        for s in summaries.iter().filter(|s| s.name != base.name) {
            comparisons.push(compare(s, base, config.alpha));
        }
    }
    Ok(ExperimentReport {
        metric: "accuracy".into(),
        config: config.summary(),
        summaries,
        comparisons,
    })
}

fn compare(a: &MetricSummary, b: &MetricSummary, alpha: f64) -> Comparison {
    let mut out = Comparison {
        a: a.name.clone(),
        b: b.name.clone(),
        test: None,
        note: None,
    };
    if !a.applicable || !b.applicable {
        out.note = Some("not applicable".into());
        return out;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .dataset_means
        .iter()
        .zip(&b.dataset_means)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    match paired_t_test(&xs, &ys, alpha) {
        Ok(t) => out.test = Some(t),
        Err(e) => out.note = Some(e.to_string()),
    }
    out
}

/// APA of the possible assignments of the non-reference alternatives.
pub fn run_robustness_experiment(
    config: &SimulationConfig,
    solver: &Solver,
) -> Result<ExperimentReport, SimulateError> {
    let datasets = generate_datasets(config, solver)?;
    robustness_on(config, &datasets, solver)
}

pub fn robustness_on(
    config: &SimulationConfig,
    datasets: &[Dataset],
    solver: &Solver,
) -> Result<ExperimentReport, SimulateError> {
    let cells = for_each_cell(config, datasets, |data, reference, rest| -> Cell {
        let inst = data.instance(examples_for(data, reference));
        match possible_assignment_sets(&inst, rest, &config.robustness, solver) {
            Ok(sets) => {
                let contains_truth = sets
                    .iter()
                    .all(|s| s.categories.contains(&data.truth[s.alternative]));
                apa(&sets, config.q).ok().map(|v| (v, contains_truth))
            }
            Err(e) => {
                log::warn!("possible assignments: {e}");
                None
            }
        }
    })?;
    Ok(ExperimentReport {
        metric: "apa".into(),
        config: config.summary(),
        summaries: vec![summarise("apa", true, &cells)],
        comparisons: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::BoundBox;
    use crate::solver::SolverOptions;
    use proptest::prelude::*;

    fn solver() -> Solver {
        Solver::new(SolverOptions::default())
    }

    fn small(n: usize, m: usize, q: usize, s: usize) -> SimulationConfig {
        SimulationConfig {
            n,
            m,
            q,
            subintervals: s,
            datasets: 2,
            replications: 2,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn dataset_shape_and_range() {
        let cfg = small(4, 2, 2, 1);
        let d = generate_dataset(&cfg, &mut dataset_rng(7, 0), &solver()).unwrap();
        assert_eq!(d.matrix.len(), 4);
        assert!(d.matrix.iter().all(|r| r.len() == 2));
        assert!(d.matrix.iter().flatten().all(|x| (0.0..=100.0).contains(x)));
        let cfg = small(30, 3, 4, 2);
        let d = generate_dataset(&cfg, &mut dataset_rng(7, 1), &solver()).unwrap();
        assert_eq!(d.model.full_thresholds(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let top: f64 = d
            .model
            .marginals
            .iter()
            .map(|v| v.iter().copied().fold(f64::MIN, f64::max))
            .sum();
        assert!((top - 1.0).abs() < 1e-12);
        assert!(d.model.marginals.iter().all(|v| v.contains(&0.0)));
    }

    #[test]
    fn balanced_counts() {
        for (n, q) in [(40, 4), (7, 3), (23, 5)] {
            let cfg = SimulationConfig {
                balanced: true,
                r: 0.5,
                ..small(n, 3, q, 2)
            };
            let d = generate_balanced_dataset(&cfg, &mut dataset_rng(3, 0), &solver()).unwrap();
            let counts = d.category_counts(q);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
            if (n, q) == (7, 3) {
                let mut c = counts.clone();
                c.sort();
                assert_eq!(c, vec![2, 2, 3]);
            }
        }
        assert_eq!(balanced_thresholds(&[0.5; 8], 4), None);
    }

    #[test]
    fn partition_sizes() {
        let truth: Vec<usize> = (0..10).map(|i| 1 + i % 4).collect();
        let mut rng = replication_rng(1, 0, 0);
        let (r, n) = partition_reference(&truth, 4, 0.8, false, &mut rng).unwrap();
        assert_eq!((r.len(), n.len()), (8, 2));
        assert_eq!(
            partition_reference(&truth, 4, 1.0, false, &mut rng),
            Err(SimulateError::EmptyNonReference)
        );

        let truth: Vec<usize> = (0..16).map(|i| 1 + i % 4).collect();
        let (r, _) = partition_reference(&truth, 4, 0.5, true, &mut rng).unwrap();
        let mut per = [0; 4];
        for i in r {
            per[truth[i] - 1] += 1;
        }
        assert_eq!(per, [2, 2, 2, 2]);

        let skewed = vec![1, 1, 1, 1, 1, 1, 2, 3];
        assert_eq!(
            partition_reference(&skewed, 3, 0.25, true, &mut rng),
            Err(SimulateError::InsufficientAlternatives {
                references: 2,
                categories: 3
            })
        );
    }

    #[test]
    fn water_filling_respects_capacity() {
        let mut rng = replication_rng(5, 0, 0);
        let q = balanced_quotas(&[1, 10, 10, 3], 12, &mut rng).unwrap();
        assert_eq!(q.iter().sum::<usize>(), 12);
        assert_eq!((q[0], q[3]), (1, 3));
        assert!(q[1].abs_diff(q[2]) <= 1);
    }

    #[test]
    fn accuracy_values() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]), Ok(1.0));
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 1, 1]), Ok(0.5));
        assert_eq!(accuracy(&[1, 2], &[2, 1]), Ok(0.0));
        assert_eq!(accuracy(&[1], &[1, 2]), Err(SimulateError::LengthMismatch(1, 2)));
        assert_eq!(accuracy(&[], &[]), Err(SimulateError::EmptySet));
    }

    /// Upper tail of the t density by Simpson's rule on [t, t + 200].
    fn t_tail(t: f64, df: f64) -> f64 {
        let ln_gamma = |x: f64| statrs::function::gamma::ln_gamma(x);
        let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
        let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let steps = 200_000;
        let h = 200.0 / steps as f64;
        let mut sum = f(t) + f(t + 200.0);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(t + i as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn t_test_against_quadrature() {
        let d = [0.02, 0.01, 0.03, 0.015, 0.025];
        let zeros = [0.0; 5];
        let res = paired_t_test(&d, &zeros, 0.05).unwrap();
        let mean = 0.02;
        let sd = (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0).sqrt();
        assert!((res.t - mean / (sd / 5f64.sqrt())).abs() < 1e-12);
        assert_eq!(res.df, 4);
        let p = t_tail(res.t, 4.0);
        assert!((res.p - p).abs() < 1e-8, "{} vs {}", res.p, p);
        assert!(res.reject);

        let b = [0.5, 0.6, 0.7];
        let a = [0.51, 0.61, 0.71];
        assert_eq!(paired_t_test(&a, &b, 0.05), Err(SimulateError::DegenerateSample));
        assert_eq!(paired_t_test(&b, &b, 0.05), Err(SimulateError::DegenerateSample));
    }

    #[test]
    fn single_subinterval_marks_slope_learners_unavailable() {
        let cfg = SimulationConfig {
            r: 0.6,
            ..small(20, 2, 2, 1)
        };
        let rep = run_comparison(&cfg, &solver()).unwrap();
        for s in &rep.summaries {
            let slope = s.name == "approach1" || s.name == "lfp";
            assert_eq!(s.applicable, !slope, "{}", s.name);
            assert_eq!(s.mean.is_none(), slope);
        }
        assert!(rep.summaries.iter().all(|s| s.reference_violations == 0));
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = SimulationConfig {
            r: 0.6,
            ..small(24, 3, 3, 2)
        };
        let a = run_comparison(&cfg, &solver()).unwrap();
        let b = run_comparison(&cfg, &solver()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let a = run_robustness_experiment(&cfg, &solver()).unwrap();
        let b = run_robustness_experiment(&cfg, &solver()).unwrap();
        assert_eq!(a, b);
        let apa = a.summaries[0].mean.unwrap();
        assert!((0.0..=1.0).contains(&apa));
        assert_eq!(a.summaries[0].reference_violations, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn generated_datasets_are_consistent(seed in 0u64..1_000_000, q in 2usize..5, s in 1usize..4, balanced in any::<bool>()) {
            let cfg = SimulationConfig { balanced, r: 0.5, ..small(24, 3, q, s) };
            let mut rng = dataset_rng(seed, 0);
            let d = if balanced {
                generate_balanced_dataset(&cfg, &mut rng, &solver()).unwrap()
            } else {
                generate_dataset(&cfg, &mut rng, &solver()).unwrap()
            };
            let full = d.instance(d.truth_examples());
            let r = check_consistency(&full, cfg.learn.eps_fixed, BoundBox::default(), &solver()).unwrap();
            prop_assert!(r.optimum <= 1e-8);
            if balanced {
                let c = d.category_counts(q);
                prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
            }
        }
    }
}
