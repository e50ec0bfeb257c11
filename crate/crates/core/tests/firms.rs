use std::path::Path;

use mcsort::io::load_bundle;
use mcsort::learn::{
    check_consistency, example_mismatches, learn, run_pipeline, Approach, LearnConfig,
};
use mcsort::solver::{Solver, SolverOptions};
use mcsort::valuefn::transform_to_uta;

fn firms() -> mcsort::instance::ProblemInstance {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/firms/problem.json");
    load_bundle(&path).unwrap().instance
}

fn solver() -> Solver {
    Solver::new(SolverOptions::default())
}

#[test]
fn examples_are_consistent() {
    let inst = firms();
    let r = check_consistency(&inst, 1e-3, Default::default(), &solver()).unwrap();
    assert!(r.optimum <= 1e-8, "{}", r.optimum);
}

#[test]
fn approach1_optima() {
    let inst = firms();
    let out = learn(&inst, &LearnConfig::with_approach(Approach::Approach1), &solver()).unwrap();
    eprintln!("gamma* = {}, eps* = {}", out.gamma_star, out.eps_star);
    assert!((out.gamma_star - 0.000683).abs() <= 1e-4);
    assert!((out.eps_star - 0.001).abs() <= 1e-6);
    assert!(example_mismatches(&out.model, &inst).is_empty());
}

#[test]
fn approach2_optima() {
    let inst = firms();
    let out = learn(&inst, &LearnConfig::with_approach(Approach::Approach2), &solver()).unwrap();
    eprintln!("gamma* = {}, eps* = {}", out.gamma_star, out.eps_star);
    assert!((out.eps_star - 0.2675).abs() <= 1e-3);
    assert!((out.gamma_star - 0.458).abs() <= 5e-3);
    assert!(example_mismatches(&out.model, &inst).is_empty());
    let t = transform_to_uta(&out.model).unwrap();
    eprintln!("b^S = {:?}, weights = {:?}", t.thresholds, t.weights);
}

#[test]
fn every_learner_reproduces_the_examples() {
    let inst = firms();
    for approach in Approach::ALL {
        let res = run_pipeline(&inst, &LearnConfig::with_approach(approach), &solver()).unwrap();
        assert!(res.adjustment.is_none());
        assert!(example_mismatches(&res.outcome.model, &inst).is_empty(), "{approach:?}");
        assert_eq!(res.assignments.len(), 14);
    }
}

#[test]
fn every_non_reference_firm_can_go_anywhere() {
    use mcsort::robustness::{apa, possible_assignment_sets, RobustnessConfig};
    let inst = firms();
    let alts = inst.non_reference();
    assert_eq!(alts.len(), 14);
    let sets = possible_assignment_sets(&inst, &alts, &RobustnessConfig::default(), &solver()).unwrap();
    for s in &sets {
        assert_eq!(s.categories, vec![1, 2, 3, 4], "a{}", s.alternative + 1);
    }
    assert_eq!(apa(&sets, 4).unwrap(), 0.0);
}
