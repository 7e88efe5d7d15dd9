//! Shared fixtures for the benchmarks.

use thermeta::{
    DesignField, Forward, OptimizationProblem, OptimizerSettings, OrthotropicConductivity,
    ScenarioName, ScenarioSetup,
};

/// Full-size scenario with a non-uniform design so every element differs.
pub fn full_problem(name: ScenarioName) -> (OptimizationProblem, DesignField) {
    let mut problem = ScenarioSetup::default()
        .build(name, OptimizerSettings::default())
        .expect("scenario builds");
    let n = problem.initial.len();
    let design = DesignField::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                OrthotropicConductivity::new(0.1 + 0.8 * t, 0.9 - 0.8 * t)
            })
            .collect(),
        problem.initial.lower,
        problem.initial.upper,
    );
    let fwd = Forward::solve(&problem.model, &problem.initial).expect("initial solve");
    problem.objective.prepare(&fwd).expect("normalizers");
    (problem, design)
}
