//! Adjoint gradients against central finite differences.

use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermeta::design::DesignField;
use thermeta::objectives::{finite_difference_check, relative_error, Forward, ObjectiveSpec};
use thermeta::optimizer::{OptimizationProblem, OptimizerSettings};
use thermeta::scenario::{ScenarioName, ScenarioSetup};
use thermeta::OrthotropicConductivity;

/// Central-difference steps; the larger mesh needs a larger step to stay
/// above solver round-off.
const STEP_SMALL: f64 = 1e-6;
const STEP_FULL: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
const PROBES: usize = 20;

fn random_design(len: usize, rng: &mut ChaCha8Rng) -> DesignField {
    DesignField::new(
        (0..len)
            .map(|_| OrthotropicConductivity::new(rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)))
            .collect(),
        1e-9,
        1.0,
    )
}

fn check(problem: &OptimizationProblem, seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = random_design(problem.model.design_len(), &mut rng);
    let mut spec = problem.objective.clone();
    spec.prepare(&Forward::solve(&problem.model, &design).unwrap())
        .unwrap();
    let probes = sample(&mut rng, design.len(), PROBES.min(design.len())).into_vec();
    let rows = finite_difference_check(&problem.model, &design, &spec, &probes, step).unwrap();
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.2.abs()));
    rows.iter()
        .map(|&(_, _, adj, fd)| relative_error(adj, fd, 1e-3 * scale))
        .fold(0.0, f64::max)
}

fn run(setup: &ScenarioSetup, step: f64, names: &[ScenarioName]) {
    for (i, &name) in names.iter().enumerate() {
        let p = setup.build(name, OptimizerSettings::default()).unwrap();
        let err = check(&p, 7 + i as u64, step);
        println!(
            "{name} {}x{}: max relative error {err:.3e}",
            setup.nx, setup.ny
        );
        assert!(err <= TOLERANCE, "{name}: {err:e}");
    }
}

#[test]
fn small_mesh_all_scenarios() {
    run(
        &ScenarioSetup::for_mesh(10, 10),
        STEP_SMALL,
        &ScenarioName::ALL,
    );
}

#[test]
fn full_mesh_each_objective() {
    use ScenarioName::*;
    run(
        &ScenarioSetup::default(),
        STEP_FULL,
        &[
            CloakUniform,
            CloakEverywhere,
            ConcUniform,
            RotUniform,
            MultiCloakConc,
            MultiCloakRot,
        ],
    );
}

#[test]
fn non_design_elements_have_no_gradient_entry() {
    let p = ScenarioSetup::for_mesh(10, 10)
        .build(ScenarioName::RotUniform, OptimizerSettings::default())
        .unwrap();
    let fwd = Forward::solve(&p.model, &p.initial).unwrap();
    let g = p.objective.gradient(&p.model, &fwd).unwrap();
    assert_eq!(g.len(), p.model.design_len());
    assert!(matches!(p.objective, ObjectiveSpec::Rotator(_)));
}
