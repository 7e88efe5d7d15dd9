//! Box-constrained projected-gradient optimization of a design field.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::{DesignField, MacroModel};
use crate::error::{Error, Result};
use crate::objectives::{Forward, ObjectiveSpec, ObjectiveValues};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    /// Stop once the largest per-component change of an accepted step is
    /// below this value.
    pub tol: f64,
    pub move_limit: f64,
    pub max_halvings: usize,
    pub checkpoint_every: usize,
    pub method: Method,
}

/// How the trial point of an iteration is proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Projected gradient with Barzilai–Borwein step lengths.
    ProjectedGradient,
    /// Method of moving asymptotes: separable convex approximations with
    /// asymptotes adapted to the oscillation of each variable.
    #[default]
    Mma,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-4,
            move_limit: 0.05,
            max_halvings: 20,
            checkpoint_every: 50,
            method: Method::default(),
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.move_limit > 0.0) {
            return Err(Error::InvalidArgument(
                "optimizer tol and move_limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub model: MacroModel,
    pub objective: ObjectiveSpec,
    pub initial: DesignField,
    pub settings: OptimizerSettings,
}

impl OptimizationProblem {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if self.initial.len() != self.model.design_len() {
            return Err(Error::InvalidArgument(format!(
                "initial design has {} entries, design domain has {}",
                self.initial.len(),
                self.model.design_len()
            )));
        }
        if !self.initial.within_bounds() {
            return Err(Error::InvalidArgument(
                "initial design outside bounds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub values: ObjectiveValues,
    /// Largest per-component change of the step that produced this iterate.
    pub max_change: f64,
    /// Fraction of the trial step that was accepted.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    IterationCap,
    /// Backtracking exhausted without finding a non-increasing step.
    Stalled,
    /// A solve failed or produced a non-finite value at this iteration.
    Aborted {
        iteration: usize,
        message: String,
    },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::IterationCap => f.write_str("iteration cap"),
            Termination::Stalled => f.write_str("stalled"),
            Termination::Aborted { iteration, message } => {
                write!(f, "aborted at iteration {iteration}: {message}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub design: DesignField,
    /// The objective with its frozen normalizers; `None` from [`minimize`].
    pub objective: Option<ObjectiveSpec>,
    pub history: Vec<IterationRecord>,
    pub checkpoints: Vec<(usize, DesignField)>,
    pub termination: Termination,
}

impl OptimizationResult {
    pub fn initial(&self) -> &ObjectiveValues {
        &self.history[0].values
    }

    pub fn last(&self) -> &ObjectiveValues {
        &self.history[self.history.len() - 1].values
    }
}

/// Objective value and optional gradient at a design.
pub trait Objective {
    fn evaluate(
        &mut self,
        design: &DesignField,
        gradient: bool,
    ) -> Result<(ObjectiveValues, Option<Vec<[f64; 2]>>)>;
}

struct ModelObjective<'a> {
    model: &'a MacroModel,
    spec: ObjectiveSpec,
}

impl Objective for ModelObjective<'_> {
    fn evaluate(
        &mut self,
        design: &DesignField,
        gradient: bool,
    ) -> Result<(ObjectiveValues, Option<Vec<[f64; 2]>>)> {
        let fwd = Forward::solve(self.model, design)?;
        let values = self.spec.values(&fwd)?;
        let grad = if gradient {
            Some(self.spec.gradient(self.model, &fwd)?)
        } else {
            None
        };
        Ok((values, grad))
    }
}

/// Runs the configured problem; weighted normalizers are captured from the
/// initial design.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let mut spec = problem.objective.clone();
    let fwd = Forward::solve(&problem.model, &problem.initial)?;
    spec.prepare(&fwd)?;
    let mut objective = ModelObjective {
        model: &problem.model,
        spec,
    };
    let mut result = minimize(&mut objective, problem.initial.clone(), &problem.settings)?;
    result.objective = Some(objective.spec);
    Ok(result)
}

fn check_finite(values: &ObjectiveValues, grad: Option<&[[f64; 2]]>) -> Result<()> {
    if !values.total.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    if let Some(g) = grad {
        if g.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
    }
    Ok(())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum Stepper {
    Gradient {
        alpha: Option<f64>,
        lo: f64,
        hi: f64,
        move_limit: f64,
    },
    Mma {
        lo: f64,
        hi: f64,
        move_limit: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        previous: Vec<Option<f64>>,
        before_previous: Vec<Option<f64>>,
    },
}

impl Stepper {
    const ASYMPTOTE_INIT: f64 = 0.5;
    const ASYMPTOTE_SHRINK: f64 = 0.7;
    const ASYMPTOTE_GROW: f64 = 1.2;

    fn new(settings: &OptimizerSettings, n: usize, lo: f64, hi: f64) -> Self {
        match settings.method {
            Method::ProjectedGradient => Stepper::Gradient {
                alpha: None,
                lo,
                hi,
                move_limit: settings.move_limit,
            },
            Method::Mma => Stepper::Mma {
                lo,
                hi,
                move_limit: settings.move_limit,
                lower: vec![0.0; n],
                upper: vec![0.0; n],
                previous: vec![None; n],
                before_previous: vec![None; n],
            },
        }
    }

    /// Step from `x` to the proposed point, already inside the box and the
    /// move limit.
    fn direction(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        match self {
            Stepper::Gradient {
                alpha,
                lo,
                hi,
                move_limit,
            } => {
                let a = alpha.unwrap_or_else(|| {
                    let gmax = max_abs(g);
                    if gmax > 0.0 {
                        *move_limit / gmax
                    } else {
                        1.0
                    }
                });
                *alpha = Some(a);
                x.iter()
                    .zip(g)
                    .map(|(&xi, &gi)| {
                        let target = (xi - a * gi).clamp(*lo, *hi);
                        (target - xi).clamp(-*move_limit, *move_limit)
                    })
                    .collect()
            }
            Stepper::Mma {
                lo,
                hi,
                move_limit,
                lower,
                upper,
                previous,
                before_previous,
            } => {
                let range = *hi - *lo;
                (0..x.len())
                    .map(|i| {
                        let xi = x[i];
                        let (l, u) = match (previous[i], before_previous[i]) {
                            (Some(x1), Some(x2)) => {
                                let osc = (xi - x1) * (x1 - x2);
                                let gamma = if osc < 0.0 {
                                    Self::ASYMPTOTE_SHRINK
                                } else if osc > 0.0 {
                                    Self::ASYMPTOTE_GROW
                                } else {
                                    1.0
                                };
                                (xi - gamma * (x1 - lower[i]), xi + gamma * (upper[i] - x1))
                            }
                            _ => (
                                xi - Self::ASYMPTOTE_INIT * range,
                                xi + Self::ASYMPTOTE_INIT * range,
                            ),
                        };
                        let l = l.clamp(xi - 10.0 * range, xi - 0.01 * range);
                        let u = u.clamp(xi + 0.01 * range, xi + 10.0 * range);
                        lower[i] = l;
                        upper[i] = u;

                        let a = lo.max(l + 0.1 * (xi - l)).max(xi - *move_limit);
                        let b = hi.min(u - 0.1 * (u - xi)).min(xi + *move_limit);
                        let gi = g[i];
                        let reg = 1e-5 / range;
                        let p =
                            (u - xi).powi(2) * (1.001 * gi.max(0.0) + 0.001 * (-gi).max(0.0) + reg);
                        let q =
                            (xi - l).powi(2) * (0.001 * gi.max(0.0) + 1.001 * (-gi).max(0.0) + reg);
                        let (sp, sq) = (p.sqrt(), q.sqrt());
                        let target = ((sp * l + sq * u) / (sp + sq)).clamp(a, b);
                        target - xi
                    })
                    .collect()
            }
        }
    }

    fn accept(&mut self, x: &[f64], x_new: &[f64], g: &[f64], g_new: &[f64]) {
        match self {
            Stepper::Gradient {
                alpha, move_limit, ..
            } => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..x.len() {
                    let s = x_new[i] - x[i];
                    ss += s * s;
                    sy += s * (g_new[i] - g[i]);
                }
                *alpha = if sy > 0.0 {
                    Some(ss / sy)
                } else {
                    let gmax = max_abs(g_new);
                    (gmax > 0.0).then(|| *move_limit / gmax).or(*alpha)
                };
            }
            Stepper::Mma {
                previous,
                before_previous,
                ..
            } => {
                for i in 0..x.len() {
                    before_previous[i] = previous[i];
                    previous[i] = Some(x[i]);
                }
            }
        }
    }
}

/// Box-constrained descent with a per-component move limit and halving
/// backtracking along the proposed step; see [`Method`].
///
/// Failures after the first evaluation end the run with
/// [`Termination::Aborted`] and keep the history so far.
pub fn minimize(
    objective: &mut dyn Objective,
    initial: DesignField,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    let mut design = initial;
    design.project();
    let (lo, hi) = (design.lower, design.upper);

    let (values, grad) = objective.evaluate(&design, true)?;
    let grad = grad.expect("gradient requested");
    check_finite(&values, Some(&grad))?;

    let mut x = design.to_flat();
    let mut g: Vec<f64> = grad.iter().flatten().copied().collect();
    let mut f = values.total;
    let mut history = vec![IterationRecord {
        iteration: 0,
        values,
        max_change: 0.0,
        step: 0.0,
    }];
    let mut checkpoints = Vec::new();
    let mut stepper = Stepper::new(settings, x.len(), lo, hi);
    let mut termination = Termination::IterationCap;

    'outer: for iteration in 1..=settings.max_iter {
        let direction = stepper.direction(&x, &g);
        if max_abs(&direction) < settings.tol {
            termination = Termination::Converged;
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(&xi, &di)| (xi + t * di).clamp(lo, hi))
                .collect();
            design.set_flat(&trial);
            let (values, _) = match objective.evaluate(&design, false) {
                Ok(v) => v,
                Err(e) => {
                    termination = Termination::Aborted {
                        iteration,
                        message: e.to_string(),
                    };
                    break 'outer;
                }
            };
            if !values.total.is_finite() {
                termination = Termination::Aborted {
                    iteration,
                    message: Error::NonFinite("objective").to_string(),
                };
                break 'outer;
            }
            if values.total <= f {
                accepted = Some((trial, values));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, _)) = accepted else {
            design.set_flat(&x);
            termination = Termination::Stalled;
            break;
        };

        design.set_flat(&x_new);
        let (values, grad) = match objective
            .evaluate(&design, true)
            .and_then(|(v, g)| check_finite(&v, g.as_deref()).map(|_| (v, g)))
        {
            Ok(v) => v,
            Err(e) => {
                design.set_flat(&x);
                termination = Termination::Aborted {
                    iteration,
                    message: e.to_string(),
                };
                break;
            }
        };
        let g_new: Vec<f64> = grad
            .expect("gradient requested")
            .iter()
            .flatten()
            .copied()
            .collect();

        let max_change = x_new
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        stepper.accept(&x, &x_new, &g, &g_new);

        x = x_new;
        g = g_new;
        f = values.total;
        history.push(IterationRecord {
            iteration,
            values,
            max_change,
            step: t,
        });
        if settings.checkpoint_every > 0 && iteration % settings.checkpoint_every == 0 {
            checkpoints.push((iteration, design.clone()));
        }
        if max_change < settings.tol {
            termination = Termination::Converged;
            break;
        }
    }

    design.set_flat(&x);
    Ok(OptimizationResult {
        design,
        objective: None,
        history,
        checkpoints,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::OrthotropicConductivity;

    struct Quadratic {
        target: f64,
    }

    impl Objective for Quadratic {
        fn evaluate(
            &mut self,
            design: &DesignField,
            gradient: bool,
        ) -> Result<(ObjectiveValues, Option<Vec<[f64; 2]>>)> {
            let total = design
                .values
                .iter()
                .map(|k| (k.k11 - self.target).powi(2) + (k.k22 - self.target).powi(2))
                .sum();
            let grad = gradient.then(|| {
                design
                    .values
                    .iter()
                    .map(|k| [2.0 * (k.k11 - self.target), 2.0 * (k.k22 - self.target)])
                    .collect()
            });
            Ok((
                ObjectiveValues {
                    total,
                    ..Default::default()
                },
                grad,
            ))
        }
    }

    #[test]
    fn quadratic_surrogate_converges() {
        let initial = DesignField::new(
            (0..40)
                .map(|i| OrthotropicConductivity::new(0.025 * i as f64, 1.0 - 0.02 * i as f64))
                .collect(),
            1e-9,
            1.0,
        );
        let settings = OptimizerSettings {
            tol: 1e-9,
            ..Default::default()
        };
        let res = minimize(&mut Quadratic { target: 0.5 }, initial, &settings).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        for k in &res.design.values {
            assert!((k.k11 - 0.5).abs() < 1e-6 && (k.k22 - 0.5).abs() < 1e-6);
        }
        assert!(res
            .history
            .windows(2)
            .all(|w| w[1].values.total <= w[0].values.total));
    }

    #[test]
    fn bound_active_minimizer() {
        let initial = DesignField::uniform(5, OrthotropicConductivity::isotropic(0.5));
        let res = minimize(
            &mut Quadratic { target: 1.7 },
            initial,
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(res.design.within_bounds());
        assert!(res
            .design
            .values
            .iter()
            .all(|k| k.k11 == 1.0 && k.k22 == 1.0));
    }

    #[test]
    fn move_limit_caps_each_step() {
        let initial = DesignField::uniform(3, OrthotropicConductivity::isotropic(0.0));
        let res = minimize(
            &mut Quadratic { target: 1.0 },
            initial,
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(res.history.iter().all(|r| r.max_change <= 0.05 + 1e-15));
        assert!(res.history.len() >= 20);
    }
}
