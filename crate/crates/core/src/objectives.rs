//! Functionality objectives and their adjoint sensitivities.
//!
//! Every term contributes `∂J/∂T` (per node) and an explicit `∂J/∂κ` (per
//! element). One adjoint solve `K_ff λ = ∂J/∂T_f` then gives
//!
//! ```text
//! dJ/dκ_e = ∂J/∂κ_e − λ_eᵀ (∂K_e/∂κ_e) T_e
//! ```
//!
//! for both components of every design element. Weighted combinations sum
//! their terms' right-hand sides first, so they also need a single solve.

use crate::design::{DesignField, MacroModel};
use crate::error::{Error, Result};
use crate::fe::{self, centroid_gradient, gradient_matrix, DirectionalStiffness, HeatFluxField};
use crate::fe::{TemperatureField, ThermalState};
use crate::mesh::{BoundaryConditions, MacroMesh, OrthotropicConductivity};
use crate::regions::{ElementSet, NodeSet, ProbePoints};

/// Forward solution of one design, shared by all objective evaluations of
/// an iteration.
#[derive(Debug, Clone)]
pub struct Forward {
    pub field: Vec<OrthotropicConductivity>,
    pub state: ThermalState,
    pub flux: HeatFluxField,
}

impl Forward {
    pub fn solve(model: &MacroModel, design: &DesignField) -> Result<Self> {
        let field = model.field(design);
        let state = fe::solve_state(&model.mesh, &field, &model.bc)?;
        let flux = fe::heat_flux(&model.mesh, &field, &state.temperature)?;
        Ok(Self { field, state, flux })
    }

    pub fn temperature(&self) -> &[f64] {
        &self.state.temperature.values
    }
}

/// Right-hand side and explicit part of a sensitivity, accumulated by terms.
struct SensitivityParts {
    dj_dt: Vec<f64>,
    explicit: Vec<[f64; 2]>,
}

impl SensitivityParts {
    fn new(mesh: &MacroMesh) -> Self {
        Self {
            dj_dt: vec![0.0; mesh.node_count()],
            explicit: vec![[0.0; 2]; mesh.element_count()],
        }
    }

    /// Adjoint solve and per-design-element assembly.
    fn finish(self, model: &MacroModel, fwd: &Forward) -> Vec<[f64; 2]> {
        let lambda = fwd.state.adjoint(&self.dj_dt);
        let ops = DirectionalStiffness::new(model.mesh.h);
        let t = fwd.temperature();
        model
            .design
            .as_slice()
            .iter()
            .map(|&e| {
                let nodes = model.mesh.element_nodes(e);
                let te = nodes.map(|n| t[n]);
                let le = nodes.map(|n| lambda[n]);
                let quad = |k: &fe::Mat4| -> f64 {
                    let mut s = 0.0;
                    for a in 0..4 {
                        for b in 0..4 {
                            s += le[a] * k[a][b] * te[b];
                        }
                    }
                    s
                };
                [
                    self.explicit[e][0] - quad(&ops.kx),
                    self.explicit[e][1] - quad(&ops.ky),
                ]
            })
            .collect()
    }
}

/// `Σ_{i∈query} ((T_i − T_ref,i) / T_ref,i)²`.
pub fn eval_cloak(t: &[f64], reference: &[f64], query: &NodeSet) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::Empty("cloak query set"));
    }
    Ok(compensated_sum(query.as_slice().iter().map(|&i| {
        let r = (t[i] - reference[i]) / reference[i];
        r * r
    })))
}

/// Neumaier summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Relative temperature deviation from a reference field over query nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CloakTerm {
    pub reference: Vec<f64>,
    pub query: NodeSet,
}

impl CloakTerm {
    /// Drops Dirichlet nodes and nodes whose reference temperature is below
    /// `1e-3 · |T_hot − T_cold|` from the candidate set.
    pub fn new(
        mesh: &MacroMesh,
        bc: &BoundaryConditions,
        reference: TemperatureField,
        mut candidates: NodeSet,
    ) -> Result<Self> {
        if reference.values.len() != mesh.node_count() {
            return Err(Error::InvalidArgument(
                "reference field size mismatch".into(),
            ));
        }
        let prescribed = bc.prescribed(mesh);
        let (lo, hi) = bc.value_range();
        let eps = 1e-3 * (hi - lo).abs();
        candidates.retain(|&n| prescribed[n].is_none() && reference.values[n].abs() >= eps);
        if candidates.is_empty() {
            return Err(Error::Empty("cloak query set"));
        }
        Ok(Self {
            reference: reference.values,
            query: candidates,
        })
    }

    pub fn value(&self, fwd: &Forward) -> Result<f64> {
        eval_cloak(fwd.temperature(), &self.reference, &self.query)
    }

    /// Largest `|T − T_ref|` over the query set.
    pub fn max_deviation(&self, fwd: &Forward) -> f64 {
        let t = fwd.temperature();
        self.query
            .as_slice()
            .iter()
            .map(|&i| (t[i] - self.reference[i]).abs())
            .fold(0.0, f64::max)
    }

    fn accumulate(&self, fwd: &Forward, scale: f64, parts: &mut SensitivityParts) {
        let t = fwd.temperature();
        for &i in self.query.as_slice() {
            let r = self.reference[i];
            parts.dj_dt[i] += scale * 2.0 * (t[i] - r) / (r * r);
        }
    }
}

/// `|(T_B − T_C) / (T_A − T_D)|`.
pub fn eval_concentrator(t: &[f64], probes: &ProbePoints) -> Result<f64> {
    let den = t[probes.a] - t[probes.d];
    if den.abs() < 1e-12 {
        return Err(Error::DegenerateProbes(den.abs()));
    }
    Ok(((t[probes.b] - t[probes.c]) / den).abs())
}

/// Concentration index driven toward one; the optimized quantity is
/// `(J_ct − 1)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentratorTerm {
    pub probes: ProbePoints,
}

impl ConcentratorTerm {
    pub fn index(&self, fwd: &Forward) -> Result<f64> {
        eval_concentrator(fwd.temperature(), &self.probes)
    }

    pub fn value(&self, fwd: &Forward) -> Result<f64> {
        let j = self.index(fwd)?;
        Ok((j - 1.0) * (j - 1.0))
    }

    fn accumulate(&self, fwd: &Forward, scale: f64, parts: &mut SensitivityParts) -> Result<()> {
        let t = fwd.temperature();
        let p = &self.probes;
        let num = t[p.b] - t[p.c];
        let den = t[p.a] - t[p.d];
        if den.abs() < 1e-12 {
            return Err(Error::DegenerateProbes(den.abs()));
        }
        let ratio = num / den;
        let sign = if ratio < 0.0 { -1.0 } else { 1.0 };
        // d(|r| − 1)² = 2(|r| − 1) sign(r) dr
        let outer = scale * 2.0 * (ratio.abs() - 1.0) * sign;
        let d_num = outer / den;
        let d_den = -outer * num / (den * den);
        parts.dj_dt[p.b] += d_num;
        parts.dj_dt[p.c] -= d_num;
        parts.dj_dt[p.a] += d_den;
        parts.dj_dt[p.d] -= d_den;
        Ok(())
    }
}

/// `Σ_{ω∈target} q̂ · φ_ω`.
pub fn eval_rotator(flux: &HeatFluxField, target: &ElementSet, direction: [f64; 2]) -> f64 {
    compensated_sum(
        target
            .as_slice()
            .iter()
            .map(|&e| direction[0] * flux.values[e][0] + direction[1] * flux.values[e][1]),
    )
}

/// Heat flux projected on a fixed direction over a target region.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatorTerm {
    pub target: ElementSet,
    pub direction: [f64; 2],
}

impl RotatorTerm {
    pub fn new(target: ElementSet, direction: [f64; 2]) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Empty("rotator target"));
        }
        let norm = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "rotator direction must be a unit vector, |q| = {norm}"
            )));
        }
        Ok(Self { target, direction })
    }

    pub fn value(&self, fwd: &Forward) -> f64 {
        eval_rotator(&fwd.flux, &self.target, self.direction)
    }

    /// Number of target elements whose flux points against `direction`.
    pub fn reversed_count(&self, fwd: &Forward) -> usize {
        self.target
            .as_slice()
            .iter()
            .filter(|&&e| {
                let f = fwd.flux.values[e];
                self.direction[0] * f[0] + self.direction[1] * f[1] < 0.0
            })
            .count()
    }

    fn accumulate(
        &self,
        mesh: &MacroMesh,
        fwd: &Forward,
        scale: f64,
        parts: &mut SensitivityParts,
    ) {
        let b = gradient_matrix(0.0, 0.0, mesh.h);
        let q = self.direction;
        let t = &fwd.state.temperature;
        for &w in self.target.as_slice() {
            let k = fwd.field[w];
            let nodes = mesh.element_nodes(w);
            // φ = −diag(k) B T_w
            for a in 0..4 {
                parts.dj_dt[nodes[a]] -= scale * (q[0] * k.k11 * b[0][a] + q[1] * k.k22 * b[1][a]);
            }
            let g = centroid_gradient(&b, &t.element_values(mesh, w));
            parts.explicit[w][0] -= scale * q[0] * g[0];
            parts.explicit[w][1] -= scale * q[1] * g[1];
        }
    }
}

/// A weighted term with its frozen iteration-0 normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTerm<T> {
    pub weight: f64,
    pub normalizer: Option<f64>,
    pub term: T,
}

impl<T> WeightedTerm<T> {
    pub fn new(weight: f64, term: T) -> Self {
        Self {
            weight,
            normalizer: None,
            term,
        }
    }

    fn scale(&self, name: &'static str) -> Result<f64> {
        match self.normalizer {
            Some(n) if n != 0.0 && n.is_finite() => Ok(self.weight / n),
            Some(_) => Err(Error::ZeroNormalizer(name)),
            None => Err(Error::InvalidArgument(format!(
                "{name} normalizer not captured; call capture_normalizers first"
            ))),
        }
    }
}

/// `ξ_ck J_ck/J⁰_ck + ξ_ct (J_ct−1)²/(J⁰_ct−1)² + ξ_ri J_ri/J⁰_ri`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedObjective {
    pub cloak: Option<WeightedTerm<CloakTerm>>,
    pub concentrator: Option<WeightedTerm<ConcentratorTerm>>,
    pub rotator: Option<WeightedTerm<RotatorTerm>>,
}

impl WeightedObjective {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.cloak.as_ref().map(|t| t.weight),
            self.concentrator.as_ref().map(|t| t.weight),
            self.rotator.as_ref().map(|t| t.weight),
        ];
        if weights.iter().flatten().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "weights must be non-negative".into(),
            ));
        }
        if !weights.iter().flatten().any(|&w| w > 0.0) {
            return Err(Error::InvalidArgument(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Records each active term's value at `fwd` as its normalizer.
    pub fn capture_normalizers(&mut self, fwd: &Forward) -> Result<()> {
        self.validate()?;
        if let Some(t) = self.cloak.as_mut().filter(|t| t.weight > 0.0) {
            t.normalizer = Some(t.term.value(fwd)?);
        }
        if let Some(t) = self.concentrator.as_mut().filter(|t| t.weight > 0.0) {
            t.normalizer = Some(t.term.value(fwd)?);
        }
        if let Some(t) = self.rotator.as_mut().filter(|t| t.weight > 0.0) {
            t.normalizer = Some(t.term.value(fwd));
        }
        Ok(())
    }
}

/// Which functionality is optimized.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Cloak(CloakTerm),
    Concentrator(ConcentratorTerm),
    Rotator(RotatorTerm),
    Weighted(WeightedObjective),
}

/// Objective value plus the raw functionality measures behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValues {
    pub total: f64,
    /// `J_ck`.
    pub cloak: Option<f64>,
    /// `J_ct` (the index, not its squared deviation).
    pub index: Option<f64>,
    /// `J_ri`.
    pub rotator: Option<f64>,
}

impl ObjectiveSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ObjectiveSpec::Cloak(_) => "cloak",
            ObjectiveSpec::Concentrator(_) => "concentrator",
            ObjectiveSpec::Rotator(_) => "rotator",
            ObjectiveSpec::Weighted(_) => "weighted",
        }
    }

    pub fn cloak_term(&self) -> Option<&CloakTerm> {
        match self {
            ObjectiveSpec::Cloak(c) => Some(c),
            ObjectiveSpec::Weighted(w) => w.cloak.as_ref().map(|t| &t.term),
            _ => None,
        }
    }

    pub fn rotator_term(&self) -> Option<&RotatorTerm> {
        match self {
            ObjectiveSpec::Rotator(r) => Some(r),
            ObjectiveSpec::Weighted(w) => w.rotator.as_ref().map(|t| &t.term),
            _ => None,
        }
    }

    /// Captures weighted normalizers at `fwd`; other variants are unchanged.
    pub fn prepare(&mut self, fwd: &Forward) -> Result<()> {
        if let ObjectiveSpec::Weighted(w) = self {
            w.capture_normalizers(fwd)?;
        }
        Ok(())
    }

    pub fn values(&self, fwd: &Forward) -> Result<ObjectiveValues> {
        Ok(match self {
            ObjectiveSpec::Cloak(c) => {
                let v = c.value(fwd)?;
                ObjectiveValues {
                    total: v,
                    cloak: Some(v),
                    ..Default::default()
                }
            }
            ObjectiveSpec::Concentrator(c) => {
                let j = c.index(fwd)?;
                ObjectiveValues {
                    total: (j - 1.0) * (j - 1.0),
                    index: Some(j),
                    ..Default::default()
                }
            }
            ObjectiveSpec::Rotator(r) => {
                let v = r.value(fwd);
                ObjectiveValues {
                    total: v,
                    rotator: Some(v),
                    ..Default::default()
                }
            }
            ObjectiveSpec::Weighted(w) => {
                let mut out = ObjectiveValues::default();
                if let Some(t) = &w.cloak {
                    let v = t.term.value(fwd)?;
                    out.cloak = Some(v);
                    if t.weight > 0.0 {
                        out.total += t.scale("cloak")? * v;
                    }
                }
                if let Some(t) = &w.concentrator {
                    let j = t.term.index(fwd)?;
                    out.index = Some(j);
                    if t.weight > 0.0 {
                        out.total += t.scale("concentrator")? * (j - 1.0) * (j - 1.0);
                    }
                }
                if let Some(t) = &w.rotator {
                    let v = t.term.value(fwd);
                    out.rotator = Some(v);
                    if t.weight > 0.0 {
                        out.total += t.scale("rotator")? * v;
                    }
                }
                out
            }
        })
    }

    pub fn value(&self, fwd: &Forward) -> Result<f64> {
        Ok(self.values(fwd)?.total)
    }

    /// `(dJ/dk11, dJ/dk22)` for each design element, in design order.
    pub fn gradient(&self, model: &MacroModel, fwd: &Forward) -> Result<Vec<[f64; 2]>> {
        let mut parts = SensitivityParts::new(&model.mesh);
        match self {
            ObjectiveSpec::Cloak(c) => c.accumulate(fwd, 1.0, &mut parts),
            ObjectiveSpec::Concentrator(c) => c.accumulate(fwd, 1.0, &mut parts)?,
            ObjectiveSpec::Rotator(r) => r.accumulate(&model.mesh, fwd, 1.0, &mut parts),
            ObjectiveSpec::Weighted(w) => {
                if let Some(t) = w.cloak.as_ref().filter(|t| t.weight > 0.0) {
                    t.term.accumulate(fwd, t.scale("cloak")?, &mut parts);
                }
                if let Some(t) = w.concentrator.as_ref().filter(|t| t.weight > 0.0) {
                    t.term
                        .accumulate(fwd, t.scale("concentrator")?, &mut parts)?;
                }
                if let Some(t) = w.rotator.as_ref().filter(|t| t.weight > 0.0) {
                    t.term
                        .accumulate(&model.mesh, fwd, t.scale("rotator")?, &mut parts);
                }
            }
        }
        Ok(parts.finish(model, fwd))
    }
}

pub fn grad_cloak(model: &MacroModel, fwd: &Forward, term: &CloakTerm) -> Vec<[f64; 2]> {
    let mut parts = SensitivityParts::new(&model.mesh);
    term.accumulate(fwd, 1.0, &mut parts);
    parts.finish(model, fwd)
}

/// Gradient of `(J_ct − 1)²`.
pub fn grad_concentrator(
    model: &MacroModel,
    fwd: &Forward,
    term: &ConcentratorTerm,
) -> Result<Vec<[f64; 2]>> {
    let mut parts = SensitivityParts::new(&model.mesh);
    term.accumulate(fwd, 1.0, &mut parts)?;
    Ok(parts.finish(model, fwd))
}

pub fn grad_rotator(model: &MacroModel, fwd: &Forward, term: &RotatorTerm) -> Vec<[f64; 2]> {
    let mut parts = SensitivityParts::new(&model.mesh);
    term.accumulate(&model.mesh, fwd, 1.0, &mut parts);
    parts.finish(model, fwd)
}

/// Central-difference check of `spec.gradient` at the given design
/// elements; returns `(element position, component, adjoint, fd)` rows.
pub fn finite_difference_check(
    model: &MacroModel,
    design: &DesignField,
    spec: &ObjectiveSpec,
    probes: &[usize],
    step: f64,
) -> Result<Vec<(usize, usize, f64, f64)>> {
    let fwd = Forward::solve(model, design)?;
    let grad = spec.gradient(model, &fwd)?;
    let mut rows = Vec::new();
    for &p in probes {
        for comp in 0..2 {
            let eval = |delta: f64| -> Result<f64> {
                let mut d = design.clone();
                let k = &mut d.values[p];
                if comp == 0 {
                    k.k11 += delta;
                } else {
                    k.k22 += delta;
                }
                spec.value(&Forward::solve(model, &d)?)
            };
            let fd = (eval(step)? - eval(-step)?) / (2.0 * step);
            rows.push((p, comp, grad[p][comp], fd));
        }
    }
    Ok(rows)
}

/// Relative error used by gradient checks, guarded against tiny gradients.
pub fn relative_error(adjoint: f64, fd: f64, scale: f64) -> f64 {
    (adjoint - fd).abs() / fd.abs().max(adjoint.abs()).max(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MacroMesh;
    use crate::regions::Shape;

    fn small_model() -> MacroModel {
        let mesh = MacroMesh::unit(10, 10);
        let bc = BoundaryConditions::left_right(&mesh, 100.0, 0.0);
        let base = vec![OrthotropicConductivity::isotropic(0.3162); mesh.element_count()];
        let design = ElementSet::from_shape(
            &mesh,
            &Shape::Ring {
                center: [5.0, 5.0],
                r_in: 1.5,
                r_out: 4.5,
            },
        );
        MacroModel::new(mesh, bc, base, design).unwrap()
    }

    #[test]
    fn cloak_arithmetic() {
        let mesh = MacroMesh::unit(1, 1);
        let q = NodeSet::new(&mesh, vec![2]).unwrap();
        let r = vec![1.0; 4];
        assert_eq!(eval_cloak(&[0.0, 0.0, 2.0, 0.0], &r, &q).unwrap(), 1.0);
        assert_eq!(eval_cloak(&r, &r, &q).unwrap(), 0.0);
        let empty = NodeSet::default();
        assert!(eval_cloak(&r, &r, &empty).is_err());
    }

    #[test]
    fn concentrator_linear_profile() {
        let mesh = MacroMesh::unit(75, 50);
        let probes = ProbePoints::centerline(&mesh, [37.5, 25.0], 15.0, 20.0).unwrap();
        let t: Vec<f64> = (0..mesh.node_count())
            .map(|n| 100.0 * (1.0 - mesh.node_coords(n).0 / 75.0))
            .collect();
        let j = eval_concentrator(&t, &probes).unwrap();
        assert!((j - 0.75).abs() < 1e-12);
        // invariant under affine maps of T
        let shifted: Vec<f64> = t.iter().map(|v| -3.0 * v + 7.0).collect();
        assert!((eval_concentrator(&shifted, &probes).unwrap() - j).abs() < 1e-12);
        let flat = vec![5.0; mesh.node_count()];
        assert!(matches!(
            eval_concentrator(&flat, &probes),
            Err(Error::DegenerateProbes(_))
        ));
    }

    #[test]
    fn rotator_projection() {
        let flux = HeatFluxField {
            values: vec![[1.0, 0.0], [0.0, 2.0], [-0.5, 3.0]],
        };
        let mesh = MacroMesh::unit(3, 1);
        let all = ElementSet::all(&mesh);
        assert_eq!(eval_rotator(&flux, &all, [1.0, 0.0]), 0.5);
        let only_y = ElementSet::new(&mesh, vec![1]).unwrap();
        assert_eq!(eval_rotator(&flux, &only_y, [1.0, 0.0]), 0.0);
        assert!(RotatorTerm::new(all, [1.0, 1.0]).is_err());
    }

    #[test]
    fn stationary_cloak_has_zero_gradient() {
        let model = small_model();
        let design = model.initial_design();
        let fwd = Forward::solve(&model, &design).unwrap();
        let term = CloakTerm::new(
            &model.mesh,
            &model.bc,
            fwd.state.temperature.clone(),
            model.design.exterior_nodes(&model.mesh),
        )
        .unwrap();
        let g = grad_cloak(&model, &fwd, &term);
        assert!(g.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn equal_boundary_temperatures_zero_rotator_gradient() {
        let mut model = small_model();
        model.bc = BoundaryConditions::left_right(&model.mesh, 30.0, 30.0);
        let design = model.initial_design();
        let fwd = Forward::solve(&model, &design).unwrap();
        let target = ElementSet::new(&model.mesh, vec![44, 45]).unwrap();
        let term = RotatorTerm::new(target, [1.0, 0.0]).unwrap();
        let g = grad_rotator(&model, &fwd, &term);
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-12));
    }
}
