//! Bilinear-quad finite elements for steady conduction on a [`MacroMesh`].

use crate::banded::{BandCholesky, BandMatrix};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryConditions, MacroMesh, OrthotropicConductivity};

pub type Mat4 = [[f64; 4]; 4];

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Shape-function gradients `[dN/dx; dN/dy]` of the square element of edge
/// `h` at reference point `(xi, eta)` in `[-1, 1]²`.
pub fn gradient_matrix(xi: f64, eta: f64, h: f64) -> [[f64; 4]; 2] {
    let s = 2.0 / h;
    [
        [
            -0.25 * (1.0 - eta) * s,
            0.25 * (1.0 - eta) * s,
            0.25 * (1.0 + eta) * s,
            -0.25 * (1.0 + eta) * s,
        ],
        [
            -0.25 * (1.0 - xi) * s,
            -0.25 * (1.0 + xi) * s,
            0.25 * (1.0 + xi) * s,
            0.25 * (1.0 - xi) * s,
        ],
    ]
}

/// The four 2×2 Gauss points with their weight (including the Jacobian).
pub fn gauss_points(h: f64) -> impl Iterator<Item = (f64, f64, f64)> {
    let w = 0.25 * h * h;
    [
        (-GAUSS, -GAUSS),
        (GAUSS, -GAUSS),
        (GAUSS, GAUSS),
        (-GAUSS, GAUSS),
    ]
    .into_iter()
    .map(move |(xi, eta)| (xi, eta, w))
}

/// Unit-conductivity directional stiffness matrices `(∫ ∂xNᵀ∂xN, ∫ ∂yNᵀ∂yN)`;
/// the element matrix is `k11 · Kx + k22 · Ky`, so these are also `∂K_e/∂k11`
/// and `∂K_e/∂k22`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalStiffness {
    pub kx: Mat4,
    pub ky: Mat4,
}

impl DirectionalStiffness {
    pub fn new(h: f64) -> Self {
        let mut kx = [[0.0; 4]; 4];
        let mut ky = [[0.0; 4]; 4];
        for (xi, eta, w) in gauss_points(h) {
            let b = gradient_matrix(xi, eta, h);
            for a in 0..4 {
                for c in 0..4 {
                    kx[a][c] += w * b[0][a] * b[0][c];
                    ky[a][c] += w * b[1][a] * b[1][c];
                }
            }
        }
        Self { kx, ky }
    }

    #[inline]
    pub fn combine(&self, k: OrthotropicConductivity) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for a in 0..4 {
            for c in 0..4 {
                out[a][c] = k.k11 * self.kx[a][c] + k.k22 * self.ky[a][c];
            }
        }
        out
    }
}

/// Element conduction matrix `∫ Bᵀ κ B` over a square of edge `h`.
pub fn element_stiffness(kappa: OrthotropicConductivity, h: f64) -> Result<Mat4> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "element size must be positive, got {h}"
        )));
    }
    kappa.validate()?;
    Ok(DirectionalStiffness::new(h).combine(kappa))
}

pub(crate) fn check_field(mesh: &MacroMesh, field: &[OrthotropicConductivity]) -> Result<()> {
    if field.len() != mesh.element_count() {
        return Err(Error::InvalidArgument(format!(
            "conductivity field has {} entries, mesh has {} elements",
            field.len(),
            mesh.element_count()
        )));
    }
    for k in field {
        k.validate()?;
    }
    Ok(())
}

/// Nodal temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureField {
    pub values: Vec<f64>,
}

impl TemperatureField {
    pub fn element_values(&self, mesh: &MacroMesh, e: usize) -> [f64; 4] {
        mesh.element_nodes(e).map(|n| self.values[n])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            })
    }
}

/// Element-centroid heat flux vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatFluxField {
    pub values: Vec<[f64; 2]>,
}

/// Free-DOF numbering after eliminating Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    free_of_node: Vec<Option<usize>>,
    prescribed: Vec<Option<f64>>,
    n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &MacroMesh, bc: &BoundaryConditions) -> Result<Self> {
        bc.validate(mesh)?;
        let prescribed = bc.prescribed(mesh);
        let mut free_of_node = vec![None; mesh.node_count()];
        let mut n_free = 0;
        for (slot, p) in free_of_node.iter_mut().zip(&prescribed) {
            if p.is_none() {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        Ok(Self {
            free_of_node,
            prescribed,
            n_free,
        })
    }

    pub fn free_count(&self) -> usize {
        self.n_free
    }

    pub fn free(&self, node: usize) -> Option<usize> {
        self.free_of_node[node]
    }

    pub fn prescribed(&self, node: usize) -> Option<f64> {
        self.prescribed[node]
    }
}

/// Factorized reduced system `K_ff` for one conductivity field, together
/// with the temperatures it produced. Adjoint solves reuse the factor.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub temperature: TemperatureField,
    dofs: DofMap,
    factor: Option<BandCholesky>,
}

impl ThermalState {
    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Solves `K_ff λ_f = g_f` for a right-hand side given per mesh node;
    /// entries at Dirichlet nodes are ignored and returned as zero.
    pub fn adjoint(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; rhs.len()];
        let Some(factor) = &self.factor else {
            return out;
        };
        let mut reduced = vec![0.0; self.dofs.free_count()];
        for (node, &g) in rhs.iter().enumerate() {
            if let Some(f) = self.dofs.free(node) {
                reduced[f] = g;
            }
        }
        factor.solve_in_place(&mut reduced);
        for (node, slot) in out.iter_mut().enumerate() {
            if let Some(f) = self.dofs.free(node) {
                *slot = reduced[f];
            }
        }
        out
    }
}

/// Iterative-refinement passes after the direct solve.
const REFINEMENT_STEPS: usize = 2;

/// Assembles, constrains and solves `K_T T = F_T`.
pub fn solve_state(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    bc: &BoundaryConditions,
) -> Result<ThermalState> {
    check_field(mesh, field)?;
    let dofs = DofMap::new(mesh, bc)?;
    let ops = DirectionalStiffness::new(mesh.h);
    let n_free = dofs.free_count();

    let mut values: Vec<f64> = (0..mesh.node_count())
        .map(|n| dofs.prescribed(n).unwrap_or(0.0))
        .collect();
    if n_free == 0 {
        return Ok(ThermalState {
            temperature: TemperatureField { values },
            dofs,
            factor: None,
        });
    }

    let mut k = BandMatrix::zeros(n_free, mesh.nx + 2);
    let mut rhs = vec![0.0; n_free];
    for e in 0..mesh.element_count() {
        let ke = ops.combine(field[e].floored());
        let nodes = mesh.element_nodes(e);
        for a in 0..4 {
            let Some(fa) = dofs.free(nodes[a]) else {
                continue;
            };
            for c in 0..4 {
                match dofs.free(nodes[c]) {
                    Some(fc) if fc <= fa => k.add(fa, fc, ke[a][c]),
                    Some(_) => {}
                    None => rhs[fa] -= ke[a][c] * dofs.prescribed(nodes[c]).unwrap_or(0.0),
                }
            }
        }
    }
    let matrix = k.clone();
    let factor = k.factor()?;
    let mut t = rhs.clone();
    factor.solve_in_place(&mut t);
    for _ in 0..REFINEMENT_STEPS {
        let mut d = matrix.residual(&t, &rhs);
        factor.solve_in_place(&mut d);
        for (ti, di) in t.iter_mut().zip(&d) {
            *ti += di;
        }
    }
    for (node, v) in values.iter_mut().enumerate() {
        if let Some(f) = dofs.free(node) {
            *v = t[f];
        }
    }
    Ok(ThermalState {
        temperature: TemperatureField { values },
        dofs,
        factor: Some(factor),
    })
}

pub fn assemble_and_solve(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    bc: &BoundaryConditions,
) -> Result<TemperatureField> {
    Ok(solve_state(mesh, field, bc)?.temperature)
}

/// Matrix-free product `K_T · T` over the full (unconstrained) node set.
pub fn apply_stiffness(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    temperature: &[f64],
) -> Vec<f64> {
    let ops = DirectionalStiffness::new(mesh.h);
    let mut out = vec![0.0; mesh.node_count()];
    for e in 0..mesh.element_count() {
        let ke = ops.combine(field[e].floored());
        let nodes = mesh.element_nodes(e);
        for a in 0..4 {
            out[nodes[a]] += (0..4)
                .map(|c| ke[a][c] * temperature[nodes[c]])
                .sum::<f64>();
        }
    }
    out
}

/// `(‖r_f‖, ‖F_f‖)`: residual and load norms of the reduced system, where
/// `F_f = −K_fd T_d`.
pub fn residual_norms(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    bc: &BoundaryConditions,
    temperature: &TemperatureField,
) -> Result<(f64, f64)> {
    let dofs = DofMap::new(mesh, bc)?;
    let full = apply_stiffness(mesh, field, &temperature.values);
    let lifted: Vec<f64> = (0..mesh.node_count())
        .map(|n| dofs.prescribed(n).unwrap_or(0.0))
        .collect();
    let load = apply_stiffness(mesh, field, &lifted);
    let mut r2 = 0.0;
    let mut f2 = 0.0;
    for n in 0..mesh.node_count() {
        if dofs.free(n).is_some() {
            r2 += full[n] * full[n];
            f2 += load[n] * load[n];
        }
    }
    Ok((r2.sqrt(), f2.sqrt()))
}

/// `−κ_e B(centroid) T_e` for every element.
pub fn heat_flux(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    temperature: &TemperatureField,
) -> Result<HeatFluxField> {
    check_field(mesh, field)?;
    if temperature.values.len() != mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "temperature field has {} values, mesh has {} nodes",
            temperature.values.len(),
            mesh.node_count()
        )));
    }
    let b = gradient_matrix(0.0, 0.0, mesh.h);
    let values = (0..mesh.element_count())
        .map(|e| {
            let te = temperature.element_values(mesh, e);
            let g = centroid_gradient(&b, &te);
            let k = field[e];
            [-k.k11 * g[0], -k.k22 * g[1]]
        })
        .collect();
    Ok(HeatFluxField { values })
}

#[inline]
pub(crate) fn centroid_gradient(b: &[[f64; 4]; 2], te: &[f64; 4]) -> [f64; 2] {
    [
        (0..4).map(|a| b[0][a] * te[a]).sum(),
        (0..4).map(|a| b[1][a] * te[a]).sum(),
    ]
}

/// Heat entering through the hot set and leaving through the cold set,
/// computed as Dirichlet reaction sums.
pub fn boundary_flux_balance(
    mesh: &MacroMesh,
    field: &[OrthotropicConductivity],
    temperature: &TemperatureField,
    bc: &BoundaryConditions,
) -> Result<(f64, f64)> {
    check_field(mesh, field)?;
    bc.validate(mesh)?;
    let reactions = apply_stiffness(mesh, field, &temperature.values);
    let sum = |set: Option<&crate::mesh::DirichletSet>| -> f64 {
        set.map(|s| s.nodes.iter().map(|&n| reactions[n]).sum())
            .unwrap_or(0.0)
    };
    let inflow = sum(bc.hot());
    let outflow = -sum(bc.cold());
    Ok((inflow, outflow))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(mesh: &MacroMesh, k: f64) -> Vec<OrthotropicConductivity> {
        vec![OrthotropicConductivity::isotropic(k); mesh.element_count()]
    }

    #[test]
    fn unit_element_matrix_closed_form() {
        // Symbolic integration of bilinear shape functions on the unit square.
        let k = element_stiffness(OrthotropicConductivity::isotropic(1.0), 1.0).unwrap();
        for a in 0..4 {
            assert!((k[a][a] - 2.0 / 3.0).abs() < 1e-15);
            assert!((k[a][(a + 1) % 4] + 1.0 / 6.0).abs() < 1e-15);
            assert!((k[a][(a + 3) % 4] + 1.0 / 6.0).abs() < 1e-15);
            assert!((k[a][(a + 2) % 4] + 1.0 / 3.0).abs() < 1e-15);
            let row: f64 = k[a].iter().sum();
            assert!(row.abs() < 1e-15);
            for c in 0..4 {
                assert_eq!(k[a][c], k[c][a]);
            }
        }
    }

    #[test]
    fn zero_and_linear_conductivity() {
        let zero = element_stiffness(OrthotropicConductivity::isotropic(0.0), 1.0).unwrap();
        assert!(zero.iter().flatten().all(|&v| v == 0.0));
        let c = 0.37;
        let one = element_stiffness(OrthotropicConductivity::isotropic(c), 2.0).unwrap();
        let two = element_stiffness(OrthotropicConductivity::isotropic(2.0 * c), 2.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(two[a][b], 2.0 * one[a][b]);
            }
        }
    }

    #[test]
    fn negative_conductivity_rejected() {
        let err = element_stiffness(OrthotropicConductivity::new(-0.1, 1.0), 1.0);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_element_fully_constrained() {
        let mesh = MacroMesh::unit(1, 1);
        let bc = BoundaryConditions::left_right(&mesh, 100.0, 0.0);
        let field = uniform(&mesh, 1.0);
        let t = assemble_and_solve(&mesh, &field, &bc).unwrap();
        assert_eq!(t.values, vec![100.0, 0.0, 100.0, 0.0]);
        let (r, _) = residual_norms(&mesh, &field, &bc, &t).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn linear_profile_on_desk_mesh() {
        let mesh = MacroMesh::unit(75, 50);
        let bc = BoundaryConditions::left_right(&mesh, 100.0, 0.0);
        let field = uniform(&mesh, 0.3162);
        let t = assemble_and_solve(&mesh, &field, &bc).unwrap();
        for n in 0..mesh.node_count() {
            let (x, _) = mesh.node_coords(n);
            assert!((t.values[n] - 100.0 * (1.0 - x / 75.0)).abs() < 1e-9);
        }
        let flux = heat_flux(&mesh, &field, &t).unwrap();
        for f in &flux.values {
            assert!((f[0] - 0.3162 * 4.0 / 3.0).abs() < 1e-9);
            assert!(f[1].abs() < 1e-9);
        }
        let (inflow, outflow) = boundary_flux_balance(&mesh, &field, &t, &bc).unwrap();
        assert!((inflow - 0.3162 * (100.0 / 75.0) * 50.0).abs() < 1e-6);
        assert!((inflow - outflow).abs() / inflow < 1e-8);
    }

    #[test]
    fn orthotropic_blocking_and_constant_field() {
        let mesh = MacroMesh::unit(4, 3);
        let field = vec![OrthotropicConductivity::new(0.0, 0.7); mesh.element_count()];
        let linear = TemperatureField {
            values: (0..mesh.node_count())
                .map(|n| 10.0 - 2.0 * mesh.node_coords(n).0)
                .collect(),
        };
        let flux = heat_flux(&mesh, &field, &linear).unwrap();
        assert!(flux.values.iter().all(|f| f[0] == 0.0 && f[1] == 0.0));

        let constant = TemperatureField {
            values: vec![42.0; mesh.node_count()],
        };
        let flux = heat_flux(&mesh, &uniform(&mesh, 0.5), &constant).unwrap();
        assert!(flux
            .values
            .iter()
            .all(|f| f[0].abs() < 1e-12 && f[1].abs() < 1e-12));
    }

    #[test]
    fn equal_boundary_temperatures_give_no_flow() {
        let mesh = MacroMesh::unit(6, 4);
        let bc = BoundaryConditions::left_right(&mesh, 20.0, 20.0);
        let field = uniform(&mesh, 0.4);
        let t = assemble_and_solve(&mesh, &field, &bc).unwrap();
        let (inflow, outflow) = boundary_flux_balance(&mesh, &field, &t, &bc).unwrap();
        assert!(inflow.abs() < 1e-12 && outflow.abs() < 1e-12);
    }

    #[test]
    fn field_length_mismatch() {
        let mesh = MacroMesh::unit(3, 3);
        let bc = BoundaryConditions::left_right(&mesh, 1.0, 0.0);
        let field = vec![OrthotropicConductivity::isotropic(1.0); 2];
        assert!(assemble_and_solve(&mesh, &field, &bc).is_err());
    }
}
