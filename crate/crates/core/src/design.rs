//! Macro models with a design domain, and the design variables on it.

use crate::error::{Error, Result};
use crate::fe::{self, ThermalState};
use crate::mesh::{BoundaryConditions, MacroMesh, OrthotropicConductivity, KAPPA_FLOOR};
use crate::regions::ElementSet;

/// Smallest attainable conductivity component of the database.
pub const KAPPA_MIN: f64 = KAPPA_FLOOR;
/// Largest attainable component (fully solid cell).
pub const KAPPA_MAX: f64 = 1.0;

/// Mesh, boundary data, fixed conductivities and the design domain.
///
/// `base` holds the conductivity of every element; entries inside the
/// design domain are overwritten by the design variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroModel {
    pub mesh: MacroMesh,
    pub bc: BoundaryConditions,
    pub base: Vec<OrthotropicConductivity>,
    pub design: ElementSet,
}

impl MacroModel {
    pub fn new(
        mesh: MacroMesh,
        bc: BoundaryConditions,
        base: Vec<OrthotropicConductivity>,
        design: ElementSet,
    ) -> Result<Self> {
        fe::check_field(&mesh, &base)?;
        bc.validate(&mesh)?;
        if design.is_empty() {
            return Err(Error::Empty("design domain"));
        }
        if design.as_slice().iter().any(|&e| e >= mesh.element_count()) {
            return Err(Error::InvalidArgument("design element outside mesh".into()));
        }
        Ok(Self {
            mesh,
            bc,
            base,
            design,
        })
    }

    pub fn design_len(&self) -> usize {
        self.design.len()
    }

    /// Full conductivity field with the design values inserted.
    pub fn field(&self, design: &DesignField) -> Vec<OrthotropicConductivity> {
        assert_eq!(
            design.values.len(),
            self.design.len(),
            "design size mismatch"
        );
        let mut field = self.base.clone();
        for (&e, &k) in self.design.as_slice().iter().zip(&design.values) {
            field[e] = k;
        }
        field
    }

    pub fn solve(&self, design: &DesignField) -> Result<ThermalState> {
        fe::solve_state(&self.mesh, &self.field(design), &self.bc)
    }

    /// The design variables currently stored in `base`.
    pub fn initial_design(&self) -> DesignField {
        DesignField::new(
            self.design
                .as_slice()
                .iter()
                .map(|&e| self.base[e])
                .collect(),
            KAPPA_MIN,
            KAPPA_MAX,
        )
    }
}

/// Per-design-element conductivity pairs with box bounds per component.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    pub values: Vec<OrthotropicConductivity>,
    pub lower: f64,
    pub upper: f64,
}

impl DesignField {
    pub fn new(values: Vec<OrthotropicConductivity>, lower: f64, upper: f64) -> Self {
        Self {
            values,
            lower,
            upper,
        }
    }

    pub fn uniform(len: usize, k: OrthotropicConductivity) -> Self {
        Self::new(vec![k; len], KAPPA_MIN, KAPPA_MAX)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn project(&mut self) {
        for k in &mut self.values {
            k.k11 = k.k11.clamp(self.lower, self.upper);
            k.k22 = k.k22.clamp(self.lower, self.upper);
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.values.iter().all(|k| {
            (self.lower..=self.upper).contains(&k.k11) && (self.lower..=self.upper).contains(&k.k22)
        })
    }

    /// Interleaved `[k11_0, k22_0, k11_1, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|k| [k.k11, k.k22]).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), 2 * self.values.len());
        for (k, pair) in self.values.iter_mut().zip(flat.chunks_exact(2)) {
            k.k11 = pair[0];
            k.k22 = pair[1];
        }
    }

    pub fn component_range(&self) -> ((f64, f64), (f64, f64)) {
        let fold = |get: fn(&OrthotropicConductivity) -> f64| {
            self.values
                .iter()
                .map(get)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        (fold(|k| k.k11), fold(|k| k.k22))
    }
}
