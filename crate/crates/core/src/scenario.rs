//! The ten preconfigured case studies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{DesignField, MacroModel, KAPPA_MAX, KAPPA_MIN};
use crate::error::{Error, Result};
use crate::fe::{self, TemperatureField};
use crate::mesh::{BoundaryConditions, MacroMesh, OrthotropicConductivity, KAPPA_FLOOR};
use crate::objectives::{
    CloakTerm, ConcentratorTerm, ObjectiveSpec, RotatorTerm, WeightedObjective, WeightedTerm,
};
use crate::optimizer::{OptimizationProblem, OptimizerSettings};
use crate::regions::{ElementSet, ProbePoints, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    CloakUniform,
    CloakNonuniform,
    CloakEverywhere,
    ConcUniform,
    ConcNonuniform,
    ConcHole,
    RotUniform,
    RotWeakInclusion,
    MultiCloakConc,
    MultiCloakRot,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 10] = [
        ScenarioName::CloakUniform,
        ScenarioName::CloakNonuniform,
        ScenarioName::CloakEverywhere,
        ScenarioName::ConcUniform,
        ScenarioName::ConcNonuniform,
        ScenarioName::ConcHole,
        ScenarioName::RotUniform,
        ScenarioName::RotWeakInclusion,
        ScenarioName::MultiCloakConc,
        ScenarioName::MultiCloakRot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::CloakUniform => "cloak-uniform",
            ScenarioName::CloakNonuniform => "cloak-nonuniform",
            ScenarioName::CloakEverywhere => "cloak-everywhere",
            ScenarioName::ConcUniform => "conc-uniform",
            ScenarioName::ConcNonuniform => "conc-nonuniform",
            ScenarioName::ConcHole => "conc-hole",
            ScenarioName::RotUniform => "rot-uniform",
            ScenarioName::RotWeakInclusion => "rot-weak-inclusion",
            ScenarioName::MultiCloakConc => "multi-cloak-conc",
            ScenarioName::MultiCloakRot => "multi-cloak-rot",
        }
    }

    pub fn layout(self) -> Layout {
        use Core::{Hole, Inclusion, Open};
        use ScenarioName as S;
        let (nonuniform_hot, core, disk_design, goal) = match self {
            S::CloakUniform => (false, Hole, false, Goal::CloakExterior),
            S::CloakNonuniform => (true, Hole, false, Goal::CloakExterior),
            S::CloakEverywhere => (true, Hole, false, Goal::CloakEverywhere),
            S::ConcUniform => (false, Open, true, Goal::Concentrator),
            S::ConcNonuniform => (true, Open, true, Goal::Concentrator),
            S::ConcHole => (false, Hole, false, Goal::Concentrator),
            S::RotUniform => (false, Open, false, Goal::Rotator),
            S::RotWeakInclusion => (false, Inclusion, false, Goal::Rotator),
            S::MultiCloakConc => (false, Inclusion, false, Goal::Weighted([1.5, 0.5, 0.0])),
            S::MultiCloakRot => (false, Inclusion, false, Goal::Weighted([1.5, 0.0, 5.0])),
        };
        Layout {
            nonuniform_hot,
            core,
            disk_design,
            goal,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario {
                name: s.to_string(),
                valid: Self::ALL.map(|n| n.as_str()).join(", "),
            })
    }
}

/// What sits inside the inner radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Core {
    /// Matrix material.
    Open,
    /// Insulating hole at the conductivity floor.
    Hole,
    /// Weak isotropic inclusion.
    Inclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Goal {
    CloakExterior,
    CloakEverywhere,
    Concentrator,
    Rotator,
    /// Weights `(cloak, concentrator, rotator)`.
    Weighted([f64; 3]),
}

/// Structural description of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    /// Hot source on a centered left-edge segment instead of the full edge.
    pub nonuniform_hot: bool,
    pub core: Core,
    /// Design domain is the full outer disk rather than the ring.
    pub disk_design: bool,
    pub goal: Goal,
}

/// Geometry and material knobs shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSetup {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub t_hot: f64,
    pub t_cold: f64,
    pub center: [f64; 2],
    pub r_in: f64,
    pub r_out: f64,
    /// Rotator target size in elements, centered in the mesh.
    pub target: [usize; 2],
    pub direction: [f64; 2],
    /// `y` range of the non-uniform hot source.
    pub hot_segment: [f64; 2],
    pub matrix_kappa: f64,
    pub inclusion_kappa: f64,
    /// Explicit probe `x` positions on the center row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_x: Option<[f64; 4]>,
}

impl Default for ScenarioSetup {
    fn default() -> Self {
        Self {
            nx: 75,
            ny: 50,
            h: 1.0,
            t_hot: 100.0,
            t_cold: 0.0,
            center: [37.5, 25.0],
            r_in: 15.0,
            r_out: 20.0,
            target: [20, 4],
            direction: [1.0, 0.0],
            hot_segment: [20.0, 30.0],
            matrix_kappa: 0.3162,
            inclusion_kappa: 0.0316,
            probe_x: None,
        }
    }
}

/// Regions derived from a setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRegions {
    pub ring: ElementSet,
    pub core: ElementSet,
    pub target: ElementSet,
    pub probes: ProbePoints,
}

impl ScenarioSetup {
    /// Default geometry scaled onto an `nx × ny` unit mesh.
    pub fn for_mesh(nx: usize, ny: usize) -> Self {
        let d = Self::default();
        let s = (ny as f64 / d.ny as f64).min(0.45 * nx as f64 / d.r_out);
        let scale_len = |v: usize, num: usize, den: usize| {
            ((v * num) as f64 / den as f64).round().max(1.0) as usize
        };
        let cy = ny as f64 / 2.0;
        let half = (d.hot_segment[1] - d.hot_segment[0]) / 2.0 * s;
        Self {
            nx,
            ny,
            center: [nx as f64 / 2.0, cy],
            r_in: d.r_in * s,
            r_out: d.r_out * s,
            target: [
                scale_len(d.target[0], nx, d.nx),
                scale_len(d.target[1], ny, d.ny),
            ],
            hot_segment: [cy - half, cy + half],
            ..d
        }
    }

    pub fn mesh(&self) -> Result<MacroMesh> {
        MacroMesh::new(self.nx, self.ny, self.h)
    }

    pub fn boundary(&self, mesh: &MacroMesh, nonuniform_hot: bool) -> BoundaryConditions {
        let hot = if nonuniform_hot {
            mesh.left_segment(self.hot_segment[0], self.hot_segment[1])
        } else {
            mesh.left_edge()
        };
        BoundaryConditions::hot_cold(hot, self.t_hot, mesh.right_edge(), self.t_cold)
    }

    pub fn regions(&self, mesh: &MacroMesh) -> Result<ScenarioRegions> {
        if !(self.r_in > 0.0 && self.r_out > self.r_in) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < r_in < r_out, got {} and {}",
                self.r_in, self.r_out
            )));
        }
        let ring = ElementSet::from_shape(
            mesh,
            &Shape::Ring {
                center: self.center,
                r_in: self.r_in,
                r_out: self.r_out,
            },
        );
        let core = ElementSet::from_shape(
            mesh,
            &Shape::Disk {
                center: self.center,
                radius: self.r_in,
            },
        );
        let target = ElementSet::from_shape(
            mesh,
            &Shape::centered_rect(mesh, self.target[0], self.target[1]),
        );
        let probes = match self.probe_x {
            Some(xs) => ProbePoints::on_row(mesh, self.center[1], xs)?,
            None => ProbePoints::centerline(mesh, self.center, self.r_in, self.r_out)?,
        };
        Ok(ScenarioRegions {
            ring,
            core,
            target,
            probes,
        })
    }

    /// Temperature of the plain matrix block under the given boundary data.
    pub fn reference_field(
        &self,
        mesh: &MacroMesh,
        bc: &BoundaryConditions,
    ) -> Result<TemperatureField> {
        let field =
            vec![OrthotropicConductivity::isotropic(self.matrix_kappa); mesh.element_count()];
        fe::assemble_and_solve(mesh, &field, bc)
    }

    pub fn build(
        &self,
        name: ScenarioName,
        settings: OptimizerSettings,
    ) -> Result<OptimizationProblem> {
        self.build_layout(name.layout(), settings)
    }

    pub fn build_layout(
        &self,
        layout: Layout,
        settings: OptimizerSettings,
    ) -> Result<OptimizationProblem> {
        let mesh = self.mesh()?;
        let bc = self.boundary(&mesh, layout.nonuniform_hot);
        let regions = self.regions(&mesh)?;
        let matrix = OrthotropicConductivity::isotropic(self.matrix_kappa);

        let mut base = vec![matrix; mesh.element_count()];
        let core_kappa = match layout.core {
            Core::Open => None,
            Core::Hole => Some(KAPPA_FLOOR),
            Core::Inclusion => Some(self.inclusion_kappa),
        };
        if let Some(k) = core_kappa {
            for &e in regions.core.as_slice() {
                base[e] = OrthotropicConductivity::isotropic(k);
            }
        }
        let design = if layout.disk_design {
            regions.ring.union(&regions.core)
        } else {
            regions.ring.clone()
        };
        let model = MacroModel::new(mesh.clone(), bc.clone(), base, design.clone())?;

        let cloak = |everywhere: bool| -> Result<CloakTerm> {
            let reference = self.reference_field(&mesh, &bc)?;
            let query = if everywhere {
                regions.core.exterior_nodes(&mesh)
            } else {
                design.union(&regions.core).exterior_nodes(&mesh)
            };
            CloakTerm::new(&mesh, &bc, reference, query)
        };
        let concentrator = || ConcentratorTerm {
            probes: regions.probes,
        };
        let rotator = || RotatorTerm::new(regions.target.clone(), self.direction);

        let objective = match layout.goal {
            Goal::CloakExterior => ObjectiveSpec::Cloak(cloak(false)?),
            Goal::CloakEverywhere => ObjectiveSpec::Cloak(cloak(true)?),
            Goal::Concentrator => ObjectiveSpec::Concentrator(concentrator()),
            Goal::Rotator => ObjectiveSpec::Rotator(rotator()?),
            Goal::Weighted([ck, ct, ri]) => {
                let w = WeightedObjective {
                    cloak: Some(WeightedTerm::new(ck, cloak(false)?)),
                    concentrator: Some(WeightedTerm::new(ct, concentrator())),
                    rotator: Some(WeightedTerm::new(ri, rotator()?)),
                };
                w.validate()?;
                ObjectiveSpec::Weighted(w)
            }
        };

        let initial = DesignField::new(vec![matrix; model.design_len()], KAPPA_MIN, KAPPA_MAX);
        Ok(OptimizationProblem {
            model,
            objective,
            initial,
            settings,
        })
    }
}

/// Scenario with default geometry and optimizer settings.
pub fn make_scenario(name: &str) -> Result<OptimizationProblem> {
    ScenarioSetup::default().build(name.parse()?, OptimizerSettings::default())
}
