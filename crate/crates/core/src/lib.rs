//! Two-scale property design of thermal metamaterials.
//!
//! The lower scale is a database of pixelated unit cells with homogenized
//! orthotropic conductivities; the upper scale optimizes a per-element
//! conductivity field for cloaking, concentrating or rotating heat flow and
//! then substitutes the nearest database cell into every element.

pub mod assembly;
pub mod banded;
pub mod database;
pub mod design;
pub mod error;
pub mod fe;
pub mod homogenization;
pub mod mesh;
pub mod objectives;
pub mod optimizer;
pub mod output;
pub mod regions;
pub mod scenario;

pub use assembly::{
    rasterize, substitute, verify_assembled, AssemblyResult, BackgroundCell, Raster,
};
pub use database::{build_database, RveDatabase, RveParams, RveRecord};
pub use design::{DesignField, MacroModel};
pub use error::{Error, Result};
pub use fe::{
    assemble_and_solve, boundary_flux_balance, element_stiffness, heat_flux, HeatFluxField,
    TemperatureField, ThermalState,
};
pub use homogenization::{homogenize, homogenize_orthotropic, EffectiveTensor, PixelCell};
pub use mesh::{BoundaryConditions, DirichletSet, MacroMesh, OrthotropicConductivity, KAPPA_FLOOR};
pub use objectives::{Forward, ObjectiveSpec, ObjectiveValues};
pub use optimizer::{
    optimize, Method, OptimizationProblem, OptimizationResult, OptimizerSettings, Termination,
};
pub use regions::{ElementSet, NodeSet, ProbePoints, Shape};
pub use scenario::{make_scenario, Layout, ScenarioName, ScenarioSetup};
