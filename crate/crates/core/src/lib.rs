//! Cell-resolution photovoltaic system simulation.
//!
//! Per-cell irradiance and module temperature drive a two-diode model of
//! every cell; IV curves are then aggregated through substrings, bypass
//! diodes, modules, optional module-level power electronics, strings and
//! the system to find operating points and energy yield.

pub mod cell;
pub mod curve;
pub mod error;
pub mod hierarchy;
pub mod irradiance;
pub mod mlpe;
pub mod module_db;
pub mod num;
pub mod simulation;
pub mod thermal;

pub use error::{Error, ErrorClass, Result, Stage};
pub use num::Real;

/// Double-precision instantiations used by the simulation pipeline.
pub type IvCurve = curve::IvCurve<f64>;
pub type PowerPoint = curve::PowerPoint<f64>;
pub type ModuleSpec = module_db::ModuleSpec<f64>;
pub type TwoDiodeParams = cell::TwoDiodeParams<f64>;
pub type OperatingDiodeParams = cell::OperatingDiodeParams<f64>;
pub type ThermalParams = thermal::ThermalParams<f64>;
pub type SystemTopology = hierarchy::SystemTopology<f64>;
pub type OptimizerSpec = mlpe::OptimizerSpec<f64>;
pub type IrradianceField = irradiance::IrradianceField<f64>;

/// Single-precision instantiations for memory-bound batch work.
pub mod f32 {
    pub type IvCurve = crate::curve::IvCurve<f32>;
    pub type ModuleSpec = crate::module_db::ModuleSpec<f32>;
    pub type TwoDiodeParams = crate::cell::TwoDiodeParams<f32>;
    pub type ThermalParams = crate::thermal::ThermalParams<f32>;
}
