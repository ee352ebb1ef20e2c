//! Scenario orchestration, energy accounting and comparison studies.

mod compare;
mod energy;
mod metrics;
mod pipeline;
pub mod report;
mod scenario;

pub use compare::{
    compare_architectures, compare_architectures_prepared, compare_resolutions, compare_resolutions_prepared,
    ArchitectureReport, ResolutionReport,
};
pub use energy::{energy_quanta, month_key, quanta_to_wh, YieldSeries, QUANTA_PER_WH};
pub use metrics::{error_metrics, ErrorMetrics};
pub use pipeline::{
    find_mpp, operating_points, simulate_period, simulate_timestep, CellIrradiance, ModuleMode, ModuleRecord,
    OperatingPoints, PeriodRun, PreparedInputs, Simulator, StringRecord, SystemRecord, ThermalState, TimestepCurves,
    TimestepResult,
};
pub use scenario::{
    ArrayConfig, Architecture, AttachmentConfig, AttachmentKind, OpticsConfig, OptimizerConfig, Scenario, Site,
    SolverConfig, ThermalConfig, TopologyConfig,
};
