//! Per-timestep pipeline: irradiance, temperature, cell curves, hierarchy,
//! module-level electronics and operating points.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;

use crate::cell::{calibrate_two_diode, cell_iv_curve, operating_params, CellCurveOptions, TwoDiodeParams};
use crate::curve::{CurveLevel, IvCurve, PowerPoint};
use crate::error::{Error, Result, Stage};
use crate::hierarchy::{current_grid, system_curve, BypassState, MlpeAttachment, ModuleContext, SystemTopology};
use crate::irradiance::{
    aggregate_resolution, compose_sky_radiance, effective_irradiance, plane_irradiance, solar_position, ArrayLayout,
    IrradianceField, IrradianceOverrides, Resolution, ShadingScene, SkyPatches, SunPosition, WeatherRecord,
    WeatherSeries,
};
use crate::mlpe::{optimized_voltages, optimizer_output, Mode, OptimizerSpec};
use crate::module_db::{ModuleDb, ModuleSpec};
use crate::thermal::{ThermalEnv, ThermalModel, KELVIN};

use super::energy::{energy_quanta, quanta_to_wh, YieldSeries};
use super::scenario::{Architecture, Scenario};

/// Global maximum of `v i` over the curve, lowest voltage on ties.
pub fn find_mpp(curve: &IvCurve<f64>) -> PowerPoint<f64> {
    curve.max_power_point()
}

/// What sits between a module and its string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleMode {
    /// Plain series connection.
    Passive,
    Buck,
    Conductive,
    Microinverter,
}

impl ModuleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleMode::Passive => "passive",
            ModuleMode::Buck => "buck",
            ModuleMode::Conductive => "conductive",
            ModuleMode::Microinverter => "microinverter",
        }
    }
}

impl From<Mode> for ModuleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Buck => ModuleMode::Buck,
            Mode::Conductive => ModuleMode::Conductive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleRecord {
    /// Terminal (or optimizer output) operating point.
    pub v: f64,
    pub i: f64,
    pub p: f64,
    /// The module's own maximum power.
    pub mpp_p: f64,
    pub bypass: BypassState,
    pub mode: ModuleMode,
    pub demand_infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StringRecord {
    pub v: f64,
    pub i: f64,
    pub p: f64,
    /// Maximum power of the string curve.
    pub mpp_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemRecord {
    /// Common DC voltage; only defined for a central inverter.
    pub v: Option<f64>,
    pub i: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepResult {
    pub timestamp: DateTime<Utc>,
    pub architecture: Architecture,
    pub resolution: Resolution,
    pub system: SystemRecord,
    pub strings: Vec<StringRecord>,
    pub modules: Vec<ModuleRecord>,
    /// Per-cell effective irradiance fed to the electrical stage.
    pub e_eff: Vec<f64>,
    /// Per-cell temperature, K.
    pub tc: Vec<f64>,
    /// Energy over the timestep, Wh.
    pub y_inst: f64,
}

impl TimestepResult {
    pub fn bypass_count(&self) -> usize {
        self.modules.iter().map(|m| m.bypass.active_count()).sum()
    }
}

/// Module temperatures carried from one timestep to the next, K.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub module_tc: Vec<f64>,
}

/// Per-cell irradiance of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIrradiance {
    pub sun: SunPosition<f64>,
    /// Angle of incidence on the array plane, degrees.
    pub incidence: f64,
    /// Blocked beam fraction per cell.
    pub shade: Vec<f64>,
    pub field: IrradianceField<f64>,
}

impl CellIrradiance {
    pub fn is_shaded(&self) -> bool {
        self.shade.iter().any(|&s| s > 0.0) && self.field.e_direct.iter().any(|&e| e > 0.0)
    }
}

/// Inputs shared by every electrical run over one weather series.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub timestamps: Vec<DateTime<Utc>>,
    pub step_seconds: f64,
    pub irradiance: Vec<CellIrradiance>,
    pub module_tc: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PeriodRun {
    pub results: Vec<TimestepResult>,
    pub yields: YieldSeries,
}

/// Every curve of one timestep, for inspection and export.
#[derive(Debug, Clone)]
pub struct TimestepCurves {
    pub grid: Vec<f64>,
    pub cells: Vec<IvCurve<f64>>,
    pub substrings: Vec<IvCurve<f64>>,
    pub modules: Vec<ModuleContext<f64>>,
    /// Optimizer output curves, for modules that carry one.
    pub optimized: Vec<Option<IvCurve<f64>>>,
    pub strings: Vec<Option<IvCurve<f64>>>,
    pub system: Option<IvCurve<f64>>,
    pub result: TimestepResult,
}

/// String-level operating points.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoints {
    pub v_system: Option<f64>,
    /// Current of each string, in input order.
    pub string_currents: Vec<f64>,
}

/// Chooses each string's current under the given inverter arrangement.
///
/// A central inverter tracks the MPP of the parallel connection and every
/// string runs at the common voltage; otherwise each string sits at its own
/// MPP.
pub fn operating_points(architecture: Architecture, string_curves: &[IvCurve<f64>]) -> Result<OperatingPoints> {
    if string_curves.is_empty() {
        return Ok(OperatingPoints { v_system: None, string_currents: Vec::new() });
    }
    match architecture {
        Architecture::CentralInverter if string_curves.len() > 1 => {
            let sys = system_curve(string_curves)?;
            let mpp = find_mpp(&sys);
            Ok(OperatingPoints {
                v_system: Some(mpp.v),
                string_currents: string_curves.iter().map(|c| c.current_at(mpp.v)).collect(),
            })
        }
        Architecture::CentralInverter => {
            let mpp = find_mpp(&string_curves[0]);
            Ok(OperatingPoints { v_system: Some(mpp.v), string_currents: vec![mpp.i] })
        }
        _ => Ok(OperatingPoints {
            v_system: None,
            string_currents: string_curves.iter().map(|c| find_mpp(c).i).collect(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Attach {
    Passive,
    Optimizer,
    Micro,
}

/// Scenario with every derived object prepared once.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    spec: ModuleSpec<f64>,
    params: TwoDiodeParams<f64>,
    topology: SystemTopology<f64>,
    layout: ArrayLayout,
    scene: ShadingScene,
    patches: SkyPatches<f64>,
    diffuse_dc: Vec<Vec<f64>>,
    diffuse_tsr: Vec<Vec<f64>>,
    thermal: ThermalModel<f64>,
    optimizer: OptimizerSpec<f64>,
    curve_options: CellCurveOptions<f64>,
    overrides: IrradianceOverrides,
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_db(scenario, &ModuleDb::bundled())
    }

    pub fn with_db(scenario: &Scenario, db: &ModuleDb) -> Result<Self> {
        scenario.validate_basic()?;
        let spec = scenario.module_spec(db)?;
        let topology = scenario.topology(&spec)?;
        let layout = scenario.layout(&spec)?;
        let scene = scenario.scene(&layout, topology.total_modules())?;
        if scene.sensor_positions.len() != topology.total_cells() {
            return Err(Error::TopologyMismatch(format!(
                "{} sensor points for {} cells",
                scene.sensor_positions.len(),
                topology.total_cells()
            )));
        }
        let params = calibrate_two_diode(&spec).map_err(|e| e.in_stage(Stage::Cell))?;
        let patches = SkyPatches::new(scenario.optics.sky_patches)?;
        let diffuse_dc = vec![patches.plane_coefficients(layout.plane.normal())];
        let diffuse_tsr = vec![vec![scenario.optics.diffuse_obstruction; patches.len()]];
        let thermal = ThermalModel::new(scenario.thermal.params())?;
        let voc_cell = spec.voc_stc / spec.cells_in_series as f64;
        let curve_options = CellCurveOptions {
            n_points: scenario.solver.cell_curve_points,
            reverse_voltage: spec.cells_per_substring() as f64 * voc_cell + topology.bypass_vf,
        };
        Ok(Self {
            optimizer: scenario.optimizer.spec(),
            scenario: scenario.clone(),
            spec,
            params,
            topology,
            layout,
            scene,
            patches,
            diffuse_dc,
            diffuse_tsr,
            thermal,
            curve_options,
            overrides: IrradianceOverrides::default(),
        })
    }

    /// Replaces computed e_eff values by externally supplied ones.
    pub fn with_overrides(mut self, overrides: IrradianceOverrides) -> Result<Self> {
        if let Some(max) = overrides.max_cell_index() {
            if max >= self.topology.total_cells() {
                return Err(Error::TopologyMismatch(format!(
                    "override for cell {max} but the system has {} cells",
                    self.topology.total_cells()
                )));
            }
        }
        self.overrides = overrides;
        Ok(self)
    }

    /// Copy with every explicit MLPE attachment removed.
    pub fn without_attachments(&self) -> Self {
        let mut s = self.clone();
        s.topology.mlpe.clear();
        s.scenario.attachments.clear();
        s
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn spec(&self) -> &ModuleSpec<f64> {
        &self.spec
    }

    pub fn params(&self) -> &TwoDiodeParams<f64> {
        &self.params
    }

    pub fn topology(&self) -> &SystemTopology<f64> {
        &self.topology
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.layout
    }

    pub fn scene(&self) -> &ShadingScene {
        &self.scene
    }

    pub fn optimizer(&self) -> &OptimizerSpec<f64> {
        &self.optimizer
    }

    /// Per-cell irradiance from one weather record.
    pub fn irradiance(&self, rec: &WeatherRecord) -> Result<CellIrradiance> {
        let n = self.topology.total_cells();
        let sun = solar_position(&rec.timestamp, self.scenario.site.latitude, self.scenario.site.longitude);
        let incidence = self.layout.plane.incidence(&sun);
        let a_r = self.scenario.optics.angular_loss;

        let sky = compose_sky_radiance(rec.dni, rec.dhi, sun, &self.patches);
        let (_, diffuse) = plane_irradiance(&self.diffuse_dc, &self.diffuse_tsr, &sky)
            .map_err(|e| e.in_stage(Stage::Irradiance))?;
        let e_diffuse = diffuse[0];

        let beam = if sun.is_up() && incidence < 90.0 { rec.dni * incidence.to_radians().cos() } else { 0.0 };
        let shade = if beam > 0.0 { self.scene.shade(&sun) } else { vec![0.0; n] };
        let e_direct: Vec<f64> = shade.iter().map(|&s| beam * (1.0 - s)).collect();
        let mut e_eff: Vec<f64> =
            e_direct.iter().map(|&ed| effective_irradiance(ed, e_diffuse, incidence.min(90.0), a_r)).collect();
        if let Some(over) = self.overrides.get(&rec.timestamp) {
            for &(c, e) in over {
                e_eff[c] = e;
            }
        }
        Ok(CellIrradiance {
            sun,
            incidence,
            shade,
            field: IrradianceField {
                e_direct,
                e_diffuse: vec![e_diffuse; n],
                e_eff,
                resolution: Resolution::Cell,
            },
        })
    }

    /// Mean cell-level e_eff of every module.
    pub fn module_irradiance(&self, field: &IrradianceField<f64>) -> Vec<f64> {
        let per = self.topology.cells_per_module();
        field.e_eff.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect()
    }

    /// Advances module temperatures; without a previous state every module
    /// starts at air temperature.
    pub fn thermal_step(
        &self,
        prev: Option<&ThermalState>,
        rec: &WeatherRecord,
        module_e: &[f64],
        dt_s: f64,
    ) -> Result<ThermalState> {
        let ta = rec.temp_air + KELVIN;
        let Some(prev) = prev else {
            return Ok(ThermalState { module_tc: vec![ta; module_e.len()] });
        };
        if prev.module_tc.len() != module_e.len() {
            return Err(Error::TopologyMismatch("thermal state does not match module count".into()));
        }
        let module_tc = prev
            .module_tc
            .iter()
            .zip(module_e)
            .map(|(&tc, &e)| {
                let env = ThermalEnv { e_eff: e, temp_air: ta, wind_speed: rec.wind_speed };
                self.thermal.step(tc, &env, dt_s)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage(Stage::Thermal))?;
        Ok(ThermalState { module_tc })
    }

    /// One full pipeline step.
    pub fn simulate_timestep(
        &self,
        rec: &WeatherRecord,
        prev: Option<&ThermalState>,
        dt_s: f64,
        architecture: Architecture,
        resolution: Resolution,
    ) -> Result<(TimestepResult, ThermalState)> {
        let irr = self.irradiance(rec)?;
        let state = self.thermal_step(prev, rec, &self.module_irradiance(&irr.field), dt_s)?;
        let field = aggregate_resolution(&irr.field, resolution, &self.topology)?;
        let result = self.electrical(rec.timestamp, &field, &state.module_tc, architecture, dt_s)?;
        Ok((result, state))
    }

    /// Irradiance for every record (in parallel) and the sequential thermal chain.
    pub fn prepare(&self, weather: &WeatherSeries) -> Result<PreparedInputs> {
        let records = weather.records();
        let dt = weather.step_seconds();
        let irradiance: Vec<CellIrradiance> =
            records.par_iter().map(|r| self.irradiance(r)).collect::<Result<Vec<_>>>()?;
        let mut module_tc = Vec::with_capacity(records.len());
        let mut state: Option<ThermalState> = None;
        for (rec, irr) in records.iter().zip(&irradiance) {
            let next = self.thermal_step(state.as_ref(), rec, &self.module_irradiance(&irr.field), dt)?;
            module_tc.push(next.module_tc.clone());
            state = Some(next);
        }
        Ok(PreparedInputs {
            timestamps: records.iter().map(|r| r.timestamp).collect(),
            step_seconds: dt,
            irradiance,
            module_tc,
        })
    }

    /// Electrical runs over prepared inputs; timesteps are solved in parallel.
    pub fn run_prepared(
        &self,
        inputs: &PreparedInputs,
        architecture: Architecture,
        resolution: Resolution,
    ) -> Result<PeriodRun> {
        let results: Vec<TimestepResult> = (0..inputs.timestamps.len())
            .into_par_iter()
            .map(|k| {
                let field = aggregate_resolution(&inputs.irradiance[k].field, resolution, &self.topology)?;
                self.electrical(inputs.timestamps[k], &field, &inputs.module_tc[k], architecture, inputs.step_seconds)
            })
            .collect::<Result<Vec<_>>>()?;
        let yields = YieldSeries::from_power(
            inputs.timestamps.clone(),
            results.iter().map(|r| r.system.p).collect(),
            inputs.step_seconds,
        )?;
        Ok(PeriodRun { results, yields })
    }

    pub fn run_period(
        &self,
        weather: &WeatherSeries,
        architecture: Architecture,
        resolution: Resolution,
    ) -> Result<PeriodRun> {
        self.run_prepared(&self.prepare(weather)?, architecture, resolution)
    }

    /// Run with the scenario's own architecture and resolution.
    pub fn simulate_period(&self, weather: &WeatherSeries) -> Result<YieldSeries> {
        Ok(self.run_period(weather, self.scenario.architecture, self.scenario.resolution)?.yields)
    }

    /// Electrical stage for one timestep.
    pub fn electrical(
        &self,
        timestamp: DateTime<Utc>,
        field: &IrradianceField<f64>,
        module_tc: &[f64],
        architecture: Architecture,
        dt_s: f64,
    ) -> Result<TimestepResult> {
        Ok(self.solve(timestamp, field, module_tc, architecture, dt_s, false)?.0)
    }

    /// Electrical stage keeping every intermediate curve.
    pub fn curves(
        &self,
        timestamp: DateTime<Utc>,
        field: &IrradianceField<f64>,
        module_tc: &[f64],
        architecture: Architecture,
        dt_s: f64,
    ) -> Result<TimestepCurves> {
        let (result, curves) = self.solve(timestamp, field, module_tc, architecture, dt_s, true)?;
        curves.ok_or_else(|| Error::InconsistentInputs(format!("no curves at {timestamp}: the system is dark")))
            .map(|mut c| {
                c.result = result;
                c
            })
    }

    fn attachment(&self, module: usize, architecture: Architecture) -> Attach {
        match self.topology.attachment(module) {
            Some(MlpeAttachment::Optimizer(_)) => Attach::Optimizer,
            Some(MlpeAttachment::Microinverter) => Attach::Micro,
            _ => match architecture {
                Architecture::Optimizers => Attach::Optimizer,
                Architecture::Microinverters => Attach::Micro,
                _ => Attach::Passive,
            },
        }
    }

    fn cell_tc(&self, module_tc: &[f64]) -> Vec<f64> {
        let per = self.topology.cells_per_module();
        module_tc.iter().flat_map(|&t| std::iter::repeat_n(t, per)).collect()
    }

    fn dark_result(
        &self,
        timestamp: DateTime<Utc>,
        field: &IrradianceField<f64>,
        module_tc: &[f64],
        architecture: Architecture,
    ) -> TimestepResult {
        let m = self.topology.substrings_per_module;
        let modules = (0..self.topology.total_modules())
            .map(|k| ModuleRecord {
                v: 0.0,
                i: 0.0,
                p: 0.0,
                mpp_p: 0.0,
                bypass: BypassState { flags: vec![false; m] },
                mode: match self.attachment(k, architecture) {
                    Attach::Passive => ModuleMode::Passive,
                    Attach::Optimizer => ModuleMode::Conductive,
                    Attach::Micro => ModuleMode::Microinverter,
                },
                demand_infeasible: false,
            })
            .collect();
        TimestepResult {
            timestamp,
            architecture,
            resolution: field.resolution,
            system: SystemRecord {
                v: (architecture == Architecture::CentralInverter).then_some(0.0),
                i: 0.0,
                p: 0.0,
            },
            strings: vec![StringRecord { v: 0.0, i: 0.0, p: 0.0, mpp_p: 0.0 }; self.topology.strings],
            modules,
            e_eff: field.e_eff.clone(),
            tc: self.cell_tc(module_tc),
            y_inst: 0.0,
        }
    }

    fn solve(
        &self,
        timestamp: DateTime<Utc>,
        field: &IrradianceField<f64>,
        module_tc: &[f64],
        architecture: Architecture,
        dt_s: f64,
        keep_curves: bool,
    ) -> Result<(TimestepResult, Option<TimestepCurves>)> {
        let topo = &self.topology;
        if field.len() != topo.total_cells() {
            return Err(Error::TopologyMismatch(format!("field has {} cells, topology {}", field.len(), topo.total_cells())));
        }
        if module_tc.len() != topo.total_modules() {
            return Err(Error::TopologyMismatch(format!(
                "{} module temperatures for {} modules",
                module_tc.len(),
                topo.total_modules()
            )));
        }
        if field.e_eff.iter().all(|&e| e <= 0.0) {
            return Ok((self.dark_result(timestamp, field, module_tc, architecture), None));
        }

        let net = Network::build(self, &field.e_eff, module_tc)?;
        let attach: Vec<Attach> = (0..topo.total_modules()).map(|m| self.attachment(m, architecture)).collect();

        // Distinct modules only: MPPs and optimizer output curves.
        let n_unique = net.modules.len();
        let mut mpp: Vec<Option<PowerPoint<f64>>> = vec![None; n_unique];
        let mut has_opt = vec![false; n_unique];
        for (m, &a) in attach.iter().enumerate() {
            let u = net.module_of[m];
            if a != Attach::Passive && mpp[u].is_none() {
                mpp[u] = Some(find_mpp(&net.modules[u].curve));
            }
            has_opt[u] |= a == Attach::Optimizer;
        }

        // Optimizer output curves kink at the module MPP current; sampling
        // those currents keeps the string MPP search exact there.
        let mut grid = net.grid.clone();
        let top = grid[grid.len() - 1];
        grid.extend((0..n_unique).filter(|&u| has_opt[u]).filter_map(|u| mpp[u].map(|p| p.i)).filter(|&i| i > 0.0 && i < top));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let refined = grid.len() != net.grid.len();
        let mut opt_v: Vec<Option<Vec<f64>>> = vec![None; n_unique];
        let mut passive_v: Vec<Option<Vec<f64>>> = vec![None; n_unique];
        for (m, &a) in attach.iter().enumerate() {
            let u = net.module_of[m];
            let ctx = &net.modules[u];
            match a {
                Attach::Optimizer if opt_v[u].is_none() => {
                    opt_v[u] = Some(optimized_voltages(&ctx.curve, &self.optimizer, &grid));
                }
                Attach::Passive if refined && passive_v[u].is_none() => {
                    passive_v[u] = Some(ctx.curve.voltages_at(&grid));
                }
                _ => {}
            }
        }

        let mpm = topo.modules_per_string;
        let mut string_curves: Vec<Option<IvCurve<f64>>> = Vec::with_capacity(topo.strings);
        for s in 0..topo.strings {
            let mut v = vec![0.0; grid.len()];
            let mut any = false;
            for m in s * mpm..(s + 1) * mpm {
                let u = net.module_of[m];
                let mv: &[f64] = match attach[m] {
                    Attach::Micro => continue,
                    Attach::Passive => passive_v[u].as_deref().unwrap_or_else(|| net.modules[u].grid_voltages()),
                    Attach::Optimizer => opt_v[u].as_deref().expect("optimizer curve prepared"),
                };
                any = true;
                for (acc, x) in v.iter_mut().zip(mv) {
                    *acc += x;
                }
            }
            if any {
                let samples: Vec<(f64, f64)> = grid.iter().copied().zip(v).collect();
                let c = IvCurve::from_current_samples(&samples, CurveLevel::String)
                    .map_err(|e| e.in_stage(Stage::Hierarchy))?
                    .with_source(format!("string {s}"));
                string_curves.push(Some(c));
            } else {
                string_curves.push(None);
            }
        }

        let coupled: Vec<IvCurve<f64>> = string_curves.iter().flatten().cloned().collect();
        let ops = operating_points(architecture, &coupled).map_err(|e| e.in_stage(Stage::OperatingPoint))?;
        let mut currents = ops.string_currents.iter();

        let mut modules: Vec<Option<ModuleRecord>> = vec![None; topo.total_modules()];
        let mut strings = Vec::with_capacity(topo.strings);
        for (s, sc) in string_curves.iter().enumerate() {
            let Some(curve) = sc else {
                strings.push(StringRecord { v: 0.0, i: 0.0, p: 0.0, mpp_p: 0.0 });
                continue;
            };
            let i = *currents.next().expect("one current per coupled string");
            let (mut v_sum, mut p_sum) = (0.0, 0.0);
            for m in s * mpm..(s + 1) * mpm {
                let u = net.module_of[m];
                let ctx = &net.modules[u];
                let rec = match attach[m] {
                    Attach::Micro => continue,
                    Attach::Passive => {
                        let v = ctx.curve.voltage_at(i);
                        ModuleRecord {
                            v,
                            i,
                            p: v * i,
                            mpp_p: mpp[u].map_or_else(|| find_mpp(&ctx.curve).p, |p| p.p),
                            bypass: ctx.bypass_state_at(i),
                            mode: ModuleMode::Passive,
                            demand_infeasible: false,
                        }
                    }
                    Attach::Optimizer => {
                        let mp = mpp[u].expect("mpp prepared");
                        let out = optimizer_output(&mp, i, &self.optimizer, &ctx.curve);
                        ModuleRecord {
                            v: out.v_out,
                            i: out.i_out,
                            p: out.p_out,
                            mpp_p: mp.p,
                            bypass: ctx.bypass_state_at(out.i_in),
                            mode: out.mode.into(),
                            demand_infeasible: out.demand_infeasible,
                        }
                    }
                };
                v_sum += rec.v;
                p_sum += rec.p;
                modules[m] = Some(rec);
            }
            strings.push(StringRecord { v: v_sum, i, p: p_sum, mpp_p: find_mpp(curve).p });
        }

        let mut micro_p = 0.0;
        for (m, slot) in modules.iter_mut().enumerate() {
            if attach[m] != Attach::Micro {
                continue;
            }
            let u = net.module_of[m];
            let mp = mpp[u].expect("mpp prepared");
            let p = mp.p.max(0.0);
            micro_p += p;
            *slot = Some(ModuleRecord {
                v: mp.v,
                i: mp.i,
                p,
                mpp_p: mp.p,
                bypass: net.modules[u].bypass_state_at(mp.i),
                mode: ModuleMode::Microinverter,
                demand_infeasible: false,
            });
        }

        let string_p: f64 = strings.iter().map(|s| s.p).sum();
        let p = string_p + micro_p;
        let system = SystemRecord { v: ops.v_system, i: strings.iter().map(|s| s.i).sum(), p };
        let result = TimestepResult {
            timestamp,
            architecture,
            resolution: field.resolution,
            system,
            strings,
            modules: modules.into_iter().map(|m| m.expect("every module resolved")).collect(),
            e_eff: field.e_eff.clone(),
            tc: self.cell_tc(module_tc),
            y_inst: quanta_to_wh(energy_quanta(p, dt_s)),
        };

        let curves = if keep_curves {
            let optimized = (0..topo.total_modules())
                .map(|m| {
                    opt_v[net.module_of[m]].as_ref().filter(|_| attach[m] == Attach::Optimizer).map(|v| {
                        let samples: Vec<(f64, f64)> = grid.iter().copied().zip(v.iter().copied()).collect();
                        IvCurve::from_current_samples(&samples, CurveLevel::OptimizedModule)
                    })
                })
                .map(Option::transpose)
                .collect::<Result<Vec<_>>>()?;
            let system = match coupled.len() {
                0 => None,
                1 => Some(coupled[0].clone()),
                _ => Some(system_curve(&coupled).map_err(|e| e.in_stage(Stage::Hierarchy))?),
            };
            Some(TimestepCurves {
                cells: net.cell_of.iter().map(|&u| net.cell_curves[u].clone()).collect(),
                substrings: net.substring_curves()?,
                modules: net.module_of.iter().map(|&u| net.modules[u].clone()).collect(),
                optimized,
                strings: string_curves,
                system,
                grid,
                result: result.clone(),
            })
        } else {
            None
        };
        Ok((result, curves))
    }
}

/// Deduplicated cell, substring and module characteristics of one timestep.
struct Network {
    grid: Vec<f64>,
    cell_curves: Vec<IvCurve<f64>>,
    cell_of: Vec<usize>,
    sub_v: Vec<Vec<f64>>,
    sub_i_max: Vec<f64>,
    sub_of: Vec<usize>,
    modules: Vec<ModuleContext<f64>>,
    module_of: Vec<usize>,
}

impl Network {
    fn build(sim: &Simulator, e_eff: &[f64], module_tc: &[f64]) -> Result<Self> {
        let topo = &sim.topology;
        let per_module = topo.cells_per_module();

        let mut cell_key: HashMap<(u64, u64), usize> = HashMap::new();
        let mut cell_curves = Vec::new();
        let mut cell_of = Vec::with_capacity(e_eff.len());
        for (c, &e) in e_eff.iter().enumerate() {
            let tc = module_tc[c / per_module];
            let key = (e.to_bits(), tc.to_bits());
            let id = match cell_key.get(&key) {
                Some(&id) => id,
                None => {
                    let op = operating_params(&sim.params, &sim.spec, e, tc).map_err(|e| e.in_stage(Stage::Cell))?;
                    let curve = cell_iv_curve(&op, &sim.curve_options).map_err(|e| e.in_stage(Stage::Cell))?;
                    cell_curves.push(curve);
                    cell_key.insert(key, cell_curves.len() - 1);
                    cell_curves.len() - 1
                }
            };
            cell_of.push(id);
        }

        let i_top = cell_curves.iter().map(IvCurve::isc).fold(0.0, f64::max);
        if !(i_top > 0.0) {
            return Err(Error::InconsistentInputs("no cell produces current".into()).in_stage(Stage::Hierarchy));
        }
        let grid = current_grid(i_top, sim.scenario.solver.grid_points);
        let cell_v: Vec<Vec<f64>> = cell_curves.iter().map(|c| c.voltages_at(&grid)).collect();

        let n = topo.cells_per_substring;
        let mut sub_key: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut sub_v: Vec<Vec<f64>> = Vec::new();
        let mut sub_i_max = Vec::new();
        let mut sub_of = Vec::with_capacity(topo.total_substrings());
        for cells in cell_of.chunks(n) {
            let mut key = cells.to_vec();
            key.sort_unstable();
            let id = match sub_key.get(&key) {
                Some(&id) => id,
                None => {
                    let mut v = vec![0.0; grid.len()];
                    for &u in &key {
                        for (acc, x) in v.iter_mut().zip(&cell_v[u]) {
                            *acc += x;
                        }
                    }
                    sub_v.push(v);
                    sub_i_max.push(key.iter().map(|&u| cell_curves[u].i_max()).fold(f64::INFINITY, f64::min));
                    sub_key.insert(key, sub_v.len() - 1);
                    sub_v.len() - 1
                }
            };
            sub_of.push(id);
        }

        let m = topo.substrings_per_module;
        let mut mod_key: HashMap<&[usize], usize> = HashMap::new();
        let mut modules = Vec::new();
        let mut module_of = Vec::with_capacity(topo.total_modules());
        for subs in sub_of.chunks(m) {
            let id = match mod_key.get(subs) {
                Some(&id) => id,
                None => {
                    let v: Vec<Vec<f64>> = subs.iter().map(|&s| sub_v[s].clone()).collect();
                    let i_max: Vec<f64> = subs.iter().map(|&s| sub_i_max[s]).collect();
                    let ctx = ModuleContext::from_substring_voltages(&v, &i_max, topo.bypass_vf, &grid)
                        .map_err(|e| e.in_stage(Stage::Hierarchy))?;
                    modules.push(ctx);
                    mod_key.insert(subs, modules.len() - 1);
                    modules.len() - 1
                }
            };
            module_of.push(id);
        }

        Ok(Self { grid, cell_curves, cell_of, sub_v, sub_i_max, sub_of, modules, module_of })
    }

    fn substring_curves(&self) -> Result<Vec<IvCurve<f64>>> {
        self.sub_of
            .iter()
            .map(|&s| {
                let samples: Vec<(f64, f64)> = self
                    .grid
                    .iter()
                    .copied()
                    .zip(self.sub_v[s].iter().copied())
                    .filter(|&(i, _)| i <= self.sub_i_max[s])
                    .collect();
                IvCurve::from_current_samples(&samples, CurveLevel::Substring)
            })
            .collect()
    }
}

/// Runs the scenario over the series with its configured architecture and resolution.
pub fn simulate_period(scenario: &Scenario, weather: &WeatherSeries) -> Result<YieldSeries> {
    Simulator::new(scenario)?.simulate_period(weather)
}

/// One timestep from a scenario, cold-starting the thermal state if none is given.
pub fn simulate_timestep(
    scenario: &Scenario,
    rec: &WeatherRecord,
    prev: Option<&ThermalState>,
    dt_s: f64,
) -> Result<(TimestepResult, ThermalState)> {
    Simulator::new(scenario)?.simulate_timestep(rec, prev, dt_s, scenario.architecture, scenario.resolution)
}
