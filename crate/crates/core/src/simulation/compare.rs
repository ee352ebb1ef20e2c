//! Resolution and architecture comparison studies.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;

use crate::error::Result;
use crate::irradiance::{Resolution, WeatherSeries};

use super::pipeline::{PeriodRun, PreparedInputs, Simulator};
use super::scenario::Architecture;

/// Power of `run` relative to `reference` at timestep `k`; `None` when the
/// reference produces nothing.
fn ratio(run: &PeriodRun, reference: &PeriodRun, k: usize) -> Option<f64> {
    let base = reference.results[k].system.p;
    (base > 0.0).then(|| run.results[k].system.p / base)
}

fn monthly_ratio(run: &PeriodRun, reference: &PeriodRun) -> BTreeMap<String, Option<f64>> {
    run.yields
        .monthly
        .iter()
        .map(|(m, &y)| {
            let base = reference.yields.monthly.get(m).copied().unwrap_or(0.0);
            (m.clone(), (base > 0.0).then(|| y / base))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResolutionReport {
    pub architecture: Architecture,
    pub levels: Vec<Resolution>,
    pub timestamps: Vec<DateTime<Utc>>,
    /// Any cell loses beam to an obstruction.
    pub shaded: Vec<bool>,
    /// One run per entry of `levels`.
    pub runs: Vec<PeriodRun>,
    /// Cell-resolution run every ratio refers to.
    pub reference: PeriodRun,
}

impl ResolutionReport {
    pub fn run(&self, level: Resolution) -> Option<&PeriodRun> {
        self.levels.iter().position(|&l| l == level).map(|k| &self.runs[k])
    }

    /// Operating power relative to the Cell run.
    pub fn opp_ratio(&self, level: Resolution, k: usize) -> Option<f64> {
        self.run(level).and_then(|r| ratio(r, &self.reference, k))
    }

    /// Modules whose bypass flags differ from the Cell run at timestep `k`.
    pub fn bypass_disagreements(&self, level: Resolution, k: usize) -> usize {
        let Some(run) = self.run(level) else { return 0 };
        run.results[k]
            .modules
            .iter()
            .zip(&self.reference.results[k].modules)
            .filter(|(a, b)| a.bypass != b.bypass)
            .count()
    }

    pub fn monthly_ratio(&self, level: Resolution) -> BTreeMap<String, Option<f64>> {
        self.run(level).map(|r| monthly_ratio(r, &self.reference)).unwrap_or_default()
    }
}

/// Electrical runs at each resolution on identical irradiance and temperatures.
pub fn compare_resolutions_prepared(
    sim: &Simulator,
    inputs: &PreparedInputs,
    levels: &[Resolution],
) -> Result<ResolutionReport> {
    let arch = sim.scenario().architecture;
    let mut wanted: Vec<Resolution> = levels.to_vec();
    if !wanted.contains(&Resolution::Cell) {
        wanted.push(Resolution::Cell);
    }
    let runs: Vec<PeriodRun> =
        wanted.par_iter().map(|&l| sim.run_prepared(inputs, arch, l)).collect::<Result<Vec<_>>>()?;
    let cell_idx = wanted.iter().position(|&l| l == Resolution::Cell).expect("cell run present");
    let reference = runs[cell_idx].clone();
    Ok(ResolutionReport {
        architecture: arch,
        levels: levels.to_vec(),
        timestamps: inputs.timestamps.clone(),
        shaded: inputs.irradiance.iter().map(|i| i.is_shaded()).collect(),
        runs: runs.into_iter().take(levels.len()).collect(),
        reference,
    })
}

pub fn compare_resolutions(sim: &Simulator, weather: &WeatherSeries, levels: &[Resolution]) -> Result<ResolutionReport> {
    compare_resolutions_prepared(sim, &sim.prepare(weather)?, levels)
}

#[derive(Debug, Clone)]
pub struct ArchitectureReport {
    pub architectures: Vec<Architecture>,
    pub timestamps: Vec<DateTime<Utc>>,
    pub runs: Vec<PeriodRun>,
    pub string_baseline: PeriodRun,
    pub central_baseline: PeriodRun,
}

impl ArchitectureReport {
    pub fn run(&self, arch: Architecture) -> Option<&PeriodRun> {
        self.architectures.iter().position(|&a| a == arch).map(|k| &self.runs[k])
    }

    /// Monthly yield minus the string-inverter baseline, Wh.
    pub fn delta_vs_string(&self, arch: Architecture) -> BTreeMap<String, f64> {
        self.delta(arch, &self.string_baseline)
    }

    pub fn delta_vs_central(&self, arch: Architecture) -> BTreeMap<String, f64> {
        self.delta(arch, &self.central_baseline)
    }

    fn delta(&self, arch: Architecture, base: &PeriodRun) -> BTreeMap<String, f64> {
        let Some(run) = self.run(arch) else { return BTreeMap::new() };
        run.yields
            .monthly
            .iter()
            .map(|(m, &y)| (m.clone(), y - base.yields.monthly.get(m).copied().unwrap_or(0.0)))
            .collect()
    }
}

/// Cell-resolution runs of each architecture.
///
/// Attachments listed in the scenario are dropped so that every run is a
/// pure instance of its architecture.
pub fn compare_architectures_prepared(
    sim: &Simulator,
    inputs: &PreparedInputs,
    architectures: &[Architecture],
) -> Result<ArchitectureReport> {
    let sim = sim.without_attachments();
    let mut wanted = architectures.to_vec();
    for base in [Architecture::StringInverter, Architecture::CentralInverter] {
        if !wanted.contains(&base) {
            wanted.push(base);
        }
    }
    let runs: Vec<PeriodRun> = wanted
        .par_iter()
        .map(|&a| sim.run_prepared(inputs, a, Resolution::Cell))
        .collect::<Result<Vec<_>>>()?;
    let find = |a: Architecture| runs[wanted.iter().position(|&w| w == a).expect("baseline run present")].clone();
    let string_baseline = find(Architecture::StringInverter);
    let central_baseline = find(Architecture::CentralInverter);
    Ok(ArchitectureReport {
        architectures: architectures.to_vec(),
        timestamps: inputs.timestamps.clone(),
        runs: runs.into_iter().take(architectures.len()).collect(),
        string_baseline,
        central_baseline,
    })
}

pub fn compare_architectures(
    sim: &Simulator,
    weather: &WeatherSeries,
    architectures: &[Architecture],
) -> Result<ArchitectureReport> {
    compare_architectures_prepared(sim, &sim.prepare(weather)?, architectures)
}
