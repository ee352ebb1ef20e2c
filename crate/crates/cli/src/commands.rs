//! Subcommand implementations. Every input is loaded and validated before
//! any computation; outputs are assembled in memory and committed at the end.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use pvhier::curve::{IvCurve, PowerPoint};
use pvhier::irradiance::{
    aggregate_resolution, day_of_year, direct_clearness_index, parse_timestamp, solar_position, IrradianceOverrides,
    Resolution, WeatherSeries,
};
use pvhier::module_db::ModuleDb;
use pvhier::simulation::{self, error_metrics, find_mpp, report, Architecture, Scenario, Simulator};

use crate::output::OutputSet;
use crate::{CliError, RunArgs};

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

struct Loaded {
    sim: Simulator,
    weather: WeatherSeries,
}

fn require_file(path: &Path, what: &str, err: fn(String) -> CliError) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(err(format!("{what} file {} does not exist", path.display())))
    }
}

fn config_err(m: String) -> CliError {
    CliError::config(m)
}

fn data_err(m: String) -> CliError {
    CliError::data(m)
}

fn check_out_dir(out: &Path) -> Result<(), CliError> {
    if out.exists() && !out.is_dir() {
        return Err(CliError::config(format!("output path {} is not a directory", out.display())));
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    require_file(path, "scenario", config_err)?;
    Ok(Scenario::from_path(path)?)
}

fn load(run: &RunArgs) -> Result<Loaded, CliError> {
    let scenario = load_scenario(&run.scenario)?;
    require_file(&run.weather, "weather", data_err)?;
    check_out_dir(&run.out)?;
    let mut db = ModuleDb::bundled();
    if let Some(p) = &run.module_db {
        require_file(p, "module database", config_err)?;
        db = db.with_overlay(ModuleDb::from_path(p)?);
    }
    let weather = WeatherSeries::from_path(&run.weather)?;
    let mut sim = Simulator::with_db(&scenario, &db)?;
    if let Some(p) = &run.irradiance {
        require_file(p, "irradiance", data_err)?;
        sim = sim.with_overrides(IrradianceOverrides::from_path(p)?)?;
    }
    Ok(Loaded { sim, weather })
}

fn point(p: &PowerPoint<f64>) -> Value {
    json!({ "v": p.v, "i": p.i, "p": p.p })
}

fn curves_csv<'a>(label: &str, curves: impl Iterator<Item = (usize, &'a IvCurve<f64>)>) -> Vec<u8> {
    let mut out = format!("{label},v,i\n");
    for (k, c) in curves {
        for &(v, i) in c.points() {
            out.push_str(&format!("{k},{v},{i}\n"));
        }
    }
    out.into_bytes()
}

fn report_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        say!("wrote {}", p.display());
    }
}

pub fn iv_curve(run: &RunArgs, timestamp: &str) -> Result<(), CliError> {
    let ts = parse_timestamp(timestamp).map_err(|e| CliError::config(e.to_string()))?;
    let Loaded { sim, weather } = load(run)?;
    let k = weather
        .find(&ts)
        .ok_or_else(|| CliError::config(format!("timestamp {ts} is not a record of the weather file")))?;
    let inputs = sim.prepare(&weather.slice(0..k + 1))?;
    let scenario = sim.scenario();
    let field = aggregate_resolution(&inputs.irradiance[k].field, scenario.resolution, sim.topology())?;
    if field.e_eff.iter().all(|&e| e <= 0.0) {
        return Err(CliError::data(format!("no irradiance on the array at {ts}")));
    }
    let curves = sim.curves(ts, &field, &inputs.module_tc[k], scenario.architecture, inputs.step_seconds)?;
    let r = &curves.result;

    let mut out = OutputSet::new();
    out.add("curves_cell.csv", curves_csv("cell", curves.cells.iter().enumerate()));
    out.add("curves_substring.csv", curves_csv("substring", curves.substrings.iter().enumerate()));
    out.add("curves_module.csv", curves_csv("module", curves.modules.iter().map(|m| &m.curve).enumerate()));
    if curves.optimized.iter().any(Option::is_some) {
        let it = curves.optimized.iter().enumerate().filter_map(|(k, c)| c.as_ref().map(|c| (k, c)));
        out.add("curves_optimized.csv", curves_csv("module", it));
    }
    let it = curves.strings.iter().enumerate().filter_map(|(k, c)| c.as_ref().map(|c| (k, c)));
    out.add("curves_string.csv", curves_csv("string", it));
    if let Some(sys) = &curves.system {
        out.add("curves_system.csv", curves_csv("system", std::iter::once((0, sys))));
    }

    let modules: Vec<Value> = r
        .modules
        .iter()
        .zip(&curves.modules)
        .enumerate()
        .map(|(k, (m, ctx))| {
            json!({
                "index": k,
                "mpp": point(&find_mpp(&ctx.curve)),
                "opp": { "v": m.v, "i": m.i, "p": m.p },
                "bypass": m.bypass.to_bits(),
                "bypass_active": m.bypass.active_count(),
                "mode": m.mode.as_str(),
                "demand_infeasible": m.demand_infeasible,
            })
        })
        .collect();
    let strings: Vec<Value> = r
        .strings
        .iter()
        .zip(&curves.strings)
        .enumerate()
        .map(|(k, (s, c))| {
            json!({
                "index": k,
                "mpp": c.as_ref().map(|c| point(&find_mpp(c))),
                "opp": { "v": s.v, "i": s.i, "p": s.p },
            })
        })
        .collect();
    let summary = json!({
        "timestamp": ts.to_rfc3339(),
        "architecture": r.architecture.as_str(),
        "resolution": r.resolution.as_str(),
        "module_temperature_k": inputs.module_tc[k],
        "system": {
            "mpp": curves.system.as_ref().map(|c| point(&find_mpp(c))),
            "opp": { "v": r.system.v, "i": r.system.i, "p": r.system.p },
        },
        "strings": strings,
        "modules": modules,
        "bypass_active_total": r.bypass_count(),
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    out.add("summary.json", text.into_bytes());
    say!("system power {:.3} W, {} bypass diodes active", r.system.p, r.bypass_count());
    report_written(&out.commit(&run.out)?);
    Ok(())
}

pub fn simulate(run: &RunArgs, cells: bool) -> Result<(), CliError> {
    let Loaded { sim, weather } = load(run)?;
    let scenario = sim.scenario();
    let period = sim.run_period(&weather, scenario.architecture, scenario.resolution)?;
    let mut out = OutputSet::new();
    out.render("timestep_results.csv", |w| report::write_timestep_results(w, &period.results, cells))?;
    out.render("yield_series.csv", |w| report::write_yield_series(w, &period.yields))?;
    out.render("yield_monthly.csv", |w| report::write_yield_monthly(w, &period.yields))?;
    say!("cumulative yield {:.3} Wh over {} timesteps", period.yields.y_cum, period.yields.len());
    report_written(&out.commit(&run.out)?);
    Ok(())
}

pub fn compare_resolutions(run: &RunArgs, levels: &[String]) -> Result<(), CliError> {
    let levels: Vec<Resolution> = levels.iter().map(|l| l.parse()).collect::<pvhier::Result<_>>()?;
    if levels.is_empty() {
        return Err(CliError::config("no resolution levels given"));
    }
    let Loaded { sim, weather } = load(run)?;
    let rep = simulation::compare_resolutions(&sim, &weather, &levels)?;
    let mut out = OutputSet::new();
    out.render("resolution_report.csv", |w| report::write_resolution_report(w, &rep))?;
    out.render("resolution_monthly.csv", |w| report::write_resolution_monthly(w, &rep))?;
    for (&level, r) in rep.levels.iter().zip(&rep.runs) {
        let ratio = if rep.reference.yields.y_cum > 0.0 { r.yields.y_cum / rep.reference.yields.y_cum } else { f64::NAN };
        say!("{:<10} {:>14.3} Wh  ratio to cell {:.4}", level.as_str(), r.yields.y_cum, ratio);
    }
    report_written(&out.commit(&run.out)?);
    Ok(())
}

pub fn compare_architectures(run: &RunArgs, architectures: &[String]) -> Result<(), CliError> {
    let archs: Vec<Architecture> = architectures.iter().map(|a| a.parse()).collect::<pvhier::Result<_>>()?;
    if archs.is_empty() {
        return Err(CliError::config("no architectures given"));
    }
    let Loaded { sim, weather } = load(run)?;
    let rep = simulation::compare_architectures(&sim, &weather, &archs)?;
    let mut out = OutputSet::new();
    out.render("architecture_report.csv", |w| report::write_architecture_report(w, &rep))?;
    out.render("architecture_timesteps.csv", |w| report::write_architecture_timesteps(w, &rep))?;
    for (&a, r) in rep.architectures.iter().zip(&rep.runs) {
        say!("{:<18} {:>14.3} Wh", a.as_str(), r.yields.y_cum);
    }
    report_written(&out.commit(&run.out)?);
    Ok(())
}

pub fn clearness(scenario: &Path, weather: &Path, out_dir: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario)?;
    scenario.validate_basic()?;
    require_file(weather, "weather", data_err)?;
    check_out_dir(out_dir)?;
    let weather = WeatherSeries::from_path(weather)?;
    let mut text = String::from("timestamp,zenith,kt_dir\n");
    for r in weather.records() {
        let sun = solar_position(&r.timestamp, scenario.site.latitude, scenario.site.longitude);
        if let Some(kt) = direct_clearness_index(r.dni, sun.zenith, day_of_year(&r.timestamp)) {
            text.push_str(&format!("{},{},{}\n", r.timestamp.format("%Y-%m-%dT%H:%M:%SZ"), sun.zenith, kt));
        }
    }
    let mut out = OutputSet::new();
    out.add("clearness.csv", text.into_bytes());
    report_written(&out.commit(out_dir)?);
    Ok(())
}

pub fn clear_sky(scenario: &Path, date: &str, step: i64, t_min: f64, t_max: f64, out: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario)?;
    scenario.validate_basic()?;
    let date = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| CliError::config(format!("date `{date}`: {e}")))?;
    if step <= 0 || !(t_min.is_finite() && t_max.is_finite()) {
        return Err(CliError::config("step must be positive and temperatures finite"));
    }
    let weather = WeatherSeries::clear_sky_day(
        date,
        scenario.site.latitude,
        scenario.site.longitude,
        chrono::TimeDelta::seconds(step),
        t_min,
        t_max,
    )?;
    let (Some(dir), Some(name)) = (out.parent(), out.file_name()) else {
        return Err(CliError::config(format!("invalid output file {}", out.display())));
    };
    let mut set = OutputSet::new();
    set.render(&name.to_string_lossy(), |w| weather.write_csv(w))?;
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    report_written(&set.commit(dir)?);
    Ok(())
}

/// Last column of every row; a non-numeric first row is taken as a header.
fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    require_file(path, "series", data_err)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let Some(field) = rec.iter().last() else { continue };
        match field.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ if k == 0 => {}
            _ => return Err(CliError::data(format!("{}: row {} is not numeric", path.display(), k + 1))),
        }
    }
    Ok(out)
}

pub fn metrics(predicted: &Path, measured: &Path) -> Result<(), CliError> {
    let p = read_series(predicted)?;
    let m = read_series(measured)?;
    let e = error_metrics(&p, &m)?;
    say!("r2={} mbe={} rmse={}", e.r2, e.mbe, e.rmse);
    Ok(())
}
