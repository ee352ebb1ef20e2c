//! CSV result writers.
//!
//! Column layouts:
//!
//! * `timestep_results.csv`: `timestamp,entity,index,v,i,p,mpp_p,bypass,mode,e_eff,tc`,
//!   one row for the system, every string and every module (and every cell
//!   when requested). Empty fields are not applicable to the entity.
//! * `yield_series.csv`: `timestamp,power_w,y_inst_wh,y_cum_wh`.
//! * `yield_monthly.csv`: `month,energy_wh`.
//! * `resolution_report.csv`: `timestamp,level,p_w,ratio_to_cell,bypass_active,bypass_disagreements,shaded`.
//! * `resolution_monthly.csv`: `month,level,energy_wh,ratio_to_cell`.
//! * `architecture_report.csv`: `month,architecture,energy_wh,delta_vs_string_wh,delta_vs_central_wh`.
//! * `architecture_timesteps.csv`: `timestamp,architecture,p_w`.

use std::io::Write;

use crate::error::Result;

use super::compare::{ArchitectureReport, ResolutionReport};
use super::energy::{quanta_to_wh, YieldSeries};
use super::pipeline::TimestepResult;

fn fmt_ts(ts: &chrono::DateTime<chrono::Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_timestep_results<W: Write>(out: W, results: &[TimestepResult], include_cells: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "entity", "index", "v", "i", "p", "mpp_p", "bypass", "mode", "e_eff", "tc"])?;
    for r in results {
        let ts = fmt_ts(&r.timestamp);
        let s = &r.system;
        w.write_record([&ts, "system", "0", &opt(s.v), &s.i.to_string(), &s.p.to_string(), "", "", "", "", ""])?;
        for (k, st) in r.strings.iter().enumerate() {
            w.write_record([
                &ts,
                "string",
                &k.to_string(),
                &st.v.to_string(),
                &st.i.to_string(),
                &st.p.to_string(),
                &st.mpp_p.to_string(),
                "",
                "",
                "",
                "",
            ])?;
        }
        let per = if r.modules.is_empty() { 0 } else { r.e_eff.len() / r.modules.len() };
        for (k, m) in r.modules.iter().enumerate() {
            let cells = &r.e_eff[k * per..(k + 1) * per];
            let e_mean = cells.iter().sum::<f64>() / per.max(1) as f64;
            w.write_record([
                &ts,
                "module",
                &k.to_string(),
                &m.v.to_string(),
                &m.i.to_string(),
                &m.p.to_string(),
                &m.mpp_p.to_string(),
                &m.bypass.to_bits(),
                m.mode.as_str(),
                &e_mean.to_string(),
                &r.tc.get(k * per).copied().unwrap_or(f64::NAN).to_string(),
            ])?;
        }
        if include_cells {
            for (c, (&e, &t)) in r.e_eff.iter().zip(&r.tc).enumerate() {
                w.write_record([&ts, "cell", &c.to_string(), "", "", "", "", "", "", &e.to_string(), &t.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_yield_series<W: Write>(out: W, y: &YieldSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "power_w", "y_inst_wh", "y_cum_wh"])?;
    let mut acc: i64 = 0;
    for k in 0..y.len() {
        acc += y.quanta[k];
        w.write_record([
            fmt_ts(&y.timestamps[k]),
            y.power[k].to_string(),
            y.y_inst[k].to_string(),
            quanta_to_wh(acc).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_yield_monthly<W: Write>(out: W, y: &YieldSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "energy_wh"])?;
    for (m, e) in &y.monthly {
        w.write_record([m.clone(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_resolution_report<W: Write>(out: W, report: &ResolutionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "level", "p_w", "ratio_to_cell", "bypass_active", "bypass_disagreements", "shaded"])?;
    for (k, ts) in report.timestamps.iter().enumerate() {
        let ts = fmt_ts(ts);
        for (&level, run) in report.levels.iter().zip(&report.runs) {
            let r = &run.results[k];
            w.write_record([
                ts.clone(),
                level.as_str().to_string(),
                r.system.p.to_string(),
                opt(report.opp_ratio(level, k)),
                r.bypass_count().to_string(),
                report.bypass_disagreements(level, k).to_string(),
                report.shaded[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_resolution_monthly<W: Write>(out: W, report: &ResolutionReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "level", "energy_wh", "ratio_to_cell"])?;
    for (&level, run) in report.levels.iter().zip(&report.runs) {
        let ratios = report.monthly_ratio(level);
        for (m, e) in &run.yields.monthly {
            w.write_record([m.clone(), level.as_str().to_string(), e.to_string(), opt(ratios.get(m).copied().flatten())])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_architecture_report<W: Write>(out: W, report: &ArchitectureReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "architecture", "energy_wh", "delta_vs_string_wh", "delta_vs_central_wh"])?;
    for (&arch, run) in report.architectures.iter().zip(&report.runs) {
        let ds = report.delta_vs_string(arch);
        let dc = report.delta_vs_central(arch);
        for (m, e) in &run.yields.monthly {
            w.write_record([
                m.clone(),
                arch.as_str().to_string(),
                e.to_string(),
                opt(ds.get(m).copied()),
                opt(dc.get(m).copied()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_architecture_timesteps<W: Write>(out: W, report: &ArchitectureReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "architecture", "p_w"])?;
    for (k, ts) in report.timestamps.iter().enumerate() {
        let ts = fmt_ts(ts);
        for (&arch, run) in report.architectures.iter().zip(&report.runs) {
            w.write_record([ts.clone(), arch.as_str().to_string(), run.results[k].system.p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
