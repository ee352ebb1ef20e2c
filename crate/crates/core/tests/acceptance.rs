//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeDelta, TimeZone, Utc};

use pvhier::cell::{
    calibrate_two_diode, cell_iv_curve, cell_max_power, operating_params, solve_cell_current, solve_cell_voltage,
    CellCurveOptions, T_STC,
};
use pvhier::curve::CurveLevel;
use pvhier::hierarchy::{current_grid, module_curve_with_bypass, series_combine, string_curve};
use pvhier::irradiance::{Resolution, WeatherSeries};
use pvhier::mlpe::{build_optimized_curve, optimizer_output, LossParams, Mode, OptimizerSpec};
use pvhier::module_db::{lookup_ideality_factors, lookup_module_spec, IdealityFactorTable, ModuleType, IDEALITY_LEVELS};
use pvhier::simulation::{
    compare_architectures_prepared, compare_resolutions_prepared, find_mpp, operating_points, Architecture,
    PreparedInputs, Scenario, Simulator, YieldSeries,
};
use pvhier::thermal::{SkyTemperature, ThermalEnv, ThermalModel, ThermalParams};
use pvhier::IvCurve;

use common::{network_current, VF};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const GERMAN: &str = "GermanSolar USA GSM6-60-300W";

fn scenario(modules_per_string: usize, strings: usize, obstruction: &str) -> Scenario {
    let text = format!(
        r#"
module_id = "{GERMAN}"
architecture = "string-inverter"

[site]
latitude = 51.44
longitude = 5.49

[topology]
modules_per_string = {modules_per_string}
strings = {strings}

[array]
tilt = 35
azimuth = 180
origin = [0.0, 0.0, 3.0]
{obstruction}
"#
    );
    Scenario::from_toml_str(&text).expect("scenario parses")
}

const DORMER: &str = r#"
[[obstruction]]
type = "box"
corner = [2.0, -1.6, 0.0]
size = [2.5, 1.2, 4.4]
"#;

const POLE: &str = r#"
[[obstruction]]
type = "cylinder"
base = [3.0, -2.0, 0.0]
height = 7.0
diameter = 0.2
"#;

fn clear_day() -> WeatherSeries {
    let date = NaiveDate::from_ymd_opt(2022, 6, 21).unwrap();
    WeatherSeries::clear_sky_day(date, 51.44, 5.49, TimeDelta::minutes(1), 12.0, 24.0).unwrap()
}

struct Scene {
    name: &'static str,
    sim: Simulator,
    inputs: PreparedInputs,
}

fn scene(name: &'static str, s: Scenario, weather: &WeatherSeries) -> Scene {
    let sim = Simulator::new(&s).expect("simulator");
    let inputs = sim.prepare(weather).expect("prepare");
    Scene { name, sim, inputs }
}

// 1. STC round trip
fn stc_round_trip() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for id in [GERMAN, "Centrosolar America EP72 335SW", "First Solar Inc. FS-490A"] {
        let spec = lookup_module_spec(id).unwrap();
        let params = calibrate_two_diode(&spec).unwrap();
        let op = operating_params(&params, &spec, 1000.0, T_STC).unwrap();
        let cells = spec.cells_in_series as f64;
        let isc = solve_cell_current(&op, 0.0).unwrap();
        let voc = cells * solve_cell_voltage(&op, 0.0).unwrap();
        let pmp = cells * cell_max_power(&op).unwrap().2;
        let e_isc = (isc / spec.isc_stc - 1.0).abs();
        let e_voc = (voc / spec.voc_stc - 1.0).abs();
        let e_pmp = (pmp / (spec.imp_stc * spec.vmp_stc) - 1.0).abs();
        ok &= e_isc <= 0.005 && e_voc <= 0.005 && e_pmp <= 0.02;
        lines.push(format!("{id}: Isc {:.3}% Voc {:.3}% Pmp {:.3}%", 100.0 * e_isc, 100.0 * e_voc, 100.0 * e_pmp));
    }
    let t = start.elapsed();
    ok &= t < Duration::from_secs(5);
    check(ok, format!("{}; {:.2} s", lines.join("; "), t.as_secs_f64()))
}

// 2. datasheet and ideality tables
fn tables_exact() -> Outcome {
    #[rustfmt::skip]
    let expected: [(&str, [f64; 10], ModuleType); 3] = [
        (GERMAN, [1.65, 0.997, 9.78, 39.82, 9.33, 32.25, 0.00255258, -0.135786, 1.121, 0.0], ModuleType::MonoCrystalline),
        ("Centrosolar America EP72 335SW", [1.95, 0.986, 9.47, 46.83, 8.84, 37.90, 0.00521797, -0.146578, 1.121, 0.0], ModuleType::MultiCrystalline),
        ("First Solar Inc. FS-490A", [1.20, 0.600, 1.53, 85.50, 1.36, 66.50, 0.00091188, -0.22487, 1.121, 0.0], ModuleType::ThinFilm),
    ];
    let mut mismatches = Vec::new();
    for (id, v, ty) in expected {
        let s = lookup_module_spec(id).unwrap();
        let got = [s.length_m, s.width_m, s.isc_stc, s.voc_stc, s.imp_stc, s.vmp_stc, s.alpha_isc, s.beta_voc, s.band_gap_ev, 0.0];
        if got.iter().zip(&v).any(|(a, b)| a.to_bits() != b.to_bits()) || s.module_type != ty {
            mismatches.push(id.to_string());
        }
    }
    #[rustfmt::skip]
    let ideality: [[(f64, f64); 3]; 5] = [
        [(1.38, 3.46), (1.02, 2.49), (1.48, 3.10)],
        [(1.38, 2.30), (1.02, 2.69), (1.44, 3.68)],
        [(1.38, 2.83), (1.02, 2.75), (1.48, 3.61)],
        [(1.38, 3.15), (1.03, 2.62), (1.46, 3.31)],
        [(1.37, 2.11), (1.03, 2.35), (1.48, 3.72)],
    ];
    let types = [ModuleType::MonoCrystalline, ModuleType::MultiCrystalline, ModuleType::ThinFilm];
    let mut entries = 0;
    for (level, row) in IDEALITY_LEVELS.iter().zip(&ideality) {
        for (ty, &(n1, n2)) in types.iter().zip(row) {
            let (a, b) = lookup_ideality_factors(*ty, *level);
            if a.to_bits() != n1.to_bits() || b.to_bits() != n2.to_bits() {
                mismatches.push(format!("ideality {ty:?} @ {level}"));
            }
            entries += 1;
        }
    }
    let rows = IdealityFactorTable.rows();
    if rows.len() != 15 {
        mismatches.push(format!("table has {} rows", rows.len()));
    }
    check(mismatches.is_empty(), format!("3 datasheets, {entries} ideality entries; mismatches: {mismatches:?}"))
}

// 3. Kirchhoff oracle on a 2 x 2 toy module
fn kirchhoff_oracle() -> Outcome {
    let start = Instant::now();
    let spec = lookup_module_spec(GERMAN).unwrap();
    let params = calibrate_two_diode(&spec).unwrap();
    let sunny = operating_params(&params, &spec, 1000.0, T_STC).unwrap();
    let shaded = operating_params(&params, &spec, 150.0, T_STC).unwrap();
    let cells = vec![vec![sunny, shaded], vec![sunny, sunny]];
    let opts = CellCurveOptions { n_points: 400, reverse_voltage: 2.0 * 0.75 + VF };
    let cell_curves: Vec<Vec<IvCurve>> =
        cells.iter().map(|s| s.iter().map(|op| cell_iv_curve(op, &opts).unwrap()).collect()).collect();
    let i_top = cell_curves.iter().flatten().map(IvCurve::i_max).fold(0.0, f64::max);
    let grid = current_grid(i_top, 4001);
    let subs: Vec<IvCurve> = cell_curves.iter().map(|s| series_combine(s, &grid).unwrap()).collect();
    let ctx = module_curve_with_bypass(&subs, VF, &grid).unwrap();
    let module = &ctx.curve;
    let (lo, hi) = (module.v_min().max(-2.0 * VF), module.voc());
    let mut worst = 0.0_f64;
    for k in 0..20 {
        let v = lo + (hi - lo) * (k as f64 + 0.5) / 20.0;
        let i_ref = network_current(&cells, v, module.current_at(v).max(0.1));
        worst = worst.max((module.current_at(v) - i_ref).abs());
    }
    let bypassed = ctx.bypass_state_at(0.9 * sunny.iph).active_count();
    let t = start.elapsed();
    check(
        worst < 1e-3 && bypassed == 1 && t < Duration::from_secs(10),
        format!("max |dI| = {worst:.2e} A over 20 probes, shaded substring bypassed near Isc: {bypassed}; {:.2} s", t.as_secs_f64()),
    )
}

// 4. bypass of a heavily shaded module in a 10-module string
fn bypass_reproduction() -> Outcome {
    let spec = lookup_module_spec(GERMAN).unwrap();
    let params = calibrate_two_diode(&spec).unwrap();
    let opts = CellCurveOptions { n_points: 160, reverse_voltage: 20.0 * 0.75 + VF };
    let e_shaded = 2.4 / spec.isc_stc * 1000.0;
    let e_lit = 330.0;
    let curve_at = |e: f64| cell_iv_curve(&operating_params(&params, &spec, e, T_STC).unwrap(), &opts).unwrap();
    let (lit, dim) = (curve_at(e_lit), curve_at(e_shaded));
    let grid = current_grid(lit.i_max(), 1001);
    let module = |cell: &IvCurve| {
        let sub = series_combine(&vec![cell.clone(); 20], &grid).unwrap();
        module_curve_with_bypass(&[sub.clone(), sub.clone(), sub], VF, &grid).unwrap()
    };
    let shaded_ctx = module(&dim);
    let lit_ctx = module(&lit);
    let mut modules = vec![lit_ctx.curve.clone(); 10];
    modules[3] = shaded_ctx.curve.clone();
    let string = string_curve(&modules, &grid).unwrap();
    let mpp = find_mpp(&string);

    let i_string = 2.9;
    let state = shaded_ctx.bypass_state_at(i_string);
    let v_mod = shaded_ctx.curve.voltage_at(i_string);
    let p_mod = v_mod * i_string;
    let isc_shaded = shaded_ctx.curve.isc();
    check(
        state.active_count() == 3 && (v_mod + 3.0 * VF).abs() < 1e-9 && p_mod <= 0.0 && mpp.p > 0.0,
        format!(
            "shaded Isc {isc_shaded:.3} A; at {i_string} A bypass {} V_mod {v_mod:.4} V P_mod {p_mod:.3} W; string MPP {:.1} W at {:.3} A",
            state.to_bits(),
            mpp.p,
            mpp.i
        ),
    )
}

// 5. resolution overestimation on a dormer shadow
fn resolution_direction(dormer: &Scene, uniform: &Scene) -> Outcome {
    let rep = compare_resolutions_prepared(&dormer.sim, &dormer.inputs, &Resolution::ALL).unwrap();
    let n = rep.timestamps.len();
    let shaded: Vec<usize> = (0..n).filter(|&k| rep.shaded[k] && rep.reference.results[k].system.p > 0.0).collect();
    let p = |level: Resolution, k: usize| rep.run(level).unwrap().results[k].system.p;
    let mut violations = 0;
    for &k in &shaded {
        let cell = p(Resolution::Cell, k);
        for level in [Resolution::Module, Resolution::String] {
            if p(level, k) < cell {
                violations += 1;
            }
        }
    }
    let y = |level: Resolution| rep.run(level).unwrap().yields.y_cum;
    let (yc, ys, ym, yst) = (y(Resolution::Cell), y(Resolution::Substring), y(Resolution::Module), y(Resolution::String));
    let ordered = yst >= ym && ym >= ys && ys >= yc;
    let missed: usize = (0..n)
        .filter(|&k| {
            [Resolution::Substring, Resolution::Module, Resolution::String]
                .iter()
                .any(|&l| rep.bypass_disagreements(l, k) > 0)
        })
        .count();

    let control = compare_resolutions_prepared(&uniform.sim, &uniform.inputs, &Resolution::ALL).unwrap();
    let base = control.reference.yields.y_cum;
    let worst = Resolution::ALL
        .iter()
        .map(|&l| (control.run(l).unwrap().yields.y_cum / base - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        !shaded.is_empty() && violations == 0 && ordered && missed > 0 && worst <= 0.005,
        format!(
            "{} shaded steps, {violations} OPP violations; yield Wh cell {yc:.1} <= substring {ys:.1} <= module {ym:.1} <= string {yst:.1}: {ordered}; \
             steps with a missed bypass state: {missed}; uniform control max deviation {:.3}%",
            shaded.len(),
            100.0 * worst
        ),
    )
}

// 6. optimizer behaviour
fn optimizer_behaviour() -> Outcome {
    let spec = lookup_module_spec(GERMAN).unwrap();
    let params = calibrate_two_diode(&spec).unwrap();
    let opts = CellCurveOptions { n_points: 160, reverse_voltage: 20.0 * 0.75 + VF };
    let curve_at = |e: f64| cell_iv_curve(&operating_params(&params, &spec, e, T_STC).unwrap(), &opts).unwrap();
    let (lit, dim) = (curve_at(1000.0), curve_at(200.0));
    let grid = current_grid(lit.i_max(), 1001);
    let module = |subs: [&IvCurve; 3]| {
        let s: Vec<IvCurve> = subs.iter().map(|c| series_combine(&vec![(*c).clone(); 20], &grid).unwrap()).collect();
        module_curve_with_bypass(&s, VF, &grid).unwrap().curve
    };
    let healthy = module([&lit, &lit, &lit]);
    // first module evenly under heavy shade, so its MPP sits at low current
    let shaded = module([&dim, &dim, &dim]);
    let opt_spec = OptimizerSpec::<f64>::default();
    let optimize = |c: &IvCurve| build_optimized_curve(c, &opt_spec, &grid).unwrap();

    let mut plain_b = vec![healthy.clone(); 4];
    plain_b[0] = shaded.clone();
    let plain_a = vec![healthy.clone(); 4];
    let opt_b: Vec<IvCurve> = plain_b.iter().map(optimize).collect();
    let opt_a: Vec<IvCurve> = plain_a.iter().map(optimize).collect();
    let s_plain = [string_curve(&plain_a, &grid).unwrap(), string_curve(&plain_b, &grid).unwrap()];
    let s_opt = [string_curve(&opt_a, &grid).unwrap(), string_curve(&opt_b, &grid).unwrap()];
    let string_gain = find_mpp(&s_opt[1]).p - find_mpp(&s_plain[1]).p;
    let sys_opp = |strings: &[IvCurve]| {
        let op = operating_points(Architecture::CentralInverter, strings).unwrap();
        let v = op.v_system.unwrap();
        op.string_currents.iter().map(|i| i * v).sum::<f64>()
    };
    let system_gain = sys_opp(&s_opt) - sys_opp(&s_plain);

    let opt_shaded = &opt_b[0];
    let mpp = find_mpp(&shaded);
    let conductive_err = grid
        .iter()
        .filter(|&&i| i <= mpp.i)
        .map(|&i| (opt_shaded.voltage_at(i) - shaded.voltage_at(i)).abs())
        .fold(0.0, f64::max);

    let lossless = OptimizerSpec { loss: LossParams::lossless(), ..opt_spec };
    let ideal = build_optimized_curve(&shaded, &lossless, &grid).unwrap();
    // inside the duty bounds the string current is matched exactly
    let (lower, upper) = (mpp.i / lossless.d_max, (mpp.i / lossless.d_min).min(grid[grid.len() - 1]));
    let buck_err = grid
        .iter()
        .filter(|&&i| i >= lower && i <= upper)
        .map(|&i| (ideal.voltage_at(i) * i - mpp.p).abs() / mpp.p)
        .fold(0.0, f64::max);

    // reference buck point: 30.69 W at 23.7 V, string at 2.9 A
    let v_in = 23.7;
    let i_in = 30.69 / v_in;
    let fig = IvCurve::new(vec![(0.0, 1.4), (v_in, i_in), (30.0, 0.0)], CurveLevel::Module).unwrap();
    let out = optimizer_output(&find_mpp(&fig), 2.9, &opt_spec, &fig);
    let fig_ok = out.mode == Mode::Buck && (out.p_out - 30.23).abs() <= 0.05;

    check(
        string_gain > 0.0 && system_gain > 0.0 && conductive_err <= 1e-9 && buck_err <= 1e-12 && fig_ok,
        format!(
            "string OPP gain {string_gain:.2} W, system OPP gain {system_gain:.2} W; conductive branch max |dV| {conductive_err:.1e} V; \
             lossless buck max rel. power error {buck_err:.1e}; reference buck point {:.2} W in -> {:.3} W out ({})",
            out.v_in * out.i_in,
            out.p_out,
            out.mode.as_str()
        ),
    )
}

// 7. architecture dominance
fn architecture_dominance(scenes: &[&Scene]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for sc in scenes {
        let rep = compare_architectures_prepared(&sc.sim, &sc.inputs, &Architecture::ALL).unwrap();
        let cp_total = sc.sim.optimizer().loss.control_power * sc.sim.topology().total_modules() as f64;
        let run = |a| &rep.run(a).unwrap().results;
        let (central, string, opt, micro) = (
            run(Architecture::CentralInverter),
            run(Architecture::StringInverter),
            run(Architecture::Optimizers),
            run(Architecture::Microinverters),
        );
        let mut bad = [0usize; 3];
        let mut worst = [0.0f64; 3];
        for k in 0..rep.timestamps.len() {
            let (c, s, o, m) = (central[k].system.p, string[k].system.p, opt[k].system.p, micro[k].system.p);
            // floating-point roundoff of the power sums
            let eps = 1e-9 * m.abs().max(1.0);
            for (j, (hi, lo, slack)) in [(m, o, 0.0), (o, s, -cp_total), (s, c, 0.0)].into_iter().enumerate() {
                let gap = hi - lo - slack;
                if gap < -eps {
                    bad[j] += 1;
                    worst[j] = worst[j].min(gap);
                }
            }
        }
        ok &= bad.iter().all(|&b| b == 0);
        lines.push(format!(
            "{}: {} steps, violations micro>=opt {} opt>=string-cp {} (worst {:.2e} W) string>=central {}",
            sc.name,
            rep.timestamps.len(),
            bad[0],
            bad[1],
            worst[1],
            bad[2]
        ));
    }
    check(ok, lines.join("; "))
}

// 8. thermal model
fn thermal_properties() -> Outcome {
    let still = ThermalModel::new(ThermalParams::<f64> { sky: SkyTemperature::Ambient, ..Default::default() }).unwrap();
    let mut worst_zero = 0.0_f64;
    for (ta, wind) in [(263.15, 0.0), (288.15, 2.0), (308.15, 6.0)] {
        let env = ThermalEnv { e_eff: 0.0, temp_air: ta, wind_speed: wind };
        worst_zero = worst_zero.max((still.steady_state(&env).unwrap() - ta).abs());
    }
    let model = ThermalModel::new(ThermalParams::<f64>::default()).unwrap();
    let env = ThermalEnv { e_eff: 800.0, temp_air: 293.15, wind_speed: 1.0 };
    let ss = model.steady_state(&env).unwrap();
    let residual = model.balance(ss, &env).0.abs();
    let mut tc = 298.15;
    let mut monotone = true;
    let mut prev_gap = (tc - ss).abs();
    for _ in 0..720 {
        let next = model.step(tc, &env, 60.0).unwrap();
        let gap = (next - ss).abs();
        monotone &= next >= tc && gap <= prev_gap;
        tc = next;
        prev_gap = gap;
    }
    check(
        worst_zero <= 0.01 && monotone && prev_gap < 0.1 && residual < 1e-6,
        format!(
            "zero-irradiance steady state within {worst_zero:.1e} K of Ta; step response monotone {monotone}, \
             final gap {prev_gap:.2e} K; steady-state residual {residual:.1e} W/m2"
        ),
    )
}

// 9. energy arithmetic
fn energy_exact() -> Outcome {
    let t0 = Utc.with_ymd_and_hms(2022, 6, 21, 0, 0, 0).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for (p, n, dt) in [(900.0, 1440usize, 60.0), (1234.5, 96, 900.0), (4000.0, 24, 3600.0)] {
        let ts: Vec<_> = (0..n).map(|k| t0 + TimeDelta::seconds((k as f64 * dt) as i64)).collect();
        let ys = YieldSeries::from_power(ts, vec![p; n], dt).unwrap();
        let expected = n as f64 * p * dt / 3600.0;
        let exact = ys.y_cum == expected;
        let additive = (1..n).all(|cut| ys.cumulative_between(0..cut) + ys.cumulative_between(cut..n) == ys.y_cum);
        ok &= exact && additive;
        lines.push(format!("{n} x {p} W x {dt} s = {} Wh (exact {exact}, additive {additive})", ys.y_cum));
    }
    check(ok, lines.join("; "))
}

// 10. performance and determinism
fn performance() -> Outcome {
    let s = scenario(12, 2, DORMER);
    let weather = clear_day();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let start = Instant::now();
    let single = pool(1).install(|| {
        let sim = Simulator::new(&s).unwrap();
        sim.run_period(&weather, Architecture::StringInverter, Resolution::Cell).unwrap()
    });
    let t = start.elapsed();
    let multi = pool(4).install(|| {
        let sim = Simulator::new(&s).unwrap();
        sim.run_period(&weather, Architecture::StringInverter, Resolution::Cell).unwrap()
    });
    let same = single.yields.quanta == multi.yields.quanta
        && single
            .results
            .iter()
            .zip(&multi.results)
            .all(|(a, b)| a.system.p.to_bits() == b.system.p.to_bits() && a.tc == b.tc);
    let cells = single.results[0].e_eff.len();
    check(
        t < Duration::from_secs(60) && same && cells == 24 * 60,
        format!(
            "{cells} cells x {} steps in {:.2} s on one thread; identical across 1 and 4 threads: {same}",
            weather.len(),
            t.as_secs_f64()
        ),
    )
}

fn main() {
    let weather = clear_day();
    let scenes = std::cell::OnceCell::new();
    let scenes = || {
        scenes.get_or_init(|| {
            (
                scene("dormer", scenario(12, 2, DORMER), &weather),
                scene("uniform", scenario(12, 2, ""), &weather),
                scene("pole", scenario(6, 2, POLE), &weather),
            )
        })
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("STC round trip", Box::new(stc_round_trip)),
        ("datasheet and ideality tables", Box::new(tables_exact)),
        ("Kirchhoff oracle", Box::new(kirchhoff_oracle)),
        ("bypass reproduction", Box::new(bypass_reproduction)),
        ("resolution overestimation", Box::new(|| {
            let (d, u, _) = scenes();
            resolution_direction(d, u)
        })),
        ("optimizer behaviour", Box::new(optimizer_behaviour)),
        ("architecture dominance", Box::new(|| {
            let (d, u, p) = scenes();
            architecture_dominance(&[d, u, p])
        })),
        ("thermal properties", Box::new(thermal_properties)),
        ("energy arithmetic", Box::new(energy_exact)),
        ("performance envelope", Box::new(performance)),
    ];

    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
