//! Two-diode equivalent circuit: datasheet calibration and IV solves.
//!
//! Calibration works on per-cell quantities. Datasheet voltages, `beta_voc`
//! and the series/shunt resistances are divided by `cells_in_series`; the
//! module-level values are what [`TwoDiodeParams`] reports.

use crate::curve::{CurveLevel, IvCurve};
use crate::error::{Error, Result};
use crate::module_db::{lookup_ideality_factors, ModuleSpec};
use crate::num::{decreasing_root, linspace, Real};

pub const BOLTZMANN: f64 = 1.380_648_52e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const T_STC: f64 = 298.15;
pub const E_STC: f64 = 1000.0;

/// Stop rule of the Rs/Rsh calibration: relative STC MPP error.
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

const SOLVE_TOL: f64 = 1e-13;
const SOLVE_MAX_ITER: usize = 200;
/// Forward extent sampled for a dark cell, volts.
const DARK_FORWARD_EXTENT: f64 = 0.5;

/// Calibrated equivalent-circuit parameters of one module.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoDiodeParams<T> {
    /// Series resistance of the whole module, ohms.
    pub rs: T,
    /// Shunt resistance of the whole module, ohms.
    pub rsh: T,
    pub n1: T,
    pub n2: T,
    /// Per-cell saturation currents at STC, amperes.
    pub isat1_stc: T,
    pub isat2_stc: T,
    /// Relative STC MPP error left when the calibration stopped.
    pub calibration_mpp_error: T,
    pub iterations: usize,
}

/// Per-cell circuit parameters at one irradiance and temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingDiodeParams<T> {
    pub iph: T,
    pub isat1: T,
    pub isat2: T,
    pub vt: T,
    pub rs: T,
    pub rsh: T,
    pub n1: T,
    pub n2: T,
    pub tc: T,
    pub e_eff: T,
}

pub fn thermal_voltage<T: Real>(tc: T) -> Result<T> {
    if !(tc > T::zero()) || !tc.is_finite() {
        return Err(Error::InconsistentInputs(format!("cell temperature must be positive, got {tc} K")));
    }
    Ok(T::lit(BOLTZMANN) * tc / T::lit(ELEMENTARY_CHARGE))
}

/// Saturation current shared by both diodes.
///
/// Sized so that, at STC irradiance and temperature `tc`, the cell reaches
/// open circuit exactly at the temperature-corrected Voc: the two diodes
/// together carry the photocurrent not lost in the shunt.
fn shared_saturation<T: Real>(isc_t: T, voc_t: T, rsh: T, n1: T, n2: T, vt: T) -> T {
    let denom = (voc_t / (n1 * vt)).exp_m1() + (voc_t / (n2 * vt)).exp_m1();
    (isc_t - voc_t / rsh) / denom
}

struct CellStc<T> {
    isc: T,
    voc: T,
    imp: T,
    vmp: T,
    alpha: T,
    beta: T,
    cells: T,
}

impl<T: Real> CellStc<T> {
    fn from_spec(spec: &ModuleSpec<T>) -> Self {
        let cells = T::from_usize_lossy(spec.cells_in_series);
        Self {
            isc: spec.isc_stc,
            voc: spec.voc_stc / cells,
            imp: spec.imp_stc,
            vmp: spec.vmp_stc / cells,
            alpha: spec.alpha_isc,
            beta: spec.beta_voc / cells,
            cells,
        }
    }
}

fn stc_operating<T: Real>(cell: &CellStc<T>, rs_cell: T, rsh_cell: T, n1: T, n2: T) -> Result<OperatingDiodeParams<T>> {
    let tc = T::lit(T_STC);
    let vt = thermal_voltage(tc)?;
    let isat = shared_saturation(cell.isc, cell.voc, rsh_cell, n1, n2, vt);
    if !(isat > T::zero()) {
        return Err(Error::NegativeRsh { rs: (rs_cell * cell.cells).as_f64() });
    }
    Ok(OperatingDiodeParams {
        iph: cell.isc,
        isat1: isat,
        isat2: isat,
        vt,
        rs: rs_cell,
        rsh: rsh_cell,
        n1,
        n2,
        tc,
        e_eff: T::lit(E_STC),
    })
}

/// Maximum of `v * i(v)` on `[0, voc]` by golden-section search.
pub fn cell_max_power<T: Real>(op: &OperatingDiodeParams<T>) -> Result<(T, T, T)> {
    let voc = solve_cell_voltage(op, T::zero())?;
    if !(voc > T::zero()) {
        return Ok((T::zero(), T::zero(), T::zero()));
    }
    let power = |v: T| -> Result<T> { Ok(v * solve_cell_current(op, v)?) };
    let ratio = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (T::zero(), voc);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (power(c)?, power(d)?);
    for _ in 0..120 {
        if (b - a) <= T::epsilon() * voc {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = power(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = power(d)?;
        }
    }
    let v = (a + b) / T::lit(2.0);
    let i = solve_cell_current(op, v)?;
    Ok((v, i, v * i))
}

/// Calibrates Rs and Rsh against the datasheet maximum power point.
///
/// Rs starts at zero with Rsh from the datasheet slope estimate, then grows
/// by `voc / (isc * 1e4)` per iteration while Rsh is re-derived from the
/// condition that the curve passes through `(vmp, imp)`. Stops once the
/// model's STC MPP is within [`CALIBRATION_TOLERANCE`] of `vmp * imp`.
pub fn calibrate_two_diode<T: Real>(spec: &ModuleSpec<T>) -> Result<TwoDiodeParams<T>> {
    spec.validate()?;
    let cell = CellStc::from_spec(spec);
    let (n1, n2) = lookup_ideality_factors(spec.module_type, T::lit(E_STC));
    let vt = thermal_voltage(T::lit(T_STC))?;
    let p_ref = spec.pmp_stc();

    // Initial shunt resistance from the datasheet slopes (module level).
    let rsh0 = spec.vmp_stc / (spec.isc_stc - spec.imp_stc) - (spec.voc_stc - spec.vmp_stc) / spec.imp_stc;
    if !rsh0.is_finite() {
        return Err(Error::CalibrationDiverged { rs: 0.0, mpp_error: f64::INFINITY });
    }
    if !(rsh0 > T::zero()) {
        return Err(Error::NegativeRsh { rs: 0.0 });
    }

    let step = spec.voc_stc / (spec.isc_stc * T::lit(1e4));
    let rs_bound = T::lit(2.0) * (spec.voc_stc - spec.vmp_stc) / spec.imp_stc;
    let x_oc = |n: T| (cell.voc / (n * vt)).exp_m1();
    let shape_denom = x_oc(n1) + x_oc(n2);

    let mut rs = T::zero();
    let mut rsh = rsh0;
    let mut iteration = 0usize;
    loop {
        let op = stc_operating(&cell, rs / cell.cells, rsh / cell.cells, n1, n2)?;
        let (_, _, p_cell) = cell_max_power(&op)?;
        let err = (p_cell * cell.cells - p_ref) / p_ref;
        if err.abs() < T::lit(CALIBRATION_TOLERANCE) {
            return Ok(TwoDiodeParams {
                rs,
                rsh,
                n1,
                n2,
                isat1_stc: op.isat1,
                isat2_stc: op.isat2,
                calibration_mpp_error: err.abs(),
                iterations: iteration,
            });
        }
        iteration += 1;
        rs = T::from_usize_lossy(iteration) * step;
        if rs > rs_bound {
            return Err(Error::CalibrationDiverged { rs: rs.as_f64(), mpp_error: err.as_f64() });
        }
        // Shunt resistance that puts (vmp, imp) on the curve. The diode
        // currents scale with (isc - voc/rsh), which makes this linear in rsh.
        let rs_cell = rs / cell.cells;
        let vd = cell.vmp + cell.imp * rs_cell;
        let shape = ((vd / (n1 * vt)).exp_m1() + (vd / (n2 * vt)).exp_m1()) / shape_denom;
        let den = cell.isc * (T::one() - shape) - cell.imp;
        let rsh_cell = (vd - cell.voc * shape) / den;
        if !(den > T::zero()) || !(rsh_cell > T::zero()) {
            return Err(Error::NegativeRsh { rs: rs.as_f64() });
        }
        rsh = rsh_cell * cell.cells;
    }
}

/// Per-cell parameters at effective irradiance `e_eff` and cell temperature `tc`.
pub fn operating_params<T: Real>(
    params: &TwoDiodeParams<T>,
    spec: &ModuleSpec<T>,
    e_eff: T,
    tc: T,
) -> Result<OperatingDiodeParams<T>> {
    let vt = thermal_voltage(tc)?;
    let cell = CellStc::from_spec(spec);
    let e_eff = e_eff.max(T::zero());
    let dt = tc - T::lit(T_STC);
    let isc_t = cell.isc + cell.alpha * dt;
    let voc_t = cell.voc + cell.beta * dt;
    let (n1, n2) = lookup_ideality_factors(spec.module_type, e_eff);
    let rs = params.rs / cell.cells;
    let rsh = params.rsh / cell.cells;
    let isat = shared_saturation(isc_t, voc_t, rsh, n1, n2, vt);
    if !(isat > T::zero()) || !(voc_t > T::zero()) {
        return Err(Error::InconsistentInputs(format!("no valid saturation current at tc = {tc} K")));
    }
    Ok(OperatingDiodeParams {
        iph: (isc_t * e_eff / T::lit(E_STC)).max(T::zero()),
        isat1: isat,
        isat2: isat,
        vt,
        rs,
        rsh,
        n1,
        n2,
        tc,
        e_eff,
    })
}

/// Residual of the implicit two-diode relation and its derivative in `i`.
pub fn two_diode_residual<T: Real>(op: &OperatingDiodeParams<T>, v: T, i: T) -> (T, T) {
    let vd = v + i * op.rs;
    let a1 = op.n1 * op.vt;
    let a2 = op.n2 * op.vt;
    let e1 = (vd / a1).exp();
    let e2 = (vd / a2).exp();
    let f = op.iph - op.isat1 * (vd / a1).exp_m1() - op.isat2 * (vd / a2).exp_m1() - vd / op.rsh - i;
    let g_diode = op.isat1 * e1 / a1 + op.isat2 * e2 / a2 + T::one() / op.rsh;
    (f, -(T::one() + op.rs * g_diode))
}

/// Terminal current of one cell at voltage `v`.
pub fn solve_cell_current<T: Real>(op: &OperatingDiodeParams<T>, v: T) -> Result<T> {
    let lo = -T::lit(0.1) * op.iph - T::one();
    let hi = op.iph + T::one();
    decreasing_root(|i| two_diode_residual(op, v, i), lo, hi, T::lit(SOLVE_TOL), SOLVE_MAX_ITER)
        .ok_or(Error::NonConvergence { what: "cell current solve" })
}

/// Terminal voltage of one cell carrying current `i`.
///
/// The relation is explicit in the junction voltage `v + i rs`, so this is a
/// single monotone root search.
pub fn solve_cell_voltage<T: Real>(op: &OperatingDiodeParams<T>, i: T) -> Result<T> {
    let a1 = op.n1 * op.vt;
    let a2 = op.n2 * op.vt;
    let g = |vd: T| {
        let f = op.iph - op.isat1 * (vd / a1).exp_m1() - op.isat2 * (vd / a2).exp_m1() - vd / op.rsh - i;
        let df = -(op.isat1 * (vd / a1).exp() / a1 + op.isat2 * (vd / a2).exp() / a2 + T::one() / op.rsh);
        (f, df)
    };
    let vd = decreasing_root(g, -T::one(), T::one(), T::lit(1e-15), SOLVE_MAX_ITER)
        .ok_or(Error::NonConvergence { what: "cell voltage solve" })?;
    Ok(vd - i * op.rs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCurveOptions<T> {
    /// Total sample budget; at least 16.
    pub n_points: usize,
    /// Magnitude of the most negative sampled voltage, volts.
    pub reverse_voltage: T,
}

impl<T: Real> Default for CellCurveOptions<T> {
    fn default() -> Self {
        Self { n_points: 160, reverse_voltage: T::lit(2.0) }
    }
}

/// Samples the cell characteristic from `-reverse_voltage` up to Voc.
///
/// Samples are placed uniformly in voltage on the reverse and forward
/// branches and uniformly in current between short and open circuit, so the
/// knee is resolved along both axes.
pub fn cell_iv_curve<T: Real>(op: &OperatingDiodeParams<T>, options: &CellCurveOptions<T>) -> Result<IvCurve<T>> {
    if options.n_points < 16 {
        return Err(Error::InconsistentInputs(format!("n_points = {} < 16", options.n_points)));
    }
    let n = options.n_points;
    let n_rev = (n / 8).max(4);
    let n_cur = if op.iph > T::zero() { (n - n_rev) / 2 } else { 0 };
    let n_fwd = n - n_rev - n_cur;

    let voc = if op.iph > T::zero() { solve_cell_voltage(op, T::zero())? } else { T::lit(DARK_FORWARD_EXTENT) };
    let mut pts: Vec<(T, T)> = Vec::with_capacity(n + 1);
    let rev = linspace(-options.reverse_voltage.abs(), T::zero(), n_rev + 1);
    for &v in &rev[..n_rev] {
        pts.push((v, solve_cell_current(op, v)?));
    }
    for v in linspace(T::zero(), voc, n_fwd) {
        pts.push((v, solve_cell_current(op, v)?));
    }
    if n_cur > 0 {
        let isc = solve_cell_current(op, T::zero())?;
        let grid = linspace(T::zero(), isc, n_cur + 2);
        for &i in &grid[1..=n_cur] {
            pts.push((solve_cell_voltage(op, i)?, i));
        }
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite voltages").then(b.1.partial_cmp(&a.1).expect("finite")));
    IvCurve::from_voltage_samples(&pts, CurveLevel::Cell)
}
