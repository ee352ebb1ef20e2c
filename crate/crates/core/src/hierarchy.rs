//! Series and parallel aggregation of IV curves: cells into substrings,
//! substrings into modules behind bypass diodes, modules into strings and
//! strings into the system.

use crate::curve::{CurveLevel, IvCurve};
use crate::error::{Error, Result};
use crate::mlpe::OptimizerSpec;
use crate::num::{linspace, Real};

pub const DEFAULT_BYPASS_VF: f64 = 0.7;
pub const DEFAULT_GRID_POINTS: usize = 1001;
/// Current grids extend this far beyond the largest member short-circuit current.
pub const GRID_HEADROOM: f64 = 1.05;

/// Power electronics attached to one module.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MlpeAttachment<T> {
    #[default]
    None,
    Optimizer(OptimizerSpec<T>),
    Microinverter,
}

/// Electrical layout: `strings` parallel strings of `modules_per_string`
/// modules, each with `substrings_per_module` bypass-protected substrings of
/// `cells_per_substring` cells.
///
/// Cells are numbered string-major: string, module, substring, cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTopology<T> {
    pub cells_per_substring: usize,
    pub substrings_per_module: usize,
    pub modules_per_string: usize,
    pub strings: usize,
    pub bypass_vf: T,
    /// One entry per module; empty means no attachments.
    pub mlpe: Vec<MlpeAttachment<T>>,
}

impl<T: Real> SystemTopology<T> {
    pub fn new(cells_per_substring: usize, substrings_per_module: usize, modules_per_string: usize, strings: usize) -> Self {
        Self {
            cells_per_substring,
            substrings_per_module,
            modules_per_string,
            strings,
            bypass_vf: T::lit(DEFAULT_BYPASS_VF),
            mlpe: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_substring == 0 || self.substrings_per_module == 0 || self.modules_per_string == 0 || self.strings == 0 {
            return Err(Error::Config("topology counts must all be at least 1".into()));
        }
        if !(self.bypass_vf > T::zero()) {
            return Err(Error::Config("bypass_vf must be positive".into()));
        }
        if !self.mlpe.is_empty() && self.mlpe.len() != self.total_modules() {
            return Err(Error::TopologyMismatch(format!(
                "{} MLPE entries for {} modules",
                self.mlpe.len(),
                self.total_modules()
            )));
        }
        for a in &self.mlpe {
            if let MlpeAttachment::Optimizer(spec) = a {
                spec.validate()?;
            }
        }
        Ok(())
    }

    pub fn cells_per_module(&self) -> usize {
        self.cells_per_substring * self.substrings_per_module
    }

    pub fn cells_per_string(&self) -> usize {
        self.cells_per_module() * self.modules_per_string
    }

    pub fn total_modules(&self) -> usize {
        self.modules_per_string * self.strings
    }

    pub fn total_substrings(&self) -> usize {
        self.total_modules() * self.substrings_per_module
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_string() * self.strings
    }

    pub fn attachment(&self, module: usize) -> Option<&MlpeAttachment<T>> {
        self.mlpe.get(module)
    }
}

/// Bypass diode activation per substring at one module current.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BypassState {
    pub flags: Vec<bool>,
}

impl BypassState {
    pub fn active_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Flags as a string of `0`/`1`, first substring first.
    pub fn to_bits(&self) -> String {
        self.flags.iter().map(|&f| if f { '1' } else { '0' }).collect()
    }
}

/// Linear current grid from zero to `GRID_HEADROOM * i_top`.
pub fn current_grid<T: Real>(i_top: T, n: usize) -> Vec<T> {
    linspace(T::zero(), i_top * T::lit(GRID_HEADROOM), n.max(2))
}

fn next_level(level: CurveLevel) -> CurveLevel {
    match level {
        CurveLevel::Cell => CurveLevel::Substring,
        CurveLevel::Module | CurveLevel::OptimizedModule => CurveLevel::String,
        other => other,
    }
}

/// Grid currents in `[0, limit]`, with `limit` appended when it falls between samples.
fn clip_grid<T: Real>(grid: &[T], limit: T) -> Vec<T> {
    let mut out: Vec<T> = grid.iter().copied().filter(|&i| i >= T::zero() && i <= limit).collect();
    if out.last().is_some_and(|&last| last < limit) && grid.iter().any(|&i| i > limit) {
        out.push(limit);
    }
    out
}

/// Series connection: voltages add at common current.
///
/// The result covers grid currents up to the smallest member `i_max`.
pub fn series_combine<T: Real>(curves: &[IvCurve<T>], i_grid: &[T]) -> Result<IvCurve<T>> {
    let first = curves.first().ok_or(Error::EmptyInput)?;
    let limit = curves.iter().map(IvCurve::i_max).fold(T::infinity(), T::min);
    let grid = clip_grid(i_grid, limit);
    if grid.len() < 2 {
        return Err(Error::InvalidCurve("current grid does not overlap the member curves".into()));
    }
    let mut v = vec![T::zero(); grid.len()];
    for c in curves {
        for (acc, x) in v.iter_mut().zip(c.voltages_at(&grid)) {
            *acc = *acc + x;
        }
    }
    let samples: Vec<(T, T)> = grid.into_iter().zip(v).collect();
    IvCurve::from_current_samples(&samples, next_level(first.level))
}

/// A module curve together with the bypass decisions behind it.
#[derive(Debug, Clone)]
pub struct ModuleContext<T> {
    pub curve: IvCurve<T>,
    grid: Vec<T>,
    /// Module voltage at every grid current.
    voltages: Vec<T>,
    /// `grid.len() * substrings` activation flags, row-major by grid point.
    flags: Vec<bool>,
    substrings: usize,
}

impl<T: Real> ModuleContext<T> {
    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn grid_voltages(&self) -> &[T] {
        &self.voltages
    }

    pub fn substrings(&self) -> usize {
        self.substrings
    }

    fn flags_at(&self, k: usize) -> BypassState {
        BypassState { flags: self.flags[k * self.substrings..(k + 1) * self.substrings].to_vec() }
    }

    /// Activation flags at the grid current nearest `i`.
    pub fn bypass_state_at(&self, i: T) -> BypassState {
        let g = &self.grid;
        let k = g.partition_point(|&x| x < i);
        let k = if k == 0 {
            0
        } else if k == g.len() || (i - g[k - 1]) <= (g[k] - i) {
            k - 1
        } else {
            k
        };
        self.flags_at(k)
    }

    /// Builds the module from substring voltages sampled on `grid`.
    ///
    /// `i_max[s]` is the largest current substring `s` was characterised
    /// for; above it the substring can only be bypassed.
    pub fn from_substring_voltages(sub_v: &[Vec<T>], i_max: &[T], vf: T, grid: &[T]) -> Result<Self> {
        if sub_v.is_empty() {
            return Err(Error::EmptyInput);
        }
        let m = sub_v.len();
        let mut voltages = Vec::with_capacity(grid.len());
        let mut flags = Vec::with_capacity(grid.len() * m);
        for (k, &i) in grid.iter().enumerate() {
            let mut v = T::zero();
            for s in 0..m {
                let natural = if i <= i_max[s] { sub_v[s][k] } else { T::neg_infinity() };
                let bypassed = natural < -vf;
                flags.push(bypassed);
                v = v + if bypassed { -vf } else { natural };
            }
            voltages.push(v);
        }
        let samples: Vec<(T, T)> = grid.iter().copied().zip(voltages.iter().copied()).collect();
        let curve = IvCurve::from_current_samples(&samples, CurveLevel::Module)?;
        Ok(Self { curve, grid: grid.to_vec(), voltages, flags, substrings: m })
    }
}

/// Module curve with one bypass diode across each substring.
///
/// Each substring contributes `max(v_s(I), -vf)`; a substring whose natural
/// voltage would fall below `-vf` is flagged as bypassed. A fully bypassed
/// module sits at `-m vf` and carries any grid current.
pub fn module_curve_with_bypass<T: Real>(substring_curves: &[IvCurve<T>], vf: T, i_grid: &[T]) -> Result<ModuleContext<T>> {
    if substring_curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    let grid: Vec<T> = i_grid.iter().copied().filter(|&i| i >= T::zero()).collect();
    if grid.len() < 2 {
        return Err(Error::InvalidCurve("current grid needs at least two non-negative points".into()));
    }
    let sub_v: Vec<Vec<T>> = substring_curves.iter().map(|c| c.voltages_at(&grid)).collect();
    let i_max: Vec<T> = substring_curves.iter().map(IvCurve::i_max).collect();
    ModuleContext::from_substring_voltages(&sub_v, &i_max, vf, &grid)
}

/// Series connection of (bypass-extended) module curves.
pub fn string_curve<T: Real>(module_curves: &[IvCurve<T>], i_grid: &[T]) -> Result<IvCurve<T>> {
    let mut c = series_combine(module_curves, i_grid)?;
    c.level = CurveLevel::String;
    Ok(c)
}

/// Parallel connection: currents add at common voltage on `v_grid`.
pub fn system_curve_on<T: Real>(string_curves: &[IvCurve<T>], v_grid: &[T]) -> Result<IvCurve<T>> {
    if string_curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = common_voltage_domain(string_curves)?;
    let samples: Vec<(T, T)> = v_grid
        .iter()
        .copied()
        .filter(|&v| v >= lo && v <= hi)
        .map(|v| (v, string_curves.iter().map(|c| c.current_at(v)).sum()))
        .collect();
    IvCurve::from_voltage_samples(&samples, CurveLevel::System)
}

/// Parallel connection on the union of the strings' own sample voltages.
///
/// Every breakpoint of every member is a sample, so the sum is exact for
/// the piecewise-linear members.
pub fn system_curve<T: Real>(string_curves: &[IvCurve<T>]) -> Result<IvCurve<T>> {
    if string_curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = common_voltage_domain(string_curves)?;
    let mut grid: Vec<T> = string_curves
        .iter()
        .flat_map(|c| c.points().iter().map(|p| p.0))
        .filter(|&v| v > lo && v < hi)
        .collect();
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite voltages"));
    grid.dedup();
    system_curve_on(string_curves, &grid)
}

fn common_voltage_domain<T: Real>(curves: &[IvCurve<T>]) -> Result<(T, T)> {
    let lo = curves.iter().map(IvCurve::v_min).fold(T::neg_infinity(), T::max);
    let hi = curves.iter().map(IvCurve::v_max).fold(T::infinity(), T::min);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::NoDomainOverlap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `i = isc (1 - (v / voc)^4)` for v in [-2, voc], monotone.
    fn synthetic(isc: f64, voc: f64) -> IvCurve<f64> {
        let pts: Vec<(f64, f64)> = (0..=200)
            .map(|k| {
                let v = -2.0 + (voc + 2.0) * k as f64 / 200.0;
                let i = if v <= 0.0 { isc - 0.5 * v } else { isc * (1.0 - (v / voc).powi(4)) };
                (v, i)
            })
            .collect();
        IvCurve::new(pts, CurveLevel::Cell).unwrap()
    }

    #[test]
    fn identical_cells_double_voltage() {
        let c = synthetic(3.0, 0.6);
        let grid = current_grid(3.0, 301);
        let s = series_combine(&[c.clone(), c.clone()], &grid).unwrap();
        assert_eq!(s.level, CurveLevel::Substring);
        for &i in &[0.0, 1.0, 2.5] {
            assert!((s.voltage_at(i) - 2.0 * c.voltage_at(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn weakest_cell_limits_without_bypass() {
        let a = synthetic(1.0, 0.6);
        let b = synthetic(3.0, 0.6);
        let grid = current_grid(3.0, 1001);
        let s = series_combine(&[a, b], &grid).unwrap();
        // the weak cell goes into reverse bias just above its own isc
        let isc = s.isc();
        assert!(isc > 1.0 && isc < 1.5, "{isc}");
    }

    #[test]
    fn identical_substrings_never_bypass() {
        let c = synthetic(3.0, 12.0);
        let grid = current_grid(3.0, 101);
        let ctx = module_curve_with_bypass(&[c.clone(), c.clone(), c.clone()], 0.7, &grid).unwrap();
        for &i in &[grid[0], grid[40], grid[90]] {
            assert_eq!(ctx.bypass_state_at(i).active_count(), 0);
            assert!((ctx.curve.voltage_at(i) - 3.0 * c.voltage_at(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn weak_substring_bypasses() {
        let weak = synthetic(1.0, 12.0);
        let strong = synthetic(3.0, 12.0);
        let grid = current_grid(3.0, 1001);
        let ctx = module_curve_with_bypass(&[weak, strong.clone(), strong.clone()], 0.7, &grid).unwrap();
        let st = ctx.bypass_state_at(2.0);
        assert_eq!(st.flags, vec![true, false, false]);
        let expected = -0.7 + 2.0 * strong.voltage_at(2.0);
        assert!((ctx.curve.voltage_at(2.0) - expected).abs() < 1e-3);
    }

    #[test]
    fn system_sums_currents() {
        let a = synthetic(3.0, 30.0);
        let b = synthetic(2.0, 28.0);
        let sys = system_curve(&[a.clone(), b.clone()]).unwrap();
        for k in 0..50 {
            let v = -1.0 + k as f64 * 0.55;
            if v > 28.0 {
                break;
            }
            assert!((sys.current_at(v) - (a.current_at(v) + b.current_at(v))).abs() < 1e-9);
        }
        let far = synthetic(1.0, 0.5);
        let shifted = IvCurve::new(far.points().iter().map(|&(v, i)| (v + 100.0, i)).collect(), CurveLevel::String).unwrap();
        assert!(matches!(system_curve(&[a, shifted]), Err(Error::NoDomainOverlap)));
    }

    #[test]
    fn empty_inputs_rejected() {
        let grid = current_grid(1.0, 11);
        assert!(matches!(series_combine::<f64>(&[], &grid), Err(Error::EmptyInput)));
        assert!(matches!(module_curve_with_bypass::<f64>(&[], 0.7, &grid), Err(Error::EmptyInput)));
        assert!(matches!(system_curve::<f64>(&[]), Err(Error::EmptyInput)));
    }
}
