//! Module-level power electronics: buck power optimizers and microinverters.

use serde::{Deserialize, Serialize};

use crate::curve::{CurveLevel, IvCurve, PowerPoint};
use crate::error::{Error, Result};
use crate::num::Real;

/// Ripple current as a fraction of the output current.
pub const RIPPLE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Buck,
    Conductive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Buck => "buck",
            Mode::Conductive => "conductive",
        }
    }
}

/// Current at which an optimizer leaves pass-through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationPolicy {
    /// The module's own MPP current.
    #[default]
    MppCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams<T> {
    /// Switching loss per watt of input at unit duty.
    pub switch_coeff: T,
    /// Inductor and switch conduction resistance, ohms.
    pub conduction_r: T,
    pub capacitor_esr: T,
    /// Constant controller consumption, watts.
    pub control_power: T,
}

impl<T: Real> Default for LossParams<T> {
    fn default() -> Self {
        Self {
            switch_coeff: T::lit(0.0135),
            conduction_r: T::lit(0.02),
            capacitor_esr: T::lit(0.02),
            control_power: T::lit(0.1),
        }
    }
}

impl<T: Real> LossParams<T> {
    pub fn lossless() -> Self {
        Self { switch_coeff: T::zero(), conduction_r: T::zero(), capacitor_esr: T::zero(), control_power: T::zero() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec<T> {
    pub d_min: T,
    pub d_max: T,
    /// Output current limit, amperes.
    pub i_max: T,
    pub loss: LossParams<T>,
    pub i_activate_policy: ActivationPolicy,
}

impl<T: Real> Default for OptimizerSpec<T> {
    fn default() -> Self {
        Self {
            d_min: T::lit(0.1),
            d_max: T::lit(0.95),
            i_max: T::lit(15.0),
            loss: LossParams::default(),
            i_activate_policy: ActivationPolicy::MppCurrent,
        }
    }
}

impl<T: Real> OptimizerSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > T::zero() && self.d_min < self.d_max && self.d_max <= T::one()) {
            return Err(Error::Config("optimizer duty bounds must satisfy 0 < d_min < d_max <= 1".into()));
        }
        if !(self.i_max > T::zero()) {
            return Err(Error::Config("optimizer i_max must be positive".into()));
        }
        let l = &self.loss;
        if [l.switch_coeff, l.conduction_r, l.capacitor_esr, l.control_power].iter().any(|&x| !(x >= T::zero())) {
            return Err(Error::Config("optimizer loss parameters must be non-negative".into()));
        }
        Ok(())
    }

    pub fn activation_current(&self, mpp: &PowerPoint<T>) -> T {
        match self.i_activate_policy {
            ActivationPolicy::MppCurrent => mpp.i,
        }
    }
}

/// Buck when the string asks for more current than the activation threshold.
pub fn select_mode<T: Real>(i_demand: T, i_activate: T) -> Mode {
    if i_demand > i_activate {
        Mode::Buck
    } else {
        Mode::Conductive
    }
}

/// Impedance-matching duty `sqrt(r_mpp / r_in)` in buck; 1 in pass-through.
pub fn required_duty<T: Real>(r_in: T, r_mpp: T, mode: Mode) -> T {
    match mode {
        Mode::Buck => (r_mpp / r_in).sqrt(),
        Mode::Conductive => T::one(),
    }
}

pub fn clamp_duty<T: Real>(d_req: T, spec: &OptimizerSpec<T>) -> T {
    d_req.max(spec.d_min).min(spec.d_max)
}

/// Converter efficiency at input `(v_in, i_in)` and duty `d`.
pub fn converter_efficiency<T: Real>(v_in: T, i_in: T, d: T, loss: &LossParams<T>) -> T {
    let p_in = v_in * i_in;
    if !(p_in > T::zero()) || !(d > T::zero()) {
        return T::zero();
    }
    let i_out = i_in / d;
    let ripple = T::lit(RIPPLE_FRACTION) * i_out;
    let p_loss = loss.switch_coeff * p_in * d
        + loss.conduction_r * i_out * i_out
        + loss.capacitor_esr * ripple * ripple
        + loss.control_power;
    (T::one() - p_loss / p_in).max(T::zero()).min(T::one())
}

/// Operating point of one optimizer carrying string current `i_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOutput<T> {
    pub v_out: T,
    pub i_out: T,
    pub p_out: T,
    pub v_in: T,
    pub i_in: T,
    pub duty: T,
    pub mode: Mode,
    pub efficiency: T,
    /// The string asked for more than `i_max`.
    pub demand_infeasible: bool,
}

/// Power delivered by an optimizer in buck mode at string current `i`.
///
/// The duty follows from current matching, `d = i_mpp / i`, within the
/// hardware bounds; a clamped duty moves the module off its MPP.
fn buck_point<T: Real>(mpp: &PowerPoint<T>, i: T, spec: &OptimizerSpec<T>, curve: &IvCurve<T>) -> OptimizerOutput<T> {
    let d = clamp_duty(mpp.i / i, spec);
    let i_in = d * i;
    let v_in = if d * i == mpp.i { mpp.v } else { curve.voltage_at(i_in) };
    let p_in = v_in * i_in;
    let eta = converter_efficiency(v_in, i_in, d, &spec.loss);
    let mut p_out = (eta * p_in).max(T::zero());
    let infeasible = i > spec.i_max;
    if infeasible {
        p_out = p_out * spec.i_max / i;
    }
    OptimizerOutput {
        v_out: p_out / i,
        i_out: i,
        p_out,
        v_in,
        i_in,
        duty: d,
        mode: Mode::Buck,
        efficiency: eta,
        demand_infeasible: infeasible,
    }
}

/// Output of an optimizer in a string carrying `i_string`.
///
/// Pass-through reads the module off its own curve and costs only the
/// controller consumption; buck mode pins the module near its MPP.
pub fn optimizer_output<T: Real>(
    module_mpp: &PowerPoint<T>,
    i_string: T,
    spec: &OptimizerSpec<T>,
    module_curve: &IvCurve<T>,
) -> OptimizerOutput<T> {
    if !(i_string > T::zero()) {
        let v = module_curve.voltage_at(T::zero());
        return OptimizerOutput {
            v_out: v,
            i_out: T::zero(),
            p_out: T::zero(),
            v_in: v,
            i_in: T::zero(),
            duty: T::one(),
            mode: Mode::Conductive,
            efficiency: T::zero(),
            demand_infeasible: false,
        };
    }
    match select_mode(i_string, spec.activation_current(module_mpp)) {
        Mode::Buck => buck_point(module_mpp, i_string, spec, module_curve),
        Mode::Conductive => {
            let v = module_curve.voltage_at(i_string);
            let p_in = v * i_string;
            let p_out = (p_in - spec.loss.control_power).max(T::zero());
            OptimizerOutput {
                v_out: v,
                i_out: i_string,
                p_out,
                v_in: v,
                i_in: i_string,
                duty: T::one(),
                mode: Mode::Conductive,
                efficiency: if p_in > T::zero() { p_out / p_in } else { T::zero() },
                demand_infeasible: false,
            }
        }
    }
}

/// Optimizer output voltage at each current of an ascending grid.
pub fn optimized_voltages<T: Real>(module_curve: &IvCurve<T>, spec: &OptimizerSpec<T>, i_grid: &[T]) -> Vec<T> {
    let mpp = module_curve.max_power_point();
    let i_act = spec.activation_current(&mpp);
    let passthrough = module_curve.voltages_at(i_grid);
    i_grid
        .iter()
        .zip(passthrough)
        .map(|(&i, v)| match select_mode(i, i_act) {
            Mode::Conductive => v,
            Mode::Buck => buck_point(&mpp, i, spec, module_curve).v_out,
        })
        .collect()
}

/// Characteristic seen at the optimizer output terminals.
///
/// Up to the activation current it is the module's own curve; above it the
/// converter delivers (nearly) constant power `eta p_mpp`.
pub fn build_optimized_curve<T: Real>(module_curve: &IvCurve<T>, spec: &OptimizerSpec<T>, i_grid: &[T]) -> Result<IvCurve<T>> {
    let grid: Vec<T> = i_grid.iter().copied().filter(|&i| i >= T::zero()).collect();
    let v = optimized_voltages(module_curve, spec, &grid);
    let samples: Vec<(T, T)> = grid.into_iter().zip(v).collect();
    IvCurve::from_current_samples(&samples, CurveLevel::OptimizedModule)
}

/// DC power a microinverter extracts: the module MPP, or zero.
pub fn microinverter_harvest<T: Real>(module_curve: &IvCurve<T>) -> T {
    module_curve.max_power_point().p.max(T::zero())
}
