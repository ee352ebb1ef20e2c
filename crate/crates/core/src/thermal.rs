//! Transient cell temperature from a module energy balance.
//!
//! Convective loss, two-sided long-wave exchange with sky and ground, and
//! absorbed irradiance are balanced against the module's thermal mass:
//!
//! `hc (Tc - Ta) + eps sigma [(Tc^4 - Ts^4) + (Tc^4 - Tg^4)] - alpha E + mc dTc/dt = 0`
//!
//! `hc` is calibrated so that the installed nominal operating cell
//! temperature (INOCT) is the steady state at 800 W/m², 20 °C, 1 m/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{decreasing_root, Real};

pub const STEFAN_BOLTZMANN: f64 = 5.67e-8;
pub const KELVIN: f64 = 273.15;

const INOCT_IRRADIANCE: f64 = 800.0;
const INOCT_AIR_K: f64 = 293.15;
const INOCT_WIND: f64 = 1.0;
const STEP_TOL_K: f64 = 1e-4;
const STEP_MAX_ITER: usize = 50;

/// How the sky temperature is derived from air temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SkyTemperature {
    /// `Ts = 0.0552 Ta^1.5`
    #[default]
    Swinbank,
    /// `Ts = Ta`
    Ambient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams<T> {
    /// Installed nominal operating cell temperature, °C.
    pub inoct: T,
    pub emissivity: T,
    /// Net thermal absorptivity (optical absorption less electrical output).
    pub absorptivity: T,
    /// Thermal mass per unit area, J/(m²·K).
    pub thermal_mass: T,
    /// Mounting height above ground, m; scales the weather-station wind.
    pub mount_height: T,
    pub sky: SkyTemperature,
}

impl<T: Real> Default for ThermalParams<T> {
    fn default() -> Self {
        Self {
            inoct: T::lit(48.0),
            emissivity: T::lit(0.84),
            absorptivity: T::lit(0.83),
            thermal_mass: T::lit(11000.0),
            mount_height: T::lit(5.0),
            sky: SkyTemperature::Swinbank,
        }
    }
}

impl<T: Real> ThermalParams<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let one = T::one();
        if !(self.emissivity > z && self.emissivity <= one) {
            return Err(Error::Config("emissivity must lie in (0, 1]".into()));
        }
        if !(self.absorptivity > z && self.absorptivity <= one) {
            return Err(Error::Config("absorptivity must lie in (0, 1]".into()));
        }
        if !(self.thermal_mass > z) {
            return Err(Error::Config("thermal_mass must be positive".into()));
        }
        if !(self.mount_height > z) {
            return Err(Error::Config("mount_height must be positive".into()));
        }
        Ok(())
    }
}

/// Weather seen by the module at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalEnv<T> {
    /// Effective irradiance, W/m².
    pub e_eff: T,
    /// Air temperature, K.
    pub temp_air: T,
    /// Wind speed at the weather station, m/s.
    pub wind_speed: T,
}

/// Energy-balance model with its convective coefficient calibrated.
#[derive(Debug, Clone, Copy)]
pub struct ThermalModel<T> {
    params: ThermalParams<T>,
    hc_inoct: T,
}

impl<T: Real> ThermalModel<T> {
    pub fn new(params: ThermalParams<T>) -> Result<Self> {
        params.validate()?;
        let mut model = Self { params, hc_inoct: T::one() };
        let tc = params.inoct + T::lit(KELVIN);
        let ta = T::lit(INOCT_AIR_K);
        if !(tc > ta) {
            return Err(Error::Config("inoct must exceed 20 °C".into()));
        }
        let env = ThermalEnv { e_eff: T::lit(INOCT_IRRADIANCE), temp_air: ta, wind_speed: T::lit(INOCT_WIND) };
        let radiative = model.radiative_loss(tc, ta);
        let hc = (params.absorptivity * env.e_eff - radiative) / (tc - ta);
        if !(hc > T::zero()) {
            return Err(Error::Config(format!(
                "inoct {} °C is not reachable by convection with these optical parameters",
                params.inoct
            )));
        }
        model.hc_inoct = hc;
        Ok(model)
    }

    pub fn params(&self) -> &ThermalParams<T> {
        &self.params
    }

    pub fn sky_temperature(&self, ta: T) -> T {
        match self.params.sky {
            SkyTemperature::Swinbank => T::lit(0.0552) * ta.powf(T::lit(1.5)),
            SkyTemperature::Ambient => ta,
        }
    }

    fn radiative_loss(&self, tc: T, ta: T) -> T {
        let ts = self.sky_temperature(ta);
        let tg = ta;
        let tc4 = tc.powi(4);
        self.params.emissivity * T::lit(STEFAN_BOLTZMANN) * ((tc4 - ts.powi(4)) + (tc4 - tg.powi(4)))
    }

    /// Mixed free/forced convection coefficient, W/(m²·K).
    pub fn convection(&self, wind_speed: T) -> T {
        let profile = (self.params.mount_height / T::lit(10.0)).powf(T::lit(0.2));
        let shape = |w: T| T::lit(5.7) + T::lit(3.8) * w.max(T::zero()) * profile;
        self.hc_inoct * shape(wind_speed) / shape(T::lit(INOCT_WIND))
    }

    /// Static balance residual (W/m²) and its derivative in `tc`.
    pub fn balance(&self, tc: T, env: &ThermalEnv<T>) -> (T, T) {
        let hc = self.convection(env.wind_speed);
        let r = hc * (tc - env.temp_air) + self.radiative_loss(tc, env.temp_air) - self.params.absorptivity * env.e_eff;
        let dr = hc + T::lit(8.0) * self.params.emissivity * T::lit(STEFAN_BOLTZMANN) * tc.powi(3);
        (r, dr)
    }

    pub fn steady_state(&self, env: &ThermalEnv<T>) -> Result<T> {
        let lo = env.temp_air - T::lit(50.0);
        let hi = env.temp_air + T::lit(100.0);
        let (r_lo, _) = self.balance(lo, env);
        let (r_hi, _) = self.balance(hi, env);
        if !(r_lo <= T::zero() && r_hi >= T::zero()) {
            return Err(Error::NoRootInBracket { lo: lo.as_f64(), hi: hi.as_f64() });
        }
        decreasing_root(
            |t| {
                let (r, dr) = self.balance(t, env);
                (-r, -dr)
            },
            lo,
            hi,
            T::lit(1e-12),
            200,
        )
        .ok_or(Error::NonConvergence { what: "steady-state temperature" })
    }

    /// One implicit (backward Euler) step of length `dt` seconds.
    pub fn step(&self, prev_tc: T, env: &ThermalEnv<T>, dt: T) -> Result<T> {
        if !(dt > T::zero()) {
            return Err(Error::InconsistentInputs(format!("thermal step dt = {dt} s")));
        }
        if !(prev_tc >= T::lit(150.0) && prev_tc <= T::lit(400.0)) {
            return Err(Error::InconsistentInputs(format!("previous cell temperature {prev_tc} K out of range")));
        }
        let inertia = self.params.thermal_mass / dt;
        let mut t = prev_tc;
        // Radiation is linearised about the current iterate; the convective
        // and storage terms are linear already.
        for _ in 0..STEP_MAX_ITER {
            let (r, dr) = self.balance(t, env);
            let g = inertia * (t - prev_tc) + r;
            let dg = inertia + dr;
            let delta = (g / dg).max(-T::lit(25.0)).min(T::lit(25.0));
            t = t - delta;
            if delta.abs() < T::lit(STEP_TOL_K) {
                return Ok(t);
            }
        }
        Err(Error::NonConvergence { what: "implicit thermal step" })
    }
}

pub fn fuentes_step<T: Real>(prev_tc: T, env: &ThermalEnv<T>, dt: T, params: &ThermalParams<T>) -> Result<T> {
    ThermalModel::new(*params)?.step(prev_tc, env, dt)
}

pub fn steady_state_temp<T: Real>(env: &ThermalEnv<T>, params: &ThermalParams<T>) -> Result<T> {
    ThermalModel::new(*params)?.steady_state(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ambient_params() -> ThermalParams<f64> {
        ThermalParams { sky: SkyTemperature::Ambient, ..ThermalParams::default() }
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = ambient_params();
        let env = ThermalEnv { e_eff: 0.0, temp_air: 290.0, wind_speed: 2.0 };
        let t = fuentes_step(290.0, &env, 60.0, &p).unwrap();
        assert!((t - 290.0).abs() < 1e-9);
    }

    #[test]
    fn dark_module_cools() {
        let p = ambient_params();
        let env = ThermalEnv { e_eff: 0.0, temp_air: 290.0, wind_speed: 2.0 };
        let t = fuentes_step(300.0, &env, 60.0, &p).unwrap();
        assert!(t < 300.0 && t > 290.0);
    }

    #[test]
    fn zero_forcing_steady_state_is_ambient() {
        let env = ThermalEnv { e_eff: 0.0, temp_air: 285.0, wind_speed: 1.0 };
        let t = steady_state_temp(&env, &ambient_params()).unwrap();
        assert!((t - 285.0).abs() < 1e-6);
    }

    #[test]
    fn inoct_point_is_reproduced() {
        let p = ThermalParams::default();
        let env = ThermalEnv { e_eff: 800.0, temp_air: 293.15, wind_speed: 1.0 };
        let t = steady_state_temp(&env, &p).unwrap();
        assert!((t - (48.0 + KELVIN)).abs() < 2.0, "{t}");
    }

    #[test]
    fn monotone_in_forcing() {
        let m = ThermalModel::new(ThermalParams::<f64>::default()).unwrap();
        let base = ThermalEnv { e_eff: 400.0, temp_air: 293.15, wind_speed: 2.0 };
        let t0 = m.steady_state(&base).unwrap();
        assert!(m.steady_state(&ThermalEnv { e_eff: 800.0, ..base }).unwrap() > t0);
        assert!(m.steady_state(&ThermalEnv { temp_air: 300.0, ..base }).unwrap() > t0);
        assert!(m.steady_state(&ThermalEnv { wind_speed: 5.0, ..base }).unwrap() < t0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ThermalParams::<f64>::default();
        let env = ThermalEnv { e_eff: 0.0, temp_air: 290.0, wind_speed: 1.0 };
        assert!(fuentes_step(290.0, &env, 0.0, &p).is_err());
        assert!(fuentes_step(100.0, &env, 60.0, &p).is_err());
        assert!(ThermalModel::new(ThermalParams { emissivity: 1.5, ..p }).is_err());
    }
}
