//! Angular response, per-cell irradiance fields and resolution averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::SystemTopology;
use crate::num::Real;

pub const SOLAR_CONSTANT: f64 = 1367.0;
pub const DEFAULT_ANGULAR_LOSS: f64 = 0.16;
/// Representative incidence angle for diffuse light, degrees.
pub const DIFFUSE_INCIDENCE: f64 = 60.0;

/// Martin–Ruiz angular response `K(theta)`, normalised to `K(0) = 1`.
pub fn angular_response<T: Real>(theta_deg: T, a_r: T) -> T {
    if theta_deg >= T::lit(90.0) {
        return T::zero();
    }
    let c = theta_deg.max(T::zero()).to_radians().cos();
    (-(c / a_r)).exp_m1() / (-(T::one() / a_r)).exp_m1()
}

/// `e_direct K(theta) + e_diffuse K(60°)`.
pub fn effective_irradiance<T: Real>(e_direct: T, e_diffuse: T, theta_deg: T, a_r: T) -> T {
    e_direct * angular_response(theta_deg, a_r) + e_diffuse * angular_response(T::lit(DIFFUSE_INCIDENCE), a_r)
}

/// Ratio of DNI to extraterrestrial normal irradiance, or `None` at night.
pub fn direct_clearness_index<T: Real>(dni: T, zenith_deg: T, day_of_year: u32) -> Option<T> {
    if zenith_deg >= T::lit(90.0) {
        return None;
    }
    let ecc = T::one() + T::lit(0.033) * (T::lit(2.0) * T::PI() * T::lit(f64::from(day_of_year)) / T::lit(365.0)).cos();
    Some((dni / (T::lit(SOLAR_CONSTANT) * ecc)).max(T::zero()).min(T::lit(1.2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    #[default]
    Cell,
    Substring,
    Module,
    String,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [Resolution::Cell, Resolution::Substring, Resolution::Module, Resolution::String];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Cell => "cell",
            Resolution::Substring => "substring",
            Resolution::Module => "module",
            Resolution::String => "string",
        }
    }

    /// Number of consecutive cells that share one value at this level.
    pub fn group_size(self, topology: &SystemTopology<impl Real>) -> usize {
        match self {
            Resolution::Cell => 1,
            Resolution::Substring => topology.cells_per_substring,
            Resolution::Module => topology.cells_per_module(),
            Resolution::String => topology.cells_per_string(),
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cell" => Ok(Resolution::Cell),
            "substring" => Ok(Resolution::Substring),
            "module" => Ok(Resolution::Module),
            "string" => Ok(Resolution::String),
            other => Err(Error::Config(format!("unknown resolution `{other}`"))),
        }
    }
}

/// Per-cell plane-of-array irradiance, W/m².
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceField<T> {
    pub e_direct: Vec<T>,
    pub e_diffuse: Vec<T>,
    pub e_eff: Vec<T>,
    pub resolution: Resolution,
}

impl<T: Real> IrradianceField<T> {
    pub fn dark(n_cells: usize) -> Self {
        Self {
            e_direct: vec![T::zero(); n_cells],
            e_diffuse: vec![T::zero(); n_cells],
            e_eff: vec![T::zero(); n_cells],
            resolution: Resolution::Cell,
        }
    }

    pub fn len(&self) -> usize {
        self.e_eff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_eff.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.e_eff.windows(2).all(|w| w[0] == w[1])
    }
}

/// Sum with a running compensation term (Neumaier), so that group means are
/// correctly rounded for all practical group sizes.
fn compensated_sum<T: Real>(xs: &[T]) -> T {
    let mut s = T::zero();
    let mut c = T::zero();
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c = c + ((s - t) + x);
        } else {
            c = c + ((x - t) + s);
        }
        s = t;
    }
    s + c
}

fn group_means<T: Real>(values: &[T], group: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    for chunk in values.chunks(group) {
        let mean = compensated_sum(chunk) / T::from_usize_lossy(chunk.len());
        out.extend(std::iter::repeat_n(mean, chunk.len()));
    }
    out
}

/// Replaces every cell value by the mean of its substring, module or string.
pub fn aggregate_resolution<T: Real>(
    field: &IrradianceField<T>,
    level: Resolution,
    topology: &SystemTopology<T>,
) -> Result<IrradianceField<T>> {
    if field.resolution != Resolution::Cell {
        return Err(Error::InconsistentInputs("only cell-level fields can be aggregated".into()));
    }
    let n = topology.total_cells();
    for len in [field.e_direct.len(), field.e_diffuse.len(), field.e_eff.len()] {
        if len != n {
            return Err(Error::TopologyMismatch(format!("field has {len} cells, topology {n}")));
        }
    }
    if level == Resolution::Cell {
        return Ok(field.clone());
    }
    let g = level.group_size(topology);
    Ok(IrradianceField {
        e_direct: group_means(&field.e_direct, g),
        e_diffuse: group_means(&field.e_diffuse, g),
        e_eff: group_means(&field.e_eff, g),
        resolution: level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_response_shape() {
        assert!((angular_response(0.0, 0.16) - 1.0_f64).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 1..=90 {
            let kk = angular_response(k as f64, 0.16);
            assert!(kk <= prev && kk >= 0.0);
            prev = kk;
        }
        assert_eq!(angular_response(90.0, 0.16), 0.0);
    }

    #[test]
    fn effective_irradiance_cases() {
        let k60 = angular_response(60.0, 0.16);
        assert_eq!(effective_irradiance(500.0, 100.0, 0.0, 0.16), 500.0 + 100.0 * k60);
        assert_eq!(effective_irradiance(0.0, 100.0, 37.0, 0.16), 100.0 * k60);
        assert!((effective_irradiance(500.0_f64, 100.0, 60.0, 0.16) - 600.0 * k60).abs() < 1e-12);
    }

    #[test]
    fn clearness_index_cases() {
        assert_eq!(direct_clearness_index(0.0, 30.0, 100), Some(0.0));
        assert_eq!(direct_clearness_index(500.0, 95.0, 100), None);
        let ecc = 1.0 + 0.033 * (2.0 * std::f64::consts::PI * 50.0 / 365.0).cos();
        let kt = direct_clearness_index(1367.0 * ecc, 10.0, 50).unwrap();
        assert!((kt - 1.0).abs() < 1e-12);
        assert_eq!(direct_clearness_index(5000.0, 10.0, 50), Some(1.2));
    }

    #[test]
    fn two_cell_substring_mean() {
        let topo = SystemTopology::<f64>::new(2, 1, 1, 1);
        let f = IrradianceField {
            e_direct: vec![100.0, 300.0],
            e_diffuse: vec![0.0, 0.0],
            e_eff: vec![100.0, 300.0],
            resolution: Resolution::Cell,
        };
        let s = aggregate_resolution(&f, Resolution::Substring, &topo).unwrap();
        assert_eq!(s.e_eff, vec![200.0, 200.0]);
        let bad = SystemTopology::<f64>::new(3, 1, 1, 1);
        assert!(matches!(aggregate_resolution(&f, Resolution::Module, &bad), Err(Error::TopologyMismatch(_))));
    }
}
