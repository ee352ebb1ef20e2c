//! Scenario description, read from TOML.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{MlpeAttachment, SystemTopology, DEFAULT_BYPASS_VF, DEFAULT_GRID_POINTS};
use crate::irradiance::{ArrayLayout, ArrayPlane, Obstruction, Resolution, ShadingScene, DEFAULT_ANGULAR_LOSS};
use crate::mlpe::{ActivationPolicy, LossParams, OptimizerSpec};
use crate::module_db::{ModuleDb, ModuleSpec};
use crate::thermal::{SkyTemperature, ThermalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    CentralInverter,
    #[default]
    StringInverter,
    Optimizers,
    Microinverters,
}

impl Architecture {
    pub const ALL: [Architecture; 4] =
        [Architecture::CentralInverter, Architecture::StringInverter, Architecture::Optimizers, Architecture::Microinverters];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::CentralInverter => "central-inverter",
            Architecture::StringInverter => "string-inverter",
            Architecture::Optimizers => "optimizers",
            Architecture::Microinverters => "microinverters",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central-inverter" | "central" => Ok(Architecture::CentralInverter),
            "string-inverter" | "string" => Ok(Architecture::StringInverter),
            "optimizers" | "optimizer" => Ok(Architecture::Optimizers),
            "microinverters" | "microinverter" | "micro" => Ok(Architecture::Microinverters),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub modules_per_string: usize,
    #[serde(default = "one")]
    pub strings: usize,
    #[serde(default = "default_vf")]
    pub bypass_vf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub tilt: f64,
    pub azimuth: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    /// Defaults to one row per string.
    pub modules_per_row: Option<usize>,
    pub cell_columns: Option<usize>,
    pub cell_rows: Option<usize>,
    #[serde(default = "default_pitch")]
    pub cell_pitch: f64,
    #[serde(default = "default_gap")]
    pub module_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalConfig {
    pub inoct: f64,
    pub emissivity: f64,
    pub absorptivity: f64,
    pub thermal_mass: f64,
    pub mount_height: f64,
    pub sky: SkyTemperature,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        let p = ThermalParams::<f64>::default();
        Self {
            inoct: p.inoct,
            emissivity: p.emissivity,
            absorptivity: p.absorptivity,
            thermal_mass: p.thermal_mass,
            mount_height: p.mount_height,
            sky: p.sky,
        }
    }
}

impl ThermalConfig {
    pub fn params(&self) -> ThermalParams<f64> {
        ThermalParams {
            inoct: self.inoct,
            emissivity: self.emissivity,
            absorptivity: self.absorptivity,
            thermal_mass: self.thermal_mass,
            mount_height: self.mount_height,
            sky: self.sky,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsConfig {
    /// Martin–Ruiz angular loss coefficient.
    pub angular_loss: f64,
    pub sky_patches: usize,
    /// Fraction of every sky patch hidden from all cells, 0..=1.
    pub diffuse_obstruction: f64,
    /// Shading samples per cell edge.
    pub shading_samples: usize,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self { angular_loss: DEFAULT_ANGULAR_LOSS, sky_patches: 145, diffuse_obstruction: 0.0, shading_samples: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub i_max: f64,
    pub switch_coeff: f64,
    pub conduction_r: f64,
    pub capacitor_esr: f64,
    pub control_power: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = OptimizerSpec::<f64>::default();
        Self {
            d_min: s.d_min,
            d_max: s.d_max,
            i_max: s.i_max,
            switch_coeff: s.loss.switch_coeff,
            conduction_r: s.loss.conduction_r,
            capacitor_esr: s.loss.capacitor_esr,
            control_power: s.loss.control_power,
        }
    }
}

impl OptimizerConfig {
    pub fn spec(&self) -> OptimizerSpec<f64> {
        OptimizerSpec {
            d_min: self.d_min,
            d_max: self.d_max,
            i_max: self.i_max,
            loss: LossParams {
                switch_coeff: self.switch_coeff,
                conduction_r: self.conduction_r,
                capacitor_esr: self.capacitor_esr,
                control_power: self.control_power,
            },
            i_activate_policy: ActivationPolicy::MppCurrent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttachmentKind {
    Optimizer,
    Microinverter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentConfig {
    /// Global module index (string-major).
    pub module: usize,
    pub kind: AttachmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Samples per cell IV curve.
    pub cell_curve_points: usize,
    /// Points on the shared current grid.
    pub grid_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { cell_curve_points: 160, grid_points: DEFAULT_GRID_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub module_id: String,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub resolution: Resolution,
    pub site: Site,
    pub topology: TopologyConfig,
    pub array: ArrayConfig,
    #[serde(default)]
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub optics: OpticsConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default, rename = "attachment")]
    pub attachments: Vec<AttachmentConfig>,
    #[serde(default, rename = "obstruction")]
    pub obstructions: Vec<Obstruction>,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn one() -> usize {
    1
}

fn default_vf() -> f64 {
    DEFAULT_BYPASS_VF
}

fn default_pitch() -> f64 {
    0.156
}

fn default_gap() -> f64 {
    0.02
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn module_spec(&self, db: &ModuleDb) -> Result<ModuleSpec<f64>> {
        db.lookup(&self.module_id)
    }

    pub fn topology(&self, spec: &ModuleSpec<f64>) -> Result<SystemTopology<f64>> {
        let mut t = SystemTopology::new(
            spec.cells_per_substring(),
            spec.substrings,
            self.topology.modules_per_string,
            self.topology.strings,
        );
        t.bypass_vf = self.topology.bypass_vf;
        if !self.attachments.is_empty() {
            let mut mlpe = vec![MlpeAttachment::None; t.total_modules()];
            let opt = self.optimizer.spec();
            for a in &self.attachments {
                let slot = mlpe.get_mut(a.module).ok_or_else(|| {
                    Error::TopologyMismatch(format!("attachment on module {} of {}", a.module, t.total_modules()))
                })?;
                *slot = match a.kind {
                    AttachmentKind::Optimizer => MlpeAttachment::Optimizer(opt),
                    AttachmentKind::Microinverter => MlpeAttachment::Microinverter,
                };
            }
            t.mlpe = mlpe;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn layout(&self, spec: &ModuleSpec<f64>) -> Result<ArrayLayout> {
        let cells = spec.cells_in_series;
        let (cols, rows) = match (self.array.cell_columns, self.array.cell_rows) {
            (Some(c), Some(r)) => (c, r),
            (Some(c), None) if c > 0 && cells % c == 0 => (c, cells / c),
            (None, Some(r)) if r > 0 && cells % r == 0 => (cells / r, r),
            (None, None) if cells % 6 == 0 && 6 % spec.substrings == 0 => (6, cells / 6),
            (None, None) => (cells, 1),
            _ => return Err(Error::Config(format!("cell grid does not divide {cells} cells"))),
        };
        if cols * rows != cells {
            return Err(Error::Config(format!("cell grid {cols} x {rows} does not hold {cells} cells")));
        }
        if !(self.array.cell_pitch > 0.0 && self.array.module_gap >= 0.0) {
            return Err(Error::Config("cell_pitch must be positive and module_gap non-negative".into()));
        }
        if !(0.0..=90.0).contains(&self.array.tilt) {
            return Err(Error::Config("tilt must lie in [0, 90] degrees".into()));
        }
        let per_row = self.array.modules_per_row.unwrap_or(self.topology.modules_per_string);
        if per_row == 0 {
            return Err(Error::Config("modules_per_row must be at least 1".into()));
        }
        Ok(ArrayLayout {
            origin: self.array.origin,
            plane: ArrayPlane { tilt: self.array.tilt, azimuth: self.array.azimuth },
            modules_per_row: per_row,
            cell_columns: cols,
            cell_rows: rows,
            cell_pitch: self.array.cell_pitch,
            module_gap: self.array.module_gap,
        })
    }

    pub fn scene(&self, layout: &ArrayLayout, n_modules: usize) -> Result<ShadingScene> {
        let scene = layout.scene(n_modules, self.obstructions.clone(), self.optics.shading_samples);
        scene.validate()?;
        Ok(scene)
    }

    /// Checks everything that does not need the module database.
    pub fn validate_basic(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.site.latitude) || !(-180.0..=180.0).contains(&self.site.longitude) {
            return Err(Error::Config("site latitude/longitude out of range".into()));
        }
        if !(self.optics.angular_loss > 0.0) {
            return Err(Error::Config("angular_loss must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.optics.diffuse_obstruction) {
            return Err(Error::Config("diffuse_obstruction must lie in [0, 1]".into()));
        }
        if self.solver.cell_curve_points < 16 {
            return Err(Error::Config("cell_curve_points must be at least 16".into()));
        }
        if self.solver.grid_points < 11 {
            return Err(Error::Config("grid_points must be at least 11".into()));
        }
        self.thermal.params().validate()?;
        self.optimizer.spec().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const MINIMAL: &str = r#"
module_id = "GermanSolar USA GSM6-60-300W"
architecture = "central-inverter"

[site]
latitude = 51.44
longitude = 5.49

[topology]
modules_per_string = 4
strings = 2

[array]
tilt = 45
azimuth = 180

[[obstruction]]
type = "cylinder"
base = [1.0, -1.0, 0.0]
height = 1.46
diameter = 0.123

[[attachment]]
module = 2
kind = "optimizer"
"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        s.validate_basic().unwrap();
        assert_eq!(s.architecture, Architecture::CentralInverter);
        assert_eq!(s.resolution, Resolution::Cell);
        let spec = s.module_spec(&ModuleDb::bundled()).unwrap();
        let topo = s.topology(&spec).unwrap();
        assert_eq!(topo.total_cells(), 480);
        assert!(matches!(topo.mlpe[2], MlpeAttachment::Optimizer(_)));
        let layout = s.layout(&spec).unwrap();
        assert_eq!((layout.cell_columns, layout.cell_rows), (6, 10));
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_attachments() {
        let bad = MINIMAL.replace("tilt = 45", "tilt = 45\ncolour = 3");
        assert!(Scenario::from_toml_str(&bad).is_err());
        let s = Scenario::from_toml_str(&MINIMAL.replace("module = 2", "module = 20")).unwrap();
        let spec = s.module_spec(&ModuleDb::bundled()).unwrap();
        assert!(s.topology(&spec).is_err());
    }

    #[test]
    fn architecture_names() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("hybrid".parse::<Architecture>().is_err());
    }
}
