//! PV module datasheet records and the module-type ideality-factor table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

const BUNDLED_DATASHEETS: &str = include_str!("../data/modules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModuleType {
    MonoCrystalline,
    MultiCrystalline,
    ThinFilm,
}

impl ModuleType {
    fn column(self) -> usize {
        match self {
            ModuleType::MonoCrystalline => 0,
            ModuleType::MultiCrystalline => 1,
            ModuleType::ThinFilm => 2,
        }
    }

    pub fn is_crystalline(self) -> bool {
        !matches!(self, ModuleType::ThinFilm)
    }
}

/// Datasheet parameters of one PV module at standard test conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec<T = f64> {
    pub id: String,
    pub length_m: T,
    pub width_m: T,
    pub isc_stc: T,
    pub voc_stc: T,
    pub imp_stc: T,
    pub vmp_stc: T,
    /// Short-circuit current temperature coefficient, A/K.
    pub alpha_isc: T,
    /// Open-circuit voltage temperature coefficient, V/K.
    pub beta_voc: T,
    pub band_gap_ev: T,
    pub module_type: ModuleType,
    pub cells_in_series: usize,
    pub substrings: usize,
}

impl<T: Real> ModuleSpec<T> {
    /// Checks the datasheet invariants.
    ///
    /// `isc == imp` is deliberately not rejected here: calibration reports it
    /// as a singular input.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidModuleSpec { id: self.id.clone(), reason: reason.to_string() })
        };
        let z = T::zero();
        if !(self.isc_stc >= self.imp_stc && self.imp_stc > z) {
            return fail("requires isc_stc >= imp_stc > 0");
        }
        if !(self.voc_stc > self.vmp_stc && self.vmp_stc > z) {
            return fail("requires voc_stc > vmp_stc > 0");
        }
        if !(self.alpha_isc > z && self.beta_voc < z && self.band_gap_ev > z) {
            return fail("requires alpha_isc > 0, beta_voc < 0, band_gap_ev > 0");
        }
        if self.cells_in_series == 0 || self.substrings == 0 {
            return fail("cell and substring counts must be positive");
        }
        if self.cells_in_series % self.substrings != 0 {
            return fail("cells_in_series must be divisible by substrings");
        }
        Ok(())
    }

    pub fn cells_per_substring(&self) -> usize {
        self.cells_in_series / self.substrings
    }

    pub fn pmp_stc(&self) -> T {
        self.vmp_stc * self.imp_stc
    }

    pub fn cast<U: Real>(&self) -> ModuleSpec<U> {
        let c = |x: T| U::lit(x.as_f64());
        ModuleSpec {
            id: self.id.clone(),
            length_m: c(self.length_m),
            width_m: c(self.width_m),
            isc_stc: c(self.isc_stc),
            voc_stc: c(self.voc_stc),
            imp_stc: c(self.imp_stc),
            vmp_stc: c(self.vmp_stc),
            alpha_isc: c(self.alpha_isc),
            beta_voc: c(self.beta_voc),
            band_gap_ev: c(self.band_gap_ev),
            module_type: self.module_type,
            cells_in_series: self.cells_in_series,
            substrings: self.substrings,
        }
    }
}

#[derive(Debug, Deserialize)]
struct DatasheetFile {
    #[serde(default)]
    module: Vec<DatasheetRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasheetRecord {
    id: String,
    length_m: f64,
    width_m: f64,
    isc_stc: f64,
    voc_stc: f64,
    imp_stc: f64,
    vmp_stc: f64,
    alpha_isc: f64,
    beta_voc: f64,
    band_gap_ev: f64,
    module_type: ModuleType,
    cells_in_series: Option<usize>,
    substrings: Option<usize>,
}

impl DatasheetRecord {
    fn into_spec(self) -> Result<ModuleSpec<f64>> {
        let (cells, subs) = match (self.cells_in_series, self.substrings) {
            (Some(c), Some(s)) => (c, s),
            (None, None) if self.module_type.is_crystalline() => (60, 3),
            _ => {
                return Err(Error::InvalidModuleSpec {
                    id: self.id,
                    reason: "cells_in_series and substrings must both be given for this module".into(),
                })
            }
        };
        let spec = ModuleSpec {
            id: self.id,
            length_m: self.length_m,
            width_m: self.width_m,
            isc_stc: self.isc_stc,
            voc_stc: self.voc_stc,
            imp_stc: self.imp_stc,
            vmp_stc: self.vmp_stc,
            alpha_isc: self.alpha_isc,
            beta_voc: self.beta_voc,
            band_gap_ev: self.band_gap_ev,
            module_type: self.module_type,
            cells_in_series: cells,
            substrings: subs,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// In-memory datasheet store. Read-only after load.
#[derive(Debug, Clone, Default)]
pub struct ModuleDb {
    modules: Vec<ModuleSpec<f64>>,
}

impl ModuleDb {
    /// The datasheet file shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_DATASHEETS, "bundled datasheets").expect("bundled datasheets parse")
    }

    pub fn from_toml_str(text: &str, context: &str) -> Result<Self> {
        let file: DatasheetFile = toml::from_str(text)
            .map_err(|e| Error::Parse { context: context.to_string(), message: e.to_string() })?;
        let modules = file.module.into_iter().map(DatasheetRecord::into_spec).collect::<Result<Vec<_>>>()?;
        Ok(Self { modules })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Bundled records overlaid with a user file; user records win on id clashes.
    pub fn with_overlay(mut self, other: ModuleDb) -> Self {
        for spec in other.modules {
            match self.modules.iter_mut().find(|m| m.id == spec.id) {
                Some(slot) => *slot = spec,
                None => self.modules.push(spec),
            }
        }
        self
    }

    pub fn lookup(&self, id: &str) -> Result<ModuleSpec<f64>> {
        self.modules.iter().find(|m| m.id == id).cloned().ok_or_else(|| Error::UnknownModule(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.modules.iter().map(|m| m.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }
}

/// Looks a module up in the bundled datasheet file.
pub fn lookup_module_spec(id: &str) -> Result<ModuleSpec<f64>> {
    ModuleDb::bundled().lookup(id)
}

/// Irradiance levels of the ideality-factor table, W/m².
pub const IDEALITY_LEVELS: [f64; 5] = [200.0, 400.0, 600.0, 800.0, 1000.0];

// [level][module type] -> (n1, n2); columns mono, multi, thin film
const IDEALITY_ROWS: [[(f64, f64); 3]; 5] = [
    [(1.38, 3.46), (1.02, 2.49), (1.48, 3.10)],
    [(1.38, 2.30), (1.02, 2.69), (1.44, 3.68)],
    [(1.38, 2.83), (1.02, 2.75), (1.48, 3.61)],
    [(1.38, 3.15), (1.03, 2.62), (1.46, 3.31)],
    [(1.37, 2.11), (1.03, 2.35), (1.48, 3.72)],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealityRow {
    pub irradiance_level: f64,
    pub module_type: ModuleType,
    pub n1: f64,
    pub n2: f64,
}

/// Module-type-specific diode ideality factors by irradiance level.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealityFactorTable;

impl IdealityFactorTable {
    pub fn rows(&self) -> Vec<IdealityRow> {
        let types = [ModuleType::MonoCrystalline, ModuleType::MultiCrystalline, ModuleType::ThinFilm];
        let mut out = Vec::with_capacity(15);
        for (level, row) in IDEALITY_LEVELS.iter().zip(IDEALITY_ROWS.iter()) {
            for t in types {
                let (n1, n2) = row[t.column()];
                out.push(IdealityRow { irradiance_level: *level, module_type: t, n1, n2 });
            }
        }
        out
    }

    /// Index of the nearest level, clamped to the table; midpoints go down.
    pub fn level_index<T: Real>(irradiance: T) -> usize {
        let x = ((irradiance.as_f64() - IDEALITY_LEVELS[0]) / 200.0).clamp(0.0, 4.0);
        if x.is_nan() {
            return 0;
        }
        ((x - 0.5).ceil().max(0.0) as usize).min(4)
    }

    pub fn lookup<T: Real>(&self, module_type: ModuleType, irradiance: T) -> (T, T) {
        let (n1, n2) = IDEALITY_ROWS[Self::level_index(irradiance)][module_type.column()];
        (T::lit(n1), T::lit(n2))
    }
}

pub fn lookup_ideality_factors<T: Real>(module_type: ModuleType, irradiance: T) -> (T, T) {
    IdealityFactorTable.lookup(module_type, irradiance)
}
