//! Synthetic beam shading: parametric obstructions ray-cast from cell samples.
//!
//! Coordinates are metres with x east, y north, z up. Array azimuth is the
//! compass direction the plane faces, clockwise from north.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::solar::SunPosition;

const RAY_EPS: f64 = 1e-9;

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orientation of the module plane, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayPlane {
    pub tilt: f64,
    pub azimuth: f64,
}

impl ArrayPlane {
    /// Outward unit normal.
    pub fn normal(&self) -> Vec3 {
        let b = self.tilt.to_radians();
        let g = self.azimuth.to_radians();
        [b.sin() * g.sin(), b.sin() * g.cos(), b.cos()]
    }

    /// In-plane horizontal axis, left to right when facing the plane.
    pub fn along_row(&self) -> Vec3 {
        let g = self.azimuth.to_radians();
        [-g.cos(), g.sin(), 0.0]
    }

    /// In-plane axis pointing up the slope.
    pub fn up_slope(&self) -> Vec3 {
        let b = self.tilt.to_radians();
        let g = self.azimuth.to_radians();
        [-b.cos() * g.sin(), -b.cos() * g.cos(), b.sin()]
    }

    /// Angle of incidence of the beam on the plane, degrees (0..=180).
    pub fn incidence(&self, sun: &SunPosition<f64>) -> f64 {
        dot(self.normal(), sun.direction()).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Obstruction {
    /// Upright cylinder standing on `base`.
    Cylinder { base: Vec3, height: f64, diameter: f64 },
    /// Axis-aligned box spanning `corner .. corner + size`.
    Box { corner: Vec3, size: Vec3 },
    /// Horizontal disk (tree canopy) letting `transmittance` of the beam through.
    Canopy { center: Vec3, radius: f64, transmittance: f64 },
}

impl Obstruction {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Obstruction::Cylinder { height, diameter, .. } => *height > 0.0 && *diameter > 0.0,
            Obstruction::Box { size, .. } => size.iter().all(|&s| s > 0.0),
            Obstruction::Canopy { radius, transmittance, .. } => {
                *radius > 0.0 && (0.0..=1.0).contains(transmittance)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid obstruction {self:?}")))
        }
    }

    /// Fraction of a ray from `p` along `d` that this obstruction transmits.
    fn transmission(&self, p: Vec3, d: Vec3) -> f64 {
        match *self {
            Obstruction::Cylinder { base, height, diameter } => {
                let r = diameter / 2.0;
                let (ox, oy) = (p[0] - base[0], p[1] - base[1]);
                let a = d[0] * d[0] + d[1] * d[1];
                let (mut t0, mut t1);
                if a < 1e-15 {
                    if ox * ox + oy * oy > r * r {
                        return 1.0;
                    }
                    t0 = f64::NEG_INFINITY;
                    t1 = f64::INFINITY;
                } else {
                    let b = ox * d[0] + oy * d[1];
                    let c = ox * ox + oy * oy - r * r;
                    let disc = b * b - a * c;
                    if disc < 0.0 {
                        return 1.0;
                    }
                    let s = disc.sqrt();
                    t0 = (-b - s) / a;
                    t1 = (-b + s) / a;
                }
                let (z_lo, z_hi) = (base[2], base[2] + height);
                if d[2].abs() < 1e-15 {
                    if p[2] < z_lo || p[2] > z_hi {
                        return 1.0;
                    }
                } else {
                    let ta = (z_lo - p[2]) / d[2];
                    let tb = (z_hi - p[2]) / d[2];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t0 <= t1 && t1 > RAY_EPS {
                    0.0
                } else {
                    1.0
                }
            }
            Obstruction::Box { corner, size } => {
                let mut t0 = RAY_EPS;
                let mut t1 = f64::INFINITY;
                for k in 0..3 {
                    let (lo, hi) = (corner[k], corner[k] + size[k]);
                    if d[k].abs() < 1e-15 {
                        if p[k] < lo || p[k] > hi {
                            return 1.0;
                        }
                    } else {
                        let ta = (lo - p[k]) / d[k];
                        let tb = (hi - p[k]) / d[k];
                        t0 = t0.max(ta.min(tb));
                        t1 = t1.min(ta.max(tb));
                    }
                }
                if t0 <= t1 {
                    0.0
                } else {
                    1.0
                }
            }
            Obstruction::Canopy { center, radius, transmittance } => {
                if d[2] <= 0.0 {
                    return 1.0;
                }
                let t = (center[2] - p[2]) / d[2];
                if t <= RAY_EPS {
                    return 1.0;
                }
                let h = add(p, scale(d, t));
                let (dx, dy) = (h[0] - center[0], h[1] - center[1]);
                if dx * dx + dy * dy <= radius * radius {
                    transmittance
                } else {
                    1.0
                }
            }
        }
    }
}

/// Cell sensor points on a plane plus the obstructions around them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadingScene {
    /// Cell centres, one per cell in topology order.
    pub sensor_positions: Vec<Vec3>,
    pub array_plane: ArrayPlane,
    /// Cell edge lengths along the row and up the slope, metres.
    pub cell_size: (f64, f64),
    /// Sub-samples per cell edge; the cell is sampled on an `n x n` grid.
    pub samples_per_edge: usize,
    pub obstructions: Vec<Obstruction>,
}

impl ShadingScene {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_edge < 4 {
            return Err(Error::Config("at least 4x4 shading samples per cell are required".into()));
        }
        if !(self.cell_size.0 > 0.0 && self.cell_size.1 > 0.0) {
            return Err(Error::Config("cell size must be positive".into()));
        }
        self.obstructions.iter().try_for_each(Obstruction::validate)
    }

    fn sample_offsets(&self) -> Vec<Vec3> {
        let n = self.samples_per_edge;
        let u = self.array_plane.along_row();
        let w = self.array_plane.up_slope();
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            let fa = ((a as f64 + 0.5) / n as f64 - 0.5) * self.cell_size.0;
            for b in 0..n {
                let fb = ((b as f64 + 0.5) / n as f64 - 0.5) * self.cell_size.1;
                out.push(add(scale(u, fa), scale(w, fb)));
            }
        }
        out
    }

    /// Blocked beam fraction per cell for the given sun position.
    ///
    /// A sun below the horizon or behind the plane shades nothing here; the
    /// beam term is zero in those cases anyway.
    pub fn shade(&self, sun: &SunPosition<f64>) -> Vec<f64> {
        let n_cells = self.sensor_positions.len();
        if self.obstructions.is_empty() || !sun.is_up() {
            return vec![0.0; n_cells];
        }
        let d = sun.direction();
        let offsets = self.sample_offsets();
        let inv = 1.0 / offsets.len() as f64;
        self.sensor_positions
            .iter()
            .map(|&c| {
                let lit: f64 = offsets
                    .iter()
                    .map(|&o| {
                        let p = add(c, o);
                        self.obstructions.iter().map(|ob| ob.transmission(p, d)).product::<f64>()
                    })
                    .sum();
                (1.0 - lit * inv).clamp(0.0, 1.0)
            })
            .collect()
    }
}

pub fn shade_scene(scene: &ShadingScene, sun: &SunPosition<f64>) -> Vec<f64> {
    scene.shade(sun)
}

/// Rectangular placement of modules and cells on one plane.
///
/// Modules fill rows left to right, rows stack up the slope. Within a module
/// cells are numbered column by column, so consecutive columns form the
/// substrings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    /// Lower-left corner of the first module, metres.
    pub origin: Vec3,
    pub plane: ArrayPlane,
    pub modules_per_row: usize,
    pub cell_columns: usize,
    pub cell_rows: usize,
    /// Cell pitch, metres.
    pub cell_pitch: f64,
    /// Gap between neighbouring modules, metres.
    pub module_gap: f64,
}

impl ArrayLayout {
    pub fn cells_per_module(&self) -> usize {
        self.cell_columns * self.cell_rows
    }

    pub fn module_size(&self) -> (f64, f64) {
        (self.cell_columns as f64 * self.cell_pitch, self.cell_rows as f64 * self.cell_pitch)
    }

    /// Lower-left corner of module `m`.
    pub fn module_origin(&self, m: usize) -> Vec3 {
        let (w, h) = self.module_size();
        let col = (m % self.modules_per_row) as f64;
        let row = (m / self.modules_per_row) as f64;
        let u = self.plane.along_row();
        let s = self.plane.up_slope();
        add(self.origin, add(scale(u, col * (w + self.module_gap)), scale(s, row * (h + self.module_gap))))
    }

    /// Centre of cell `c` of module `m`.
    pub fn cell_center(&self, m: usize, c: usize) -> Vec3 {
        let col = (c / self.cell_rows) as f64;
        let row = (c % self.cell_rows) as f64;
        let u = self.plane.along_row();
        let s = self.plane.up_slope();
        let o = self.module_origin(m);
        add(o, add(scale(u, (col + 0.5) * self.cell_pitch), scale(s, (row + 0.5) * self.cell_pitch)))
    }

    pub fn sensor_positions(&self, n_modules: usize) -> Vec<Vec3> {
        let per = self.cells_per_module();
        (0..n_modules).flat_map(|m| (0..per).map(move |c| (m, c))).map(|(m, c)| self.cell_center(m, c)).collect()
    }

    pub fn scene(&self, n_modules: usize, obstructions: Vec<Obstruction>, samples_per_edge: usize) -> ShadingScene {
        ShadingScene {
            sensor_positions: self.sensor_positions(n_modules),
            array_plane: self.plane,
            cell_size: (self.cell_pitch, self.cell_pitch),
            samples_per_edge,
            obstructions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_layout() -> ArrayLayout {
        ArrayLayout {
            origin: [0.0, 0.0, 0.0],
            plane: ArrayPlane { tilt: 0.0, azimuth: 180.0 },
            modules_per_row: 1,
            cell_columns: 6,
            cell_rows: 10,
            cell_pitch: 0.16,
            module_gap: 0.0,
        }
    }

    #[test]
    fn plane_axes_are_orthonormal() {
        let p = ArrayPlane { tilt: 35.0, azimuth: 200.0 };
        let (n, u, w) = (p.normal(), p.along_row(), p.up_slope());
        for (a, b) in [(n, u), (n, w), (u, w)] {
            assert!(dot(a, b).abs() < 1e-12);
        }
        for a in [n, u, w] {
            assert!((dot(a, a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_obstructions_no_shade() {
        let scene = flat_layout().scene(1, vec![], 4);
        let f = scene.shade(&SunPosition { zenith: 30.0, azimuth: 120.0 });
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn box_overhead_blocks_everything() {
        let obstacle = Obstruction::Box { corner: [-5.0, -5.0, 1.0], size: [10.0, 10.0, 0.1] };
        let scene = flat_layout().scene(1, vec![obstacle], 4);
        let f = scene.shade(&SunPosition { zenith: 10.0, azimuth: 180.0 });
        assert!(f.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn canopy_scales_blockage() {
        let canopy = Obstruction::Canopy { center: [0.5, 0.8, 3.0], radius: 20.0, transmittance: 0.25 };
        let scene = flat_layout().scene(1, vec![canopy], 4);
        let f = scene.shade(&SunPosition { zenith: 0.0, azimuth: 0.0 });
        assert!(f.iter().all(|&x| (x - 0.75).abs() < 1e-12));
    }

    #[test]
    fn obstruction_behind_sensor_is_ignored() {
        let obstacle = Obstruction::Cylinder { base: [0.5, 5.0, 0.0], height: 2.0, diameter: 0.3 };
        let scene = flat_layout().scene(1, vec![obstacle], 4);
        // sun in the south; pole in the north
        let f = scene.shade(&SunPosition { zenith: 40.0, azimuth: 180.0 });
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_obstructions_rejected() {
        assert!(Obstruction::Cylinder { base: [0.0; 3], height: 0.0, diameter: 1.0 }.validate().is_err());
        assert!(Obstruction::Canopy { center: [0.0; 3], radius: 1.0, transmittance: 1.5 }.validate().is_err());
    }

    #[test]
    fn cell_numbering_runs_by_column() {
        let l = flat_layout();
        let c0 = l.cell_center(0, 0);
        let c1 = l.cell_center(0, 1);
        let c10 = l.cell_center(0, 10);
        // tilt 0 facing south: along-row is +x (east), up-slope is +y
        assert!((c1[1] - c0[1] - 0.16).abs() < 1e-12);
        assert!((c10[0] - c0[0] - 0.16).abs() < 1e-12);
    }
}
