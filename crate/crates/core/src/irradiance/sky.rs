//! Sky hemisphere discretisation, sky radiance vectors and plane irradiance.

use crate::error::{Error, Result};
use crate::num::Real;

use super::solar::SunPosition;

/// Tregenza bands: patches per 12° altitude band, horizon upwards.
const TREGENZA_BANDS: [usize; 7] = [30, 30, 24, 24, 18, 12, 6];
const BAND_HEIGHT_DEG: f64 = 12.0;

/// Equal-ish solid angle subdivision of the upper hemisphere.
///
/// Supported patch counts are 1 (whole hemisphere), 145 (Tregenza) and the
/// Reinhart subdivisions 577 and 2305.
#[derive(Debug, Clone)]
pub struct SkyPatches<T> {
    /// Unit vectors to patch centres (x east, y north, z up).
    directions: Vec<[T; 3]>,
    solid_angles: Vec<T>,
    /// Altitude bands: (lower altitude deg, height deg, patch count, first index).
    bands: Vec<(T, T, usize, usize)>,
}

fn unit<T: Real>(alt_deg: T, az_deg: T) -> [T; 3] {
    let alt = alt_deg.to_radians();
    let az = az_deg.to_radians();
    [alt.cos() * az.sin(), alt.cos() * az.cos(), alt.sin()]
}

impl<T: Real> SkyPatches<T> {
    pub fn new(patch_count: usize) -> Result<Self> {
        let subdivision = match patch_count {
            1 => {
                return Ok(Self {
                    directions: vec![[T::zero(), T::zero(), T::one()]],
                    solid_angles: vec![T::lit(2.0) * T::PI()],
                    bands: vec![(T::zero(), T::lit(90.0), 1, 0)],
                })
            }
            145 => 1,
            577 => 2,
            2305 => 4,
            n => return Err(Error::InvalidPatchCount(n)),
        };
        let mut directions = Vec::with_capacity(patch_count);
        let mut solid_angles = Vec::with_capacity(patch_count);
        let mut bands = Vec::new();
        let band_h = T::lit(BAND_HEIGHT_DEG) / T::from_usize_lossy(subdivision);
        let mut band_idx = 0usize;
        for &base_count in &TREGENZA_BANDS {
            let count = base_count * subdivision;
            for _ in 0..subdivision {
                let lo = band_h * T::from_usize_lossy(band_idx);
                let hi = lo + band_h;
                let d_az = T::lit(360.0) / T::from_usize_lossy(count);
                let omega = d_az.to_radians() * (hi.to_radians().sin() - lo.to_radians().sin());
                let mid = (lo + hi) / T::lit(2.0);
                bands.push((lo, band_h, count, directions.len()));
                for k in 0..count {
                    directions.push(unit(mid, d_az * T::from_usize_lossy(k)));
                    solid_angles.push(omega);
                }
                band_idx += 1;
            }
        }
        let cap_lo = band_h * T::from_usize_lossy(band_idx);
        bands.push((cap_lo, T::lit(90.0) - cap_lo, 1, directions.len()));
        directions.push([T::zero(), T::zero(), T::one()]);
        solid_angles.push(T::lit(2.0) * T::PI() * (T::one() - cap_lo.to_radians().sin()));
        debug_assert_eq!(directions.len(), patch_count);
        Ok(Self { directions, solid_angles, bands })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[[T; 3]] {
        &self.directions
    }

    pub fn solid_angles(&self) -> &[T] {
        &self.solid_angles
    }

    /// Index of the patch containing the direction at (`altitude`, `azimuth`) degrees.
    pub fn patch_index(&self, altitude: T, azimuth: T) -> usize {
        let alt = altitude.max(T::zero()).min(T::lit(90.0));
        let band = self
            .bands
            .iter()
            .position(|&(lo, h, _, _)| alt < lo + h)
            .unwrap_or(self.bands.len() - 1);
        let (_, _, count, first) = self.bands[band];
        let d_az = T::lit(360.0) / T::from_usize_lossy(count);
        let shifted = azimuth + d_az / T::lit(2.0);
        let az = shifted - T::lit(360.0) * (shifted / T::lit(360.0)).floor();
        let k = (az / d_az).floor().to_usize().unwrap_or(0).min(count - 1);
        first + k
    }

    /// Daylight coefficients of an unobstructed plane: `max(0, n·d) Ω` per patch.
    pub fn plane_coefficients(&self, normal: [T; 3]) -> Vec<T> {
        self.directions
            .iter()
            .zip(&self.solid_angles)
            .map(|(d, &w)| (normal[0] * d[0] + normal[1] * d[1] + normal[2] * d[2]).max(T::zero()) * w)
            .collect()
    }
}

/// Beam and diffuse radiance per sky patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyRadiance<T> {
    pub l_direct: Vec<T>,
    pub l_diffuse: Vec<T>,
}

/// Distributes DNI into the sun's patch and DHI isotropically over the sky.
///
/// Both vectors are scaled so that patch-centre quadrature onto a horizontal
/// plane returns `dni cos(zenith)` and `dhi` respectively.
pub fn compose_sky_radiance<T: Real>(dni: T, dhi: T, sun: SunPosition<T>, patches: &SkyPatches<T>) -> SkyRadiance<T> {
    let n = patches.len();
    let horizontal: Vec<T> = patches.directions.iter().zip(&patches.solid_angles).map(|(d, &w)| d[2] * w).collect();
    let total: T = horizontal.iter().copied().sum();
    let l_diff = dhi.max(T::zero()) / total;
    let l_diffuse = vec![l_diff; n];

    let mut l_direct = vec![T::zero(); n];
    let dni = dni.max(T::zero());
    if sun.zenith < T::lit(90.0) && dni > T::zero() {
        let alt = T::lit(90.0) - sun.zenith;
        let k = patches.patch_index(alt, sun.azimuth);
        l_direct[k] = dni * sun.zenith.to_radians().cos() / horizontal[k];
    }
    SkyRadiance { l_direct, l_diffuse }
}

/// Sensor irradiance `sum_p M_DC[s][p] (1 - M_TSR[s][p]) L[p]` for beam and diffuse.
pub fn plane_irradiance<T: Real>(m_dc: &[Vec<T>], m_tsr: &[Vec<T>], sky: &SkyRadiance<T>) -> Result<(Vec<T>, Vec<T>)> {
    let patches = sky.l_direct.len();
    if sky.l_diffuse.len() != patches {
        return Err(Error::DimensionMismatch { expected: patches, found: sky.l_diffuse.len() });
    }
    if m_tsr.len() != m_dc.len() {
        return Err(Error::DimensionMismatch { expected: m_dc.len(), found: m_tsr.len() });
    }
    let mut direct = Vec::with_capacity(m_dc.len());
    let mut diffuse = Vec::with_capacity(m_dc.len());
    for (dc, tsr) in m_dc.iter().zip(m_tsr) {
        if dc.len() != patches {
            return Err(Error::DimensionMismatch { expected: patches, found: dc.len() });
        }
        if tsr.len() != patches {
            return Err(Error::DimensionMismatch { expected: patches, found: tsr.len() });
        }
        let mut ed = T::zero();
        let mut ef = T::zero();
        for p in 0..patches {
            let t = tsr[p];
            if !(t >= T::zero() && t <= T::one()) {
                return Err(Error::InconsistentInputs(format!("obstruction fraction {t} outside [0, 1]")));
            }
            let w = dc[p].max(T::zero()) * (T::one() - t);
            ed = ed + w * sky.l_direct[p];
            ef = ef + w * sky.l_diffuse[p];
        }
        direct.push(ed);
        diffuse.push(ef);
    }
    Ok((direct, diffuse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supported_counts() {
        for n in [1, 145, 577, 2305] {
            let p = SkyPatches::<f64>::new(n).unwrap();
            assert_eq!(p.len(), n);
            let total: f64 = p.solid_angles().iter().sum();
            assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-9, "{n}: {total}");
        }
        assert!(matches!(SkyPatches::<f64>::new(100), Err(Error::InvalidPatchCount(100))));
    }

    #[test]
    fn patch_lookup_contains_direction() {
        let p = SkyPatches::<f64>::new(145).unwrap();
        assert_eq!(p.patch_index(89.0, 10.0), 144);
        assert_eq!(p.patch_index(5.0, 0.0), 0);
        assert_eq!(p.patch_index(5.0, 359.0), 0);
        assert_eq!(p.patch_index(5.0, 12.0), 1);
        assert_eq!(p.patch_index(13.0, 0.0), 30);
    }

    #[test]
    fn no_beam_without_dni_or_sun() {
        let p = SkyPatches::<f64>::new(145).unwrap();
        let up = SunPosition { zenith: 30.0, azimuth: 180.0 };
        let s = compose_sky_radiance(0.0, 100.0, up, &p);
        assert!(s.l_direct.iter().all(|&x| x == 0.0));
        let down = SunPosition { zenith: 95.0, azimuth: 180.0 };
        let s = compose_sky_radiance(800.0, 0.0, down, &p);
        assert!(s.l_direct.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_occlusion_blocks_everything() {
        let p = SkyPatches::<f64>::new(145).unwrap();
        let sky = compose_sky_radiance(600.0, 150.0, SunPosition { zenith: 40.0, azimuth: 150.0 }, &p);
        let dc = vec![p.plane_coefficients([0.0, 0.0, 1.0])];
        let (d, f) = plane_irradiance(&dc, &[vec![1.0; 145]], &sky).unwrap();
        assert_eq!((d[0], f[0]), (0.0, 0.0));
    }

    #[test]
    fn selector_returns_patch_radiance() {
        let sky = SkyRadiance { l_direct: vec![1.0, 2.0, 3.0], l_diffuse: vec![4.0, 5.0, 6.0] };
        let (d, f) = plane_irradiance(&[vec![0.0, 1.0, 0.0]], &[vec![0.0; 3]], &sky).unwrap();
        assert_eq!((d[0], f[0]), (2.0, 5.0));
        assert!(plane_irradiance(&[vec![0.0, 1.0]], &[vec![0.0; 2]], &sky).is_err());
    }
}
