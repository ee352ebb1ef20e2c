//! Solar position (NOAA general solar position algorithm).

use chrono::{DateTime, Datelike, Timelike, Utc};

/// Sun direction in horizontal coordinates, degrees.
///
/// Azimuth is measured clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunPosition<T = f64> {
    pub zenith: T,
    pub azimuth: T,
}

impl SunPosition<f64> {
    pub fn is_up(&self) -> bool {
        self.zenith < 90.0
    }

    /// Unit vector towards the sun (x east, y north, z up).
    pub fn direction(&self) -> [f64; 3] {
        let z = self.zenith.to_radians();
        let a = self.azimuth.to_radians();
        [z.sin() * a.sin(), z.sin() * a.cos(), z.cos()]
    }
}

fn julian_day(ts: &DateTime<Utc>) -> f64 {
    let secs = ts.timestamp() as f64 + f64::from(ts.timestamp_subsec_nanos()) * 1e-9;
    secs / 86_400.0 + 2_440_587.5
}

/// Geometric (refraction-free) solar zenith and azimuth at `ts` for an
/// observer at `latitude`/`longitude` (degrees, east positive).
pub fn solar_position(ts: &DateTime<Utc>, latitude: f64, longitude: f64) -> SunPosition<f64> {
    let jc = (julian_day(ts) - 2_451_545.0) / 36_525.0;

    let mean_long = (280.46646 + jc * (36_000.76983 + jc * 0.000_303_2)).rem_euclid(360.0);
    let mean_anom = 357.52911 + jc * (35_999.05029 - 0.000_153_7 * jc);
    let ecc = 0.016_708_634 - jc * (0.000_042_037 + 0.000_000_126_7 * jc);
    let m = mean_anom.to_radians();
    let center = m.sin() * (1.914602 - jc * (0.004817 + 0.000014 * jc))
        + (2.0 * m).sin() * (0.019993 - 0.000101 * jc)
        + (3.0 * m).sin() * 0.000289;
    let true_long = mean_long + center;
    let omega = (125.04 - 1934.136 * jc).to_radians();
    let app_long = true_long - 0.00569 - 0.00478 * omega.sin();
    let mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.00256 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.to_radians().sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0 = mean_long.to_radians();
    let eq_time = 4.0
        * (y * (2.0 * l0).sin() - 2.0 * ecc * m.sin() + 4.0 * ecc * y * m.sin() * (2.0 * l0).cos()
            - 0.5 * y * y * (4.0 * l0).sin()
            - 1.25 * ecc * ecc * (2.0 * m).sin())
        .to_degrees();

    let minutes = f64::from(ts.hour()) * 60.0
        + f64::from(ts.minute())
        + (f64::from(ts.second()) + f64::from(ts.nanosecond()) * 1e-9) / 60.0;
    let true_solar = (minutes + eq_time + 4.0 * longitude).rem_euclid(1440.0);
    let hour_angle = true_solar / 4.0 - 180.0;

    let lat = latitude.to_radians();
    let ha = hour_angle.to_radians();
    let cos_zen = (lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos()).clamp(-1.0, 1.0);
    let zen = cos_zen.acos();

    let denom = lat.cos() * zen.sin();
    let azimuth = if denom.abs() < 1e-12 {
        // sun at zenith/nadir or observer at a pole: azimuth is undefined
        if lat >= 0.0 {
            180.0
        } else {
            0.0
        }
    } else {
        let c = ((lat.sin() * cos_zen - decl.sin()) / denom).clamp(-1.0, 1.0);
        let a = c.acos().to_degrees();
        if hour_angle > 0.0 {
            (a + 180.0).rem_euclid(360.0)
        } else {
            (540.0 - a).rem_euclid(360.0)
        }
    };
    SunPosition { zenith: zen.to_degrees(), azimuth: azimuth.rem_euclid(360.0) }
}

/// Day of the year, 1-based.
pub fn day_of_year(ts: &DateTime<Utc>) -> u32 {
    ts.ordinal()
}
