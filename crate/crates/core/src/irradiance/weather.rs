//! Weather time series and external irradiance overrides (CSV).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta, Utc};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Step assumed for a series with a single record.
pub const DEFAULT_STEP_SECONDS: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    pub timestamp: DateTime<Utc>,
    /// Direct normal irradiance, W/m².
    pub dni: f64,
    /// Diffuse horizontal irradiance, W/m².
    pub dhi: f64,
    /// Air temperature, °C.
    pub temp_air: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
}

impl WeatherRecord {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dni.is_finite()
            && self.dhi.is_finite()
            && self.temp_air.is_finite()
            && self.wind_speed.is_finite()
            && self.dni >= 0.0
            && self.dhi >= 0.0
            && self.wind_speed >= 0.0
            && self.temp_air > -273.15;
        if ok {
            Ok(())
        } else {
            Err(Error::Parse { context: format!("weather record {}", self.timestamp), message: "value out of range".into() })
        }
    }
}

/// Chronological weather records on a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    records: Vec<WeatherRecord>,
    step: TimeDelta,
}

impl WeatherSeries {
    /// Validates records and infers the step. A lone record gets
    /// [`DEFAULT_STEP_SECONDS`] unless `step` is given.
    pub fn new(records: Vec<WeatherRecord>, step: Option<TimeDelta>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        let inferred = match records.as_slice() {
            [a, b, ..] => b.timestamp - a.timestamp,
            _ => step.unwrap_or(TimeDelta::seconds(DEFAULT_STEP_SECONDS)),
        };
        if let Some(s) = step {
            if s != inferred {
                return Err(Error::NonUniformTimestep { index: 1 });
            }
        }
        if inferred <= TimeDelta::zero() {
            return Err(Error::NonUniformTimestep { index: 1 });
        }
        for (k, w) in records.windows(2).enumerate() {
            if w[1].timestamp - w[0].timestamp != inferred {
                return Err(Error::NonUniformTimestep { index: k + 1 });
            }
        }
        Ok(Self { records, step: inferred })
    }

    /// Cloudless day at one site: Meinel-type beam attenuation, diffuse at a
    /// tenth of the beam on the horizontal, air temperature swinging between
    /// `t_min` at sunrise-ish and `t_max` mid-afternoon, constant 1 m/s wind.
    pub fn clear_sky_day(
        date: chrono::NaiveDate,
        latitude: f64,
        longitude: f64,
        step: TimeDelta,
        t_min: f64,
        t_max: f64,
    ) -> Result<Self> {
        if step <= TimeDelta::zero() {
            return Err(Error::Config("step must be positive".into()));
        }
        let start = date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
        let n = (TimeDelta::days(1).num_milliseconds() / step.num_milliseconds()).max(1);
        let doy = super::solar::day_of_year(&start);
        let ecc = 1.0 + 0.033 * (2.0 * std::f64::consts::PI * f64::from(doy) / 365.0).cos();
        let records = (0..n)
            .map(|k| {
                let ts = start + step * k as i32;
                let sun = super::solar::solar_position(&ts, latitude, longitude);
                let cz = sun.zenith.to_radians().cos();
                let (dni, dhi) = if cz > 0.01 {
                    let am = 1.0 / cz;
                    let dni = super::field::SOLAR_CONSTANT * ecc * 0.7_f64.powf(am.powf(0.678));
                    (dni, 0.1 * dni * cz + 20.0 * cz)
                } else {
                    (0.0, 0.0)
                };
                let local_h = (ts - start).num_seconds() as f64 / 3600.0 + longitude / 15.0;
                let phase = 2.0 * std::f64::consts::PI * (local_h - 15.0) / 24.0;
                let temp_air = 0.5 * (t_min + t_max) + 0.5 * (t_max - t_min) * phase.cos();
                WeatherRecord { timestamp: ts, dni, dhi, temp_air, wind_speed: 1.0 }
            })
            .collect();
        Self::new(records, Some(step))
    }

    pub fn records(&self) -> &[WeatherRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn step(&self) -> TimeDelta {
        self.step
    }

    pub fn step_seconds(&self) -> f64 {
        self.step.num_milliseconds() as f64 / 1000.0
    }

    /// Records in `range`, keeping the step.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self { records: self.records[range].to_vec(), step: self.step }
    }

    pub fn find(&self, ts: &DateTime<Utc>) -> Option<usize> {
        self.records.binary_search_by(|r| r.timestamp.cmp(ts)).ok()
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            timestamp: String,
            dni: f64,
            dhi: f64,
            temp_air: f64,
            wind_speed: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["timestamp", "dni", "dhi", "temp_air", "wind_speed"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                context: "weather header".into(),
                message: format!("expected `{}`", expected.join(",")),
            });
        }
        let mut records = Vec::new();
        for (k, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse { context: format!("weather row {}", k + 1), message: e.to_string() })?;
            records.push(WeatherRecord {
                timestamp: parse_timestamp(&row.timestamp)?,
                dni: row.dni,
                dhi: row.dhi,
                temp_air: row.temp_air,
                wind_speed: row.wind_speed,
            });
        }
        Self::new(records, None)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Writes the series in the format [`WeatherSeries::from_reader`] accepts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "dni", "dhi", "temp_air", "wind_speed"])?;
        for r in &self.records {
            w.write_record([
                r.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                r.dni.to_string(),
                r.dhi.to_string(),
                r.temp_air.to_string(),
                r.wind_speed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses RFC 3339 or offset-free ISO-8601 (taken as UTC) timestamps.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(Error::Parse { context: "timestamp".into(), message: format!("cannot parse `{s}`") })
}

/// Externally computed effective irradiance per timestamp and cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IrradianceOverrides {
    by_time: BTreeMap<DateTime<Utc>, Vec<(usize, f64)>>,
}

impl IrradianceOverrides {
    pub fn get(&self, ts: &DateTime<Utc>) -> Option<&[(usize, f64)]> {
        self.by_time.get(ts).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.by_time.is_empty()
    }

    pub fn max_cell_index(&self) -> Option<usize> {
        self.by_time.values().flatten().map(|&(c, _)| c).max()
    }

    /// Reads `timestamp,cell_index,e_eff` rows.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            timestamp: String,
            cell_index: usize,
            e_eff: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut by_time: BTreeMap<DateTime<Utc>, Vec<(usize, f64)>> = BTreeMap::new();
        for (k, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse { context: format!("irradiance row {}", k + 1), message: e.to_string() })?;
            if !(row.e_eff.is_finite() && row.e_eff >= 0.0) {
                return Err(Error::Parse { context: format!("irradiance row {}", k + 1), message: "e_eff must be >= 0".into() });
            }
            by_time.entry(parse_timestamp(&row.timestamp)?).or_default().push((row.cell_index, row.e_eff));
        }
        Ok(Self { by_time })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "timestamp,dni,dhi,temp_air,wind_speed\n\
        2022-06-21T10:00:00Z,700,120,21.5,2.0\n\
        2022-06-21T10:01:00Z,705,118,21.6,2.1\n\
        2022-06-21 10:02:00,710,117,21.6,1.9\n";

    #[test]
    fn csv_round_trip() {
        let w = WeatherSeries::from_reader(CSV.as_bytes()).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(WeatherSeries::from_reader(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn parses_and_infers_step() {
        let w = WeatherSeries::from_reader(CSV.as_bytes()).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.step_seconds(), 60.0);
        assert_eq!(w.records()[2].dni, 710.0);
    }

    #[test]
    fn rejects_gaps() {
        let bad = CSV.replace("10:02:00", "10:03:00");
        assert!(matches!(WeatherSeries::from_reader(bad.as_bytes()), Err(Error::NonUniformTimestep { index: 2 })));
    }

    #[test]
    fn rejects_negative_values_and_bad_header() {
        let bad = CSV.replace("705,118", "-5,118");
        assert!(WeatherSeries::from_reader(bad.as_bytes()).is_err());
        let bad = CSV.replace("dhi", "ghi");
        assert!(WeatherSeries::from_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn overrides_group_by_time() {
        let s = "timestamp,cell_index,e_eff\n2022-06-21T10:00:00Z,3,120\n2022-06-21T10:00:00Z,4,80\n";
        let o = IrradianceOverrides::from_reader(s.as_bytes()).unwrap();
        let ts = parse_timestamp("2022-06-21T10:00:00Z").unwrap();
        assert_eq!(o.get(&ts).unwrap(), &[(3, 120.0), (4, 80.0)]);
        assert_eq!(o.max_cell_index(), Some(4));
    }
}
