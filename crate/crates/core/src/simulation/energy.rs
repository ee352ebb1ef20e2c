//! Instantaneous and cumulative energy yield.
//!
//! Energies are held as integer counts of `2^-20` Wh, so sums are exact,
//! independent of accumulation order and split points.

use std::collections::BTreeMap;
use std::ops::Range;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};

/// Energy quanta per watt-hour.
pub const QUANTA_PER_WH: f64 = 1_048_576.0;

/// `p * dt` rounded to the nearest quantum.
pub fn energy_quanta(power_w: f64, dt_s: f64) -> i64 {
    (power_w * dt_s / 3600.0 * QUANTA_PER_WH).round() as i64
}

pub fn quanta_to_wh(q: i64) -> f64 {
    q as f64 / QUANTA_PER_WH
}

/// `YYYY-MM` bucket label.
pub fn month_key(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m").to_string()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct YieldSeries {
    pub timestamps: Vec<DateTime<Utc>>,
    /// DC power per timestep, W.
    pub power: Vec<f64>,
    /// Energy per timestep, Wh.
    pub y_inst: Vec<f64>,
    pub quanta: Vec<i64>,
    /// Total energy, Wh.
    pub y_cum: f64,
    pub monthly: BTreeMap<String, f64>,
    pub step_seconds: f64,
}

impl YieldSeries {
    pub fn from_power(timestamps: Vec<DateTime<Utc>>, power: Vec<f64>, step_seconds: f64) -> Result<Self> {
        if timestamps.len() != power.len() {
            return Err(Error::LengthMismatch { left: timestamps.len(), right: power.len() });
        }
        let quanta: Vec<i64> = power.iter().map(|&p| energy_quanta(p, step_seconds)).collect();
        let y_inst = quanta.iter().map(|&q| quanta_to_wh(q)).collect();
        let mut months: BTreeMap<String, i64> = BTreeMap::new();
        for (ts, &q) in timestamps.iter().zip(&quanta) {
            *months.entry(month_key(ts)).or_default() += q;
        }
        Ok(Self {
            y_cum: quanta_to_wh(quanta.iter().sum()),
            monthly: months.into_iter().map(|(k, q)| (k, quanta_to_wh(q))).collect(),
            timestamps,
            power,
            y_inst,
            quanta,
            step_seconds,
        })
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Energy over the timesteps in `range`, Wh.
    pub fn cumulative_between(&self, range: Range<usize>) -> f64 {
        quanta_to_wh(self.quanta[range].iter().sum())
    }
}
