//! Sampled current-voltage characteristics.

use std::io::Write;

use crate::error::{Error, Result};
use crate::num::{segment_power_max, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CurveLevel {
    #[default]
    Cell,
    Substring,
    Module,
    OptimizedModule,
    String,
    System,
}

impl CurveLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveLevel::Cell => "cell",
            CurveLevel::Substring => "substring",
            CurveLevel::Module => "module",
            CurveLevel::OptimizedModule => "optimized-module",
            CurveLevel::String => "string",
            CurveLevel::System => "system",
        }
    }
}

/// Piecewise-linear IV characteristic.
///
/// Points are ordered by voltage. Voltage is non-decreasing and current is
/// non-increasing along the sequence, and no two consecutive points coincide.
/// Repeated voltages (vertical segments) appear where bypass diodes clamp a
/// module: such a module carries any current at the clamp voltage.
#[derive(Debug, Clone, PartialEq)]
pub struct IvCurve<T> {
    points: Vec<(T, T)>,
    pub level: CurveLevel,
    pub source: String,
}

/// Maximum power point (or any operating point) of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerPoint<T> {
    pub v: T,
    pub i: T,
    pub p: T,
}

impl<T: Real> PowerPoint<T> {
    pub fn new(v: T, i: T) -> Self {
        Self { v, i, p: v * i }
    }

    pub fn zero() -> Self {
        Self { v: T::zero(), i: T::zero(), p: T::zero() }
    }
}

impl<T: Real> IvCurve<T> {
    /// Builds a curve from `(v, i)` points already ordered by voltage.
    pub fn new(points: Vec<(T, T)>, level: CurveLevel) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve(format!("{} point(s), need at least 2", points.len())));
        }
        for (k, w) in points.windows(2).enumerate() {
            let ((v0, i0), (v1, i1)) = (w[0], w[1]);
            if !(v0.is_finite() && i0.is_finite() && v1.is_finite() && i1.is_finite()) {
                return Err(Error::InvalidCurve(format!("non-finite point near index {k}")));
            }
            if v1 < v0 || i1 > i0 {
                return Err(Error::InvalidCurve(format!(
                    "not monotone at index {k}: ({v0}, {i0}) -> ({v1}, {i1})"
                )));
            }
            if v1 == v0 && i1 == i0 {
                return Err(Error::InvalidCurve(format!("duplicate point at index {k}")));
            }
        }
        Ok(Self { points, level, source: String::new() })
    }

    /// Builds a curve from `(i, v)` samples taken on an ascending current grid.
    ///
    /// Rounding can leave voltage sums a few ulps out of order; such samples
    /// are pulled onto a running minimum. Exact duplicates are dropped.
    pub fn from_current_samples(samples: &[(T, T)], level: CurveLevel) -> Result<Self> {
        let mut pts: Vec<(T, T)> = Vec::with_capacity(samples.len());
        let mut v_min = T::infinity();
        for &(i, v) in samples {
            let v = v.min(v_min);
            v_min = v;
            pts.push((v, i));
        }
        pts.reverse();
        pts.dedup();
        Self::new(pts, level)
    }

    /// Builds a curve from `(v, i)` samples on an ascending voltage grid.
    pub fn from_voltage_samples(samples: &[(T, T)], level: CurveLevel) -> Result<Self> {
        let mut pts: Vec<(T, T)> = Vec::with_capacity(samples.len());
        let mut i_min = T::infinity();
        for &(v, i) in samples {
            let i = i.min(i_min);
            i_min = i;
            pts.push((v, i));
        }
        pts.dedup();
        Self::new(pts, level)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn v_min(&self) -> T {
        self.points[0].0
    }

    pub fn v_max(&self) -> T {
        self.points[self.points.len() - 1].0
    }

    /// Largest current on the curve (at its lowest voltage).
    pub fn i_max(&self) -> T {
        self.points[0].1
    }

    pub fn i_min(&self) -> T {
        self.points[self.points.len() - 1].1
    }

    /// Current at voltage `v`; clamped to the end points outside the domain.
    ///
    /// On a vertical segment the largest current at that voltage is returned.
    pub fn current_at(&self, v: T) -> T {
        let pts = &self.points;
        let k = pts.partition_point(|p| p.0 < v);
        if k == 0 {
            return pts[0].1;
        }
        if k == pts.len() {
            return pts[k - 1].1;
        }
        let (v0, i0) = pts[k - 1];
        let (v1, i1) = pts[k];
        if v1 == v {
            return i1;
        }
        i0 + (i1 - i0) * (v - v0) / (v1 - v0)
    }

    /// Voltage at current `i`; clamped to the end points outside the range.
    pub fn voltage_at(&self, i: T) -> T {
        // points are ordered by descending current
        let k = self.points.partition_point(|p| p.1 > i);
        self.voltage_from(k, i)
    }

    /// Voltages at every current of an ascending grid, in one sweep.
    pub fn voltages_at(&self, currents: &[T]) -> Vec<T> {
        let pts = &self.points;
        let mut k = pts.len();
        let mut out = Vec::with_capacity(currents.len());
        for &i in currents {
            while k > 0 && pts[k - 1].1 <= i {
                k -= 1;
            }
            out.push(self.voltage_from(k, i));
        }
        out
    }

    /// `k` is the first point whose current does not exceed `i`.
    fn voltage_from(&self, k: usize, i: T) -> T {
        let pts = &self.points;
        if k == 0 {
            return pts[0].0;
        }
        if k == pts.len() {
            return pts[k - 1].0;
        }
        let (v0, i0) = pts[k - 1];
        let (v1, i1) = pts[k];
        if i1 == i {
            return v1;
        }
        v0 + (v1 - v0) * (i - i0) / (i1 - i0)
    }

    /// Current at zero voltage.
    pub fn isc(&self) -> T {
        self.current_at(T::zero())
    }

    /// Voltage at zero current.
    pub fn voc(&self) -> T {
        self.voltage_at(T::zero())
    }

    /// Global maximum of `v * i` over the piecewise-linear curve.
    ///
    /// Every segment is maximised in closed form (power is quadratic along a
    /// straight segment). Ties resolve to the lowest voltage.
    pub fn max_power_point(&self) -> PowerPoint<T> {
        let pts = &self.points;
        let (v, i) = pts[0];
        let mut best = PowerPoint { v, i, p: v * i };
        for w in pts.windows(2) {
            let (v, i, p) = segment_power_max(w[0], w[1]);
            if p > best.p {
                best = PowerPoint { v, i, p };
            }
        }
        best
    }

    /// Writes `v,i` rows preceded by a `#` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: &str) -> std::io::Result<()> {
        writeln!(out, "# level={} {}", self.level.as_str(), comment)?;
        writeln!(out, "v,i")?;
        for (v, i) in &self.points {
            writeln!(out, "{v},{i}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> IvCurve<f64> {
        let pts = (0..=100).map(|k| {
            let v = k as f64 * 0.1;
            (v, 1.0 - v / 10.0)
        });
        IvCurve::new(pts.collect(), CurveLevel::Cell).unwrap()
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(IvCurve::new(vec![(0.0, 1.0), (1.0, 2.0)], CurveLevel::Cell).is_err());
        assert!(IvCurve::new(vec![(1.0, 1.0), (0.0, 0.5)], CurveLevel::Cell).is_err());
        assert!(IvCurve::new(vec![(0.0, 1.0)], CurveLevel::Cell).is_err());
        assert!(IvCurve::new(vec![(0.0, 1.0), (0.0, 1.0)], CurveLevel::Cell).is_err());
    }

    #[test]
    fn interpolation_both_ways() {
        let c = line();
        assert!((c.current_at(2.55) - 0.745).abs() < 1e-12);
        assert!((c.voltage_at(0.745) - 2.55).abs() < 1e-12);
        assert_eq!(c.current_at(-5.0), 1.0);
        assert_eq!(c.current_at(50.0), 0.0);
        assert_eq!(c.voltage_at(3.0), 0.0);
        assert!((c.isc() - 1.0).abs() < 1e-12);
        assert!((c.voc() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_segment_carries_any_current() {
        let c = IvCurve::new(vec![(-2.1, 5.0), (-2.1, 3.0), (0.0, 2.0), (1.0, 0.0)], CurveLevel::Module).unwrap();
        assert_eq!(c.voltage_at(4.0), -2.1);
        assert_eq!(c.voltage_at(100.0), -2.1);
        assert_eq!(c.current_at(-2.1), 5.0);
    }

    #[test]
    fn sweep_matches_pointwise() {
        let c = IvCurve::new(vec![(-2.1, 5.0), (-2.1, 3.0), (0.0, 2.0), (0.5, 2.0), (1.0, 0.0)], CurveLevel::Module).unwrap();
        let grid: Vec<f64> = (0..=60).map(|k| k as f64 * 0.1 - 0.5).collect();
        let swept = c.voltages_at(&grid);
        for (i, v) in grid.iter().zip(swept) {
            assert_eq!(v, c.voltage_at(*i), "i = {i}");
        }
    }

    #[test]
    fn mpp_of_line() {
        let m = line().max_power_point();
        assert!((m.v - 5.0).abs() < 1e-12 && (m.i - 0.5).abs() < 1e-12 && (m.p - 2.5).abs() < 1e-12);
    }

    #[test]
    fn current_samples_are_reordered() {
        let c = IvCurve::from_current_samples(&[(0.0, 10.0), (1.0, 9.0), (2.0, 0.0)], CurveLevel::String).unwrap();
        assert_eq!(c.points(), &[(0.0, 2.0), (9.0, 1.0), (10.0, 0.0)]);
    }
}
