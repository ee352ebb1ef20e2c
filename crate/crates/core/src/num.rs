//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the electrical and thermal models are written against.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace<T: Real>(start: T, end: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let last = T::from_usize_lossy(n - 1);
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        end
                    } else {
                        start + (end - start) * T::from_usize_lossy(k) / last
                    }
                })
                .collect()
        }
    }
}

/// Monotone bracketed root search for a strictly decreasing function.
///
/// `f` returns the value and derivative. The bracket is expanded
/// geometrically until the sign changes, then a safeguarded Newton/bisection
/// hybrid runs until the step falls below `tol` (absolute, in x).
pub(crate) fn decreasing_root<T, F>(f: F, mut lo: T, mut hi: T, tol: T, max_iter: usize) -> Option<T>
where
    T: Real,
    F: Fn(T) -> (T, T),
{
    let two = T::lit(2.0);
    let mut expand = 0;
    loop {
        let f_lo = f(lo).0;
        if f_lo.is_nan() || expand > 64 {
            return None;
        }
        if f_lo >= T::zero() {
            break;
        }
        lo = lo - (hi - lo).max(T::one());
        expand += 1;
    }
    expand = 0;
    loop {
        let f_hi = f(hi).0;
        if f_hi.is_nan() || expand > 64 {
            return None;
        }
        if f_hi <= T::zero() {
            break;
        }
        hi = hi + (hi - lo).max(T::one());
        expand += 1;
    }

    let mut x = (lo + hi) / two;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x);
        if fx == T::zero() {
            return Some(x);
        }
        if fx > T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let mid = (lo + hi) / two;
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Some(x);
        }
        let step = if dfx < T::zero() && dfx.is_finite() { -fx / dfx } else { T::nan() };
        let newton = x + step;
        if newton > lo && newton < hi {
            x = newton;
            if step.abs() <= tol {
                return Some(x);
            }
        } else {
            x = mid;
        }
    }
    None
}

/// Maximum of `v * i` along the straight segment between two curve samples.
///
/// Returns `(v, i, p)` at the maximiser, which is either an endpoint or the
/// vertex of the quadratic `p(t)` when it lies inside the segment.
pub(crate) fn segment_power_max<T: Real>(a: (T, T), b: (T, T)) -> (T, T, T) {
    let (v0, i0) = a;
    let dv = b.0 - v0;
    let di = b.1 - i0;
    let pa = v0 * i0;
    let pb = b.0 * b.1;
    let mut best = if pb > pa { (b.0, b.1, pb) } else { (v0, i0, pa) };
    // p(t) = (v0 + t dv)(i0 + t di), concave when dv*di < 0
    let curv = dv * di;
    if curv < T::zero() {
        let t = -(v0 * di + i0 * dv) / (T::lit(2.0) * curv);
        if t > T::zero() && t < T::one() {
            let v = v0 + t * dv;
            let i = i0 + t * di;
            let p = v * i;
            if p > best.2 {
                best = (v, i, p);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(0.0_f64, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert!((g[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn root_of_line() {
        let r = decreasing_root(|x: f64| (3.0 - x, -1.0), 0.0, 1.0, 1e-14, 100).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn root_of_steep_exponential() {
        let f = |x: f64| (10.0 - (x / 0.03).exp_m1() - x, -(x / 0.03).exp() / 0.03 - 1.0);
        let r = decreasing_root(f, -1.0, 1.0, 1e-15, 200).unwrap();
        assert!(f(r).0.abs() < 1e-12, "residual {}", f(r).0);
    }

    #[test]
    fn segment_vertex_inside() {
        // i = 1 - v/10 from v=0 to v=10 has its power maximum at v=5
        let (v, i, p) = segment_power_max((0.0_f64, 1.0), (10.0, 0.0));
        assert!((v - 5.0).abs() < 1e-12);
        assert!((i - 0.5).abs() < 1e-12);
        assert!((p - 2.5).abs() < 1e-12);
    }
}
