//! Composite trapezoid quadrature and finite differences on uniform node grids.
//!
//! Every diagnostic in the crate sums in increasing node order so results are
//! reproducible bit for bit.

use crate::error::{Error, Result};

/// Composite trapezoid rule over all samples.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    trapezoid_range(f, h, 0, f.len().saturating_sub(1))
}

/// Trapezoid rule over nodes `lo..=hi`.
pub fn trapezoid_range(f: &[f64], h: f64, lo: usize, hi: usize) -> f64 {
    if hi <= lo || f.is_empty() {
        return 0.0;
    }
    let hi = hi.min(f.len() - 1);
    if hi <= lo {
        return 0.0;
    }
    let mut s = 0.5 * (f[lo] + f[hi]);
    for v in &f[lo + 1..hi] {
        s += v;
    }
    s * h
}

/// Trapezoid weight of node `i` in a rule over `lo..=hi`.
#[inline]
pub fn trapezoid_weight(i: usize, lo: usize, hi: usize) -> f64 {
    if hi == lo {
        0.0
    } else if i == lo || i == hi {
        0.5
    } else {
        1.0
    }
}

/// First derivative: centered in the interior, second-order one-sided at the ends.
pub fn derivative(w: &[f64], h: f64) -> Vec<f64> {
    let n = w.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    if n == 2 {
        let s = (w[1] - w[0]) / h;
        return vec![s, s];
    }
    let inv2h = 0.5 / h;
    d[0] = (-3.0 * w[0] + 4.0 * w[1] - w[2]) * inv2h;
    for i in 1..n - 1 {
        d[i] = (w[i + 1] - w[i - 1]) * inv2h;
    }
    d[n - 1] = (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) * inv2h;
    d
}

/// Node index of `value` on a grid of spacing `h`; fails unless `value` is a node.
pub fn node_index(name: &'static str, value: f64, h: f64) -> Result<i64> {
    let k = (value / h).round();
    if (value - k * h).abs() > 1e-9 * h.max(value.abs()) {
        return Err(Error::OffGrid { name, value, h });
    }
    Ok(k as i64)
}

/// Nearest node index, clamped to `0..=max`.
pub fn nearest_node(value: f64, h: f64, max: usize) -> usize {
    let k = (value / h).round();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(max)
    }
}
