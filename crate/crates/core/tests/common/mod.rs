#![allow(dead_code)]

use nlw_core::diagnostics::{EnergyLedger, MonitorSpec, Trajectory};
use nlw_core::model::{smooth_bump, InitialData, ModelParams, RadialPair};
use nlw_core::solver::{evolve, GridSpec};

pub fn run(data: &InitialData, params: &ModelParams, grid: &GridSpec, spec: &MonitorSpec) -> (Trajectory, EnergyLedger) {
    let pair = data.radial_pair(grid.n_r, grid.h, params, Some(1e-12)).unwrap();
    evolve(&pair, params, grid, spec).unwrap()
}

/// Bump supported in `[2, 3]`.
pub fn bump(x: f64) -> f64 {
    smooth_bump((x - 2.5) / 0.5)
}

/// Odd-extension d'Alembert solution with `w0 = f` and `w1 = g'` on `r >= 0`
/// (`f`, `g` vanish near the origin).
pub fn dalembert(f: &dyn Fn(f64) -> f64, g: &dyn Fn(f64) -> f64, r: f64, t: f64) -> f64 {
    let odd = |x: f64| if x < 0.0 { -f(-x) } else { f(x) };
    // the antiderivative of the odd extension of g' is the even extension of g
    let even = |x: f64| g(x.abs());
    0.5 * (odd(r - t) + odd(r + t)) + 0.5 * (even(r + t) - even(r - t))
}

pub fn pair_from(f: &dyn Fn(f64) -> f64, f1: &dyn Fn(f64) -> f64, n: usize, h: f64) -> RadialPair {
    RadialPair {
        w0: (0..n).map(|i| f(i as f64 * h)).collect(),
        w1: (0..n).map(|i| f1(i as f64 * h)).collect(),
        h,
        power_tail: None,
    }
}

pub fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    err / scale
}
