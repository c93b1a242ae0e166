//! Characteristic limits, free-wave comparison, spacetime tail norms and
//! power-law fits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{time_integral, Trajectory};
use crate::error::{Error, Result};
use crate::quad::node_index;
use crate::solver::evolve_linear_levels;

/// Least-squares power law `y = amplitude * t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub amplitude: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line `y = a + b x`; returns `(a, b, r^2)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (intercept, slope, r2)
}

/// Fit `y = A t^b` on `(log t, log y)` over the points inside `window` (inclusive).
pub fn fit_power_law(t: &[f64], y: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    fit_power_law_min(t, y, window, 4)
}

/// [`fit_power_law`] with a custom minimum point count (at least 2).
pub fn fit_power_law_min(t: &[f64], y: &[f64], window: Option<(f64, f64)>, min_points: usize) -> Result<FitResult> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for (a, b) in t.iter().zip(y) {
        if *a < lo || *a > hi {
            continue;
        }
        if !(*b > 0.0) || !(*a > 0.0) {
            return Err(Error::Degenerate(format!("non-positive sample ({a}, {b}) in the fit window")));
        }
        lx.push(a.ln());
        ly.push(b.ln());
        t_lo = t_lo.min(*a);
        t_hi = t_hi.max(*a);
    }
    if lx.len() < min_points.max(2) {
        return Err(Error::Degenerate(format!(
            "{} points in the fit window (need {})",
            lx.len(),
            min_points.max(2)
        )));
    }
    let (a, b, r2) = linear_fit(&lx, &ly);
    Ok(FitResult {
        exponent: b,
        amplitude: a.exp(),
        t_lo,
        t_hi,
        r_squared: r2,
        points: lx.len(),
    })
}

/// Least-squares `y = a + b log(1 + T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

pub fn fit_log_growth(t: &[f64], y: &[f64]) -> Result<LogFit> {
    if t.len() < 3 || t.len() != y.len() {
        return Err(Error::Degenerate(format!("{} points for a log fit (need 3)", t.len())));
    }
    let x: Vec<f64> = t.iter().map(|v| v.ln_1p()).collect();
    let (a, b, r_squared) = linear_fit(&x, y);
    Ok(LogFit { a, b, r_squared })
}

/// Powers of two in `[lo, hi]`.
pub fn dyadic_times(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = lo.log2().ceil() as i32;
    loop {
        let v = 2f64.powi(k);
        if v > hi * (1.0 + 1e-12) {
            break;
        }
        if v >= lo * (1.0 - 1e-12) {
            out.push(v);
        }
        k += 1;
    }
    out
}

/// Samples of `(w_r - w_t)(t - tau, t)` and the extrapolated limit `g_+(tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharTrace {
    pub tau: f64,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub g_plus: f64,
    /// Decay exponent of consecutive dyadic differences, when they are resolvable.
    pub rate_exponent: Option<f64>,
    /// Distances `t - tau` used by the fit.
    pub window: (f64, f64),
}

/// Fit `d(t) = g + A (t - tau)^(-(p-2)/(p+1))` over dyadic distances `t - tau`.
pub fn extract_g_plus(traj: &Trajectory, tau: f64) -> Result<CharTrace> {
    let h = traj.h();
    node_index("tau", tau, h)?;
    let line = traj
        .outward_lines
        .iter()
        .find(|l| (l.label - tau).abs() <= 1e-9 * h)
        .ok_or_else(|| Error::OutOfDomain(format!("outward characteristic tau = {tau} not monitored")))?;
    let lo = (1.0 / 8.0f64).max(h);
    let span_end = line.samples.last().map(|s| s.t - tau).unwrap_or(0.0);
    let mut dist = Vec::new();
    let mut vals = Vec::new();
    for d in dyadic_times(lo, span_end) {
        let target = tau + d;
        if let Some(s) = line.samples.iter().find(|s| (s.t - target).abs() <= 1e-9 * h.max(target.abs())) {
            dist.push(d);
            vals.push(s.combo);
        }
    }
    if dist.len() < 8 {
        return Err(Error::ShortSpan { found: dist.len() });
    }
    let p = traj.params.p;
    let alpha = (p - 2.0) / (p + 1.0);
    let x: Vec<f64> = dist.iter().map(|d| d.powf(-alpha)).collect();
    let (g, _, _) = linear_fit(&x, &vals);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let resolvable = diffs.iter().all(|d| *d > 1e-10 * scale.max(1e-300));
    let rate_exponent = if resolvable {
        fit_power_law(&dist[..diffs.len()], &diffs, None).ok().map(|f| f.exponent)
    } else {
        None
    };
    Ok(CharTrace {
        tau,
        t: line.samples.iter().map(|s| s.t).collect(),
        values: line.samples.iter().map(|s| s.combo).collect(),
        g_plus: g,
        rate_exponent,
        window: (dist[0], *dist.last().unwrap_or(&0.0)),
    })
}

/// Energy-norm distance at `t'` between the nonlinear solution and the free
/// wave launched from the nonlinear state at `t` (same discrete propagator, `F = 0`).
pub fn free_wave_defect(traj: &Trajectory, t: f64, t_prime: f64) -> Result<f64> {
    if !(t < t_prime) {
        return Err(Error::OutOfDomain(format!("need t < t' (t = {t}, t' = {t_prime})")));
    }
    let start = traj.snapshot_at(t)?;
    let end = traj.snapshot_at(t_prime)?;
    let h = traj.h();
    let steps = end.step - start.step;
    let (prev, curr, next) = evolve_linear_levels(&start.w_prev, &start.w, steps, &traj.params, h);
    let m = end.valid_hi;
    let inv2h = 0.5 / h;
    let mut dens = vec![0.0; m + 1];
    let dw = |i: usize| end.w[i] - curr[i];
    dens[0] = ((-3.0 * dw(0) + 4.0 * dw(1) - dw(2)) * inv2h).powi(2);
    for (i, d) in dens.iter_mut().enumerate().skip(1) {
        let dr = (dw(i + 1) - dw(i - 1)) * inv2h;
        let dt = ((end.w_next[i] - next[i]) - (end.w_prev[i] - prev[i])) * inv2h;
        *d = dr * dr + dt * dt;
    }
    Ok((4.0 * PI * crate::quad::trapezoid(&dens, h)).sqrt())
}

/// A truncated time integral with its convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    /// `int_{t0}^{t_max}`.
    pub value: f64,
    /// Share of `value` from the last tenth of the window.
    pub tail_fraction: f64,
    /// Power-law extrapolation of `int_{t_max}^inf`, when the integrand decays fast enough.
    pub extrapolated_tail: Option<f64>,
}

/// `||u||^p_{L^p L^(2p)([t0, t_max])} = int (int |u|^(2p) dx)^(1/2) dt`.
pub fn tail_norm_lp_l2p(traj: &Trajectory, t0: f64) -> Result<TailValue> {
    let h = traj.h();
    let k0 = traj.level("t0", t0)?;
    let last = traj.levels.t.len() - 1;
    if k0 >= last {
        return Err(Error::OutOfDomain(format!("t0 = {t0} leaves no window before t_max")));
    }
    let series = &traj.levels.lp_l2p;
    let value = time_integral(series, h, k0, last);
    let kt = last - (last - k0) / 10;
    let tail_fraction = if value > 0.0 {
        time_integral(series, h, kt, last) / value
    } else {
        0.0
    };
    if tail_fraction > 0.1 {
        return Err(Error::TailNotConverged { fraction: tail_fraction });
    }
    // extrapolate from the second half of the run
    let half = last / 2;
    let ts: Vec<f64> = (half.max(1)..=last).step_by(((last - half) / 16).max(1)).map(|k| k as f64 * h).collect();
    let ys: Vec<f64> = ts.iter().map(|t| series[(t / h).round() as usize]).collect();
    let extrapolated_tail = fit_power_law(&ts, &ys, None).ok().and_then(|f| {
        if f.exponent < -1.0 {
            let tm = last as f64 * h;
            Some(-f.amplitude * tm.powf(f.exponent + 1.0) / (f.exponent + 1.0))
        } else {
            None
        }
    });
    Ok(TailValue {
        value,
        tail_fraction,
        extrapolated_tail,
    })
}

/// `int_0^T int_{|x| > 1 + t} |u|^(2(p-1)) dx dt`.
pub fn tail_norm_l2p2(traj: &Trajectory, t_end: f64) -> Result<f64> {
    let k = traj.level("T", t_end)?;
    Ok(time_integral(&traj.levels.exterior, traj.h(), 0, k))
}

/// `max` over dyadic `t` in `[lo, t_max]` of `E_-(t) t^kappa / K`, with the maximizing time.
pub fn inward_decay_constant(traj: &Trajectory, lo: f64) -> Result<(f64, f64)> {
    let k = crate::model::k_functional(&traj.initial, &traj.params)?.k;
    if k <= 0.0 {
        return Ok((0.0, lo));
    }
    let mut best = (f64::NEG_INFINITY, lo);
    for t in dyadic_times(lo, traj.t_max()) {
        let idx = traj.level("t", t)?;
        let v = traj.levels.e_minus[idx] * t.powf(traj.params.kappa) / k;
        if v > best.0 {
            best = (v, t);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(Error::OutOfDomain(format!("no dyadic time in [{lo}, {}]", traj.t_max())));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let t = dyadic_times(1.0, 1024.0);
        let y: Vec<f64> = t.iter().map(|v| v.powf(-0.5)).collect();
        let f = fit_power_law(&t, &y, None).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.amplitude - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_exponent() {
        let t = dyadic_times(1.0, 64.0);
        let y = vec![3.0; t.len()];
        let f = fit_power_law(&t, &y, None).unwrap();
        assert!(f.exponent.abs() < 1e-12);
        assert!((f.amplitude - 3.0).abs() < 1e-12);
    }

    #[test]
    fn modulated_power_law() {
        let t = dyadic_times(1.0, 2f64.powi(20));
        let y: Vec<f64> = t.iter().map(|v| v.powf(-0.5) * (1.0 + 0.05 * v.ln().sin())).collect();
        let f = fit_power_law(&t, &y, None).unwrap();
        assert!((f.exponent + 0.5).abs() < 0.03, "{}", f.exponent);
    }

    #[test]
    fn degenerate_inputs() {
        let t = [1.0, 2.0, 4.0, 8.0];
        assert!(matches!(fit_power_law(&t, &[1.0, 0.0, 1.0, 1.0], None), Err(Error::Degenerate(_))));
        assert!(matches!(fit_power_law(&t[..3], &[1.0, 1.0, 1.0], None), Err(Error::Degenerate(_))));
        // points outside the window are ignored
        let f = fit_power_law(&[1.0, 2.0, 4.0, 8.0, 16.0], &[-1.0, 2.0, 4.0, 8.0, 16.0], Some((2.0, 16.0))).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_growth_fit() {
        let t = [4.0, 8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = t.iter().map(|v: &f64| 0.3 + 2.0 * v.ln_1p()).collect();
        let f = fit_log_growth(&t, &y).unwrap();
        assert!((f.a - 0.3).abs() < 1e-12 && (f.b - 2.0).abs() < 1e-12);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn dyadic_grid() {
        assert_eq!(dyadic_times(0.125, 16.0).len(), 8);
        assert_eq!(dyadic_times(4.0, 64.0), vec![4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(dyadic_times(3.0, 3.5), Vec::<f64>::new());
    }
}
