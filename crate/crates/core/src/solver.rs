//! Unit-CFL leapfrog evolution of `w` and an independent d'Alembert/Duhamel
//! fixed-point solver used for cross-validation.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{EnergyLedger, MonitorSpec, Recorder, Trajectory};
use crate::error::{Error, Result};
use crate::model::{ModelParams, RadialPair};
use crate::quad::node_index;

/// Treatment of the outermost node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Data vanish beyond `r_max - t_max`, so no signal reaches the last node.
    CausalPad,
    /// First-order outgoing extrapolation `w_n(t + h) = w_(n-1)(t)`.
    Outgoing,
    /// Data extend past the grid; diagnostics at step `k` are restricted to the
    /// domain of dependence of the grid, nodes `i <= n_r - 2 - k`.
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    /// Nodes `r_i = i h` for `i < n_r`.
    pub n_r: usize,
    pub t_max: f64,
    pub boundary: Boundary,
}

impl GridSpec {
    /// Grid whose last node sits at `r_max`; both `r_max` and `t_max` must be node multiples.
    pub fn new(h: f64, r_max: f64, t_max: f64, boundary: Boundary) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("h = {h}")));
        }
        let nr = node_index("grid.r_max", r_max, h)?;
        let nt = node_index("grid.t_max", t_max, h)?;
        if nr < 4 || nt < 1 {
            return Err(Error::InvalidGrid(format!(
                "need r_max >= 4h and t_max >= h (r_max = {r_max}, t_max = {t_max}, h = {h})"
            )));
        }
        let grid = Self {
            h,
            n_r: nr as usize + 1,
            t_max,
            boundary,
        };
        if boundary != Boundary::Outgoing && grid.n_r < grid.steps() + 4 {
            return Err(Error::InvalidGrid(format!(
                "this boundary needs r_max >= t_max + 3h (r_max = {r_max}, t_max = {t_max})"
            )));
        }
        Ok(grid)
    }

    /// Causally padded grid covering data supported in `[0, support]`.
    pub fn causal(h: f64, support: f64, t_max: f64) -> Result<Self> {
        let nodes = ((support + t_max) / h).ceil() + 4.0;
        Self::new(h, nodes * h, t_max, Boundary::CausalPad)
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.h).round() as usize
    }

    pub fn r_max(&self) -> f64 {
        (self.n_r - 1) as f64 * self.h
    }

    /// Last node whose value and centered derivatives at step `k` are free of boundary effects.
    pub fn valid_hi(&self, k: usize) -> usize {
        match self.boundary {
            Boundary::Cone => (self.n_r - 2).saturating_sub(k),
            Boundary::CausalPad | Boundary::Outgoing => self.n_r - 2,
        }
    }
}

/// Two consecutive time levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub t: f64,
    pub step: usize,
    pub h: f64,
    pub w_prev: Vec<f64>,
    pub w_curr: Vec<f64>,
}

/// Precomputed stencil data for one grid.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    h: f64,
    inv_r_pm1: Vec<f64>,
}

impl Stepper {
    pub fn new(params: &ModelParams, h: f64, n: usize) -> Self {
        let inv_r_pm1 = (0..n)
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    (i as f64 * h).powf(-(params.p - 1.0))
                }
            })
            .collect();
        Self {
            params: *params,
            h,
            inv_r_pm1,
        }
    }

    #[inline]
    fn source(&self, w: f64, i: usize) -> f64 {
        if self.params.linear {
            0.0
        } else {
            self.params.abs_pow(w, -1) * w * self.inv_r_pm1[i]
        }
    }

    /// `w(h)` from the data by a second-order Taylor start; with `sign = -1` the
    /// virtual level `w(-h)`.
    pub fn taylor_level(&self, pair: &RadialPair, sign: f64) -> Vec<f64> {
        let n = pair.len();
        let h = self.h;
        let w0 = &pair.w0;
        let mut out = vec![0.0; n];
        for i in 1..n {
            let right = if i + 1 < n { w0[i + 1] } else { 2.0 * w0[i] - w0[i - 1] };
            let lap = w0[i - 1] - 2.0 * w0[i] + right;
            out[i] = w0[i] + sign * h * pair.w1[i] + 0.5 * (lap - h * h * self.source(w0[i], i));
        }
        out
    }

    /// One leapfrog step into `next`; returns `max |next|`.
    pub fn advance(&self, prev: &[f64], curr: &[f64], next: &mut [f64]) -> f64 {
        let n = curr.len();
        let h2 = self.h * self.h;
        let mut sup = 0.0f64;
        // f64::max drops NaN, so a running sum carries it instead
        let mut probe = 0.0;
        next[0] = 0.0;
        if self.params.linear {
            for i in 1..n - 1 {
                let v = curr[i - 1] + curr[i + 1] - prev[i];
                next[i] = v;
                sup = sup.max(v.abs());
                probe += v;
            }
        } else {
            for i in 1..n - 1 {
                let v = curr[i - 1] + curr[i + 1] - prev[i] - h2 * self.source(curr[i], i);
                next[i] = v;
                sup = sup.max(v.abs());
                probe += v;
            }
        }
        next[n - 1] = curr[n - 2];
        if probe.is_nan() || next[n - 1].is_nan() {
            return f64::INFINITY;
        }
        sup.max(next[n - 1].abs())
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

/// State at `t = h` from the Taylor start; `w_prev` holds the data.
pub fn bootstrap(pair: &RadialPair, params: &ModelParams) -> WaveState {
    let stepper = Stepper::new(params, pair.h, pair.len());
    WaveState {
        t: pair.h,
        step: 1,
        h: pair.h,
        w_prev: pair.w0.clone(),
        w_curr: stepper.taylor_level(pair, 1.0),
    }
}

/// Advance a state by one step.
pub fn step(state: &WaveState, params: &ModelParams, guard: f64) -> Result<WaveState> {
    let stepper = Stepper::new(params, state.h, state.w_curr.len());
    let mut next = vec![0.0; state.w_curr.len()];
    let sup = stepper.advance(&state.w_prev, &state.w_curr, &mut next);
    let t = (state.step + 1) as f64 * state.h;
    if !(sup <= guard) {
        return Err(Error::Blowup { t, max: sup, guard });
    }
    Ok(WaveState {
        t,
        step: state.step + 1,
        h: state.h,
        w_prev: state.w_curr.clone(),
        w_curr: next,
    })
}

/// Default blowup guard `10^3 (sup |w0| + 1)`.
pub fn blowup_guard(pair: &RadialPair) -> f64 {
    1e3 * (sup_norm(&pair.w0) + 1.0)
}

/// Data must vanish (to 1e-12 relative) on nodes from which a signal could
/// reach the last node by `t_max`.
fn check_padding(pair: &RadialPair, grid: &GridSpec) -> Result<()> {
    let first = (grid.n_r - 1).saturating_sub(grid.steps() + 2);
    let tail = sup_norm(&pair.w0[first..]).max(grid.h * sup_norm(&pair.w1[first..]));
    let limit = 1e-12 * (sup_norm(&pair.w0) + grid.h * sup_norm(&pair.w1));
    if tail > limit {
        return Err(Error::BoundaryLeak { leak: tail, limit });
    }
    Ok(())
}

/// Run to `t_max`, feeding every level (with its neighbours) to the recorder.
pub fn evolve(
    pair: &RadialPair,
    params: &ModelParams,
    grid: &GridSpec,
    monitors: &MonitorSpec,
) -> Result<(Trajectory, EnergyLedger)> {
    if pair.len() != grid.n_r || (pair.h - grid.h).abs() > 1e-15 * grid.h {
        return Err(Error::InvalidGrid(format!(
            "data has {} nodes at h = {}, grid has {} at h = {}",
            pair.len(),
            pair.h,
            grid.n_r,
            grid.h
        )));
    }
    if grid.boundary == Boundary::CausalPad {
        check_padding(pair, grid)?;
    }
    let stepper = Stepper::new(params, grid.h, grid.n_r);
    let guard = blowup_guard(pair);
    let mut recorder = Recorder::new(pair, params, grid, monitors)?;
    let n_steps = grid.steps();

    let mut prev = stepper.taylor_level(pair, -1.0);
    let mut curr = pair.w0.clone();
    let mut next = stepper.taylor_level(pair, 1.0);
    let sup = sup_norm(&next);
    if !(sup <= guard) {
        return Err(Error::Blowup { t: grid.h, max: sup, guard });
    }
    let mut scratch = vec![0.0; grid.n_r];
    for k in 0..=n_steps {
        recorder.observe(k, &prev, &curr, &next);
        if k == n_steps {
            break;
        }
        let sup = stepper.advance(&curr, &next, &mut scratch);
        if !(sup <= guard) {
            return Err(Error::Blowup {
                t: (k + 2) as f64 * grid.h,
                max: sup,
                guard,
            });
        }
        // rotate levels: prev <- curr <- next <- scratch
        std::mem::swap(&mut prev, &mut curr);
        std::mem::swap(&mut curr, &mut next);
        std::mem::swap(&mut next, &mut scratch);
    }
    Ok(recorder.finish())
}

/// Evolve the linear equation from two consecutive levels for `steps` steps;
/// returns the last three levels `(w(T - h), w(T), w(T + h))` with `T = steps h`
/// after the starting level.
pub fn evolve_linear_levels(
    prev: &[f64],
    curr: &[f64],
    steps: usize,
    params: &ModelParams,
    h: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let stepper = Stepper::new(&params.linear_mode(), h, curr.len());
    let mut a = prev.to_vec();
    let mut b = curr.to_vec();
    let mut c = vec![0.0; curr.len()];
    stepper.advance(&a, &b, &mut c);
    for _ in 0..steps {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut b, &mut c);
        stepper.advance(&a, &b, &mut c);
    }
    (a, b, c)
}

/// Prefix integrals `P[j] = int_0^{r_j} f` by the trapezoid rule.
fn prefix_trapezoid(f: &[f64], h: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    for j in 1..f.len() {
        let last = out[j - 1];
        out.push(last + 0.5 * h * (f[j - 1] + f[j]));
    }
}

/// Integral of the odd extension of `f` over `[i - d, i + d]` (node units) from its prefix.
#[inline]
fn odd_window(prefix: &[f64], i: usize, d: usize) -> f64 {
    let hi = prefix[i + d];
    let lo = if d > i { prefix[d - i] } else { prefix[i - d] };
    hi - lo
}

/// Options for the Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Stop when the sup-norm change falls below `tol * (1 + sup |w0|)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_sweeps: 50,
        }
    }
}

/// Fixed point of the d'Alembert/Duhamel map at `t_target`, using odd reflection
/// through `r = 0`. Returns samples on nodes `0 ..= n - 1 - N` (`N = t_target / h`),
/// the region determined by the data on the grid.
pub fn duhamel_solve(pair: &RadialPair, params: &ModelParams, t_target: f64) -> Result<Vec<f64>> {
    duhamel_solve_with(pair, params, t_target, PicardOptions::default())
}

pub fn duhamel_solve_with(
    pair: &RadialPair,
    params: &ModelParams,
    t_target: f64,
    opts: PicardOptions,
) -> Result<Vec<f64>> {
    let h = pair.h;
    let n = pair.len();
    let big_n = node_index("t_target", t_target, h)?;
    if big_n < 0 || big_n as usize + 2 > n {
        return Err(Error::OutOfDomain(format!(
            "t_target = {t_target} needs more than {n} nodes of data"
        )));
    }
    let big_n = big_n as usize;
    let levels = big_n + 1;
    // free part on every level m, nodes i <= n - 1 - m
    let mut p1 = Vec::new();
    prefix_trapezoid(&pair.w1, h, &mut p1);
    let w0_odd = |j: i64| -> f64 {
        if j < 0 {
            -pair.w0[(-j) as usize]
        } else {
            pair.w0[j as usize]
        }
    };
    let free: Vec<Vec<f64>> = (0..levels)
        .map(|m| {
            (0..n - m)
                .map(|i| {
                    let (ii, mm) = (i as i64, m as i64);
                    0.5 * (w0_odd(ii - mm) + w0_odd(ii + mm)) + 0.5 * odd_window(&p1, i, m)
                })
                .collect()
        })
        .collect();
    if params.linear {
        return Ok(free[big_n].clone());
    }
    let stepper = Stepper::new(params, h, n);
    let scale = 1.0 + sup_norm(&pair.w0);
    let tol = opts.tol * scale;
    let mut w = free.clone();
    let mut prefixes: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut src = Vec::with_capacity(n);
    let mut previous = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for m in 0..levels {
            src.clear();
            src.extend(w[m].iter().enumerate().map(|(i, v)| stepper.source(*v, i)));
            prefix_trapezoid(&src, h, &mut prefixes[m]);
        }
        let mut residual = 0.0f64;
        let mut next = free.clone();
        for (m, level) in next.iter_mut().enumerate() {
            for (i, v) in level.iter_mut().enumerate() {
                // trapezoid in time over levels 0..=m of the window integrals
                let mut acc = 0.0;
                for q in 0..=m {
                    let g = odd_window(&prefixes[q], i, m - q);
                    let wq = if q == 0 || q == m { 0.5 } else { 1.0 };
                    acc += wq * g;
                }
                *v -= 0.5 * h * acc;
                residual = residual.max((*v - w[m][i]).abs());
            }
        }
        w = next;
        if !residual.is_finite() {
            return Err(Error::NoContraction {
                sweep,
                residual,
                previous,
            });
        }
        if residual < tol {
            return Ok(w.swap_remove(big_n));
        }
        if residual > 1e3 * tol && residual > 0.5 * previous {
            return Err(Error::NoContraction {
                sweep,
                residual,
                previous,
            });
        }
        previous = residual;
    }
    Err(Error::NoContraction {
        sweep: opts.max_sweeps,
        residual: previous,
        previous,
    })
}
