//! Model parameters, initial-data families, the `w = r u` lifting and
//! functionals of initial data.
//!
//! The radial solution `u(r, t)` of the 3D equation is carried as
//! `w(r, t) = r u(r, t)`, which solves the 1D equation
//! `w_tt - w_rr = -|w|^(p-1) w / r^(p-1)` on the half line with `w(0, t) = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{derivative, trapezoid, trapezoid_range};

/// Exponent pair `(p, kappa)` and the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub kappa: f64,
    /// Threshold decay exponent `(5 - p) / (p + 1)`.
    pub kappa0: f64,
    /// Growth exponent of the power-law example, `(p - 3) / (p - 1)`.
    pub beta: f64,
    /// When set the source term is switched off and energies drop the potential.
    pub linear: bool,
    #[serde(skip)]
    p_int: Option<i32>,
}

impl ModelParams {
    pub fn new(p: f64, kappa: f64) -> Result<Self> {
        if !(3.0..5.0).contains(&p) || !p.is_finite() {
            return Err(Error::OutOfRange {
                name: "p",
                value: p,
                expected: "3 <= p < 5",
            });
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::OutOfRange {
                name: "kappa",
                value: kappa,
                expected: "0 < kappa < 1",
            });
        }
        let p_int = if p.fract() == 0.0 { Some(p as i32) } else { None };
        Ok(Self {
            p,
            kappa,
            kappa0: (5.0 - p) / (p + 1.0),
            beta: (p - 3.0) / (p - 1.0),
            linear: false,
            p_int,
        })
    }

    /// Same parameters with the nonlinearity switched off.
    pub fn linear_mode(mut self) -> Self {
        self.linear = true;
        self
    }

    pub fn with_kappa(self, kappa: f64) -> Result<Self> {
        let mut next = Self::new(self.p, kappa)?;
        next.linear = self.linear;
        Ok(next)
    }

    /// `(p + 1) / (p + 3) * (kappa - kappa0)`, the predicted scattering rate.
    pub fn scattering_rate(&self) -> f64 {
        (self.p + 1.0) / (self.p + 3.0) * (self.kappa - self.kappa0)
    }

    /// `|x|^(p + shift)` with an integer fast path.
    #[inline]
    pub fn abs_pow(&self, x: f64, shift: i32) -> f64 {
        let a = x.abs();
        match self.p_int {
            Some(k) => a.powi(k + shift),
            None => a.powf(self.p + shift as f64),
        }
    }

    /// Source term `|w|^(p-1) w / r^(p-1)`; zero at the origin and in linear mode.
    #[inline]
    pub fn nonlinearity(&self, w: f64, r: f64) -> f64 {
        if self.linear || r <= 0.0 {
            return 0.0;
        }
        self.abs_pow(w / r, -1) * w
    }

    /// Potential density `2/(p+1) |w|^(p+1) / r^(p-1)`.
    #[inline]
    pub fn potential(&self, w: f64, r: f64) -> f64 {
        if self.linear || r <= 0.0 {
            return 0.0;
        }
        2.0 / (self.p + 1.0) * self.abs_pow(w / r, 1) * r * r
    }

    /// Bulk conversion density `|w|^(p+1) / r^p`.
    #[inline]
    pub fn bulk_density(&self, w: f64, r: f64) -> f64 {
        if self.linear || r <= 0.0 {
            return 0.0;
        }
        self.abs_pow(w / r, 1) * r
    }

    /// Flux density `|w|^(p+1) / r^(p-1)` carried across a characteristic.
    #[inline]
    pub fn flux_density(&self, w: f64, r: f64) -> f64 {
        if self.linear || r <= 0.0 {
            return 0.0;
        }
        self.abs_pow(w / r, 1) * r * r
    }
}

pub fn make_params(p: f64, kappa: f64) -> Result<ModelParams> {
    ModelParams::new(p, kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Inward,
    Outward,
}

/// Named initial-data families. Lengths are in units of `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    /// `u0 = c r^(-2/(p-1))` for `r >= 1`, quintic blend on `[1 - blend, 1]`,
    /// constant inside, `u1 = 0`.
    AppendixPowerLaw { c: f64, blend: f64 },
    /// `u0 = amplitude * exp(-((r - center)/width)^2)`, `u1 = 0`.
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Smooth compact bump in `w` travelling in one direction:
    /// `w1 = +w0'` (inward) or `w1 = -w0'` (outward).
    DirectedPulse {
        amplitude: f64,
        center: f64,
        width: f64,
        direction: Direction,
    },
    /// Node samples of `u0` and `u1`.
    Tabulated { u0: Vec<f64>, u1: Vec<f64> },
}

/// `exp(1 - 1/(1 - x^2))` on `|x| < 1`, peak value 1 at the origin.
pub fn smooth_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

pub fn smooth_bump_derivative(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - x * x;
        smooth_bump(x) * (-2.0 * x / (q * q))
    }
}

/// Coefficients `(inner value, s^4, s^5)` of the blend `U + b s^4 + c s^5`.
fn blend_coefficients(c: f64, blend: f64, params: &ModelParams) -> (f64, f64, f64) {
    let e = 2.0 / (params.p - 1.0);
    let f = c;
    let g = -e * c * blend;
    let k = e * (e + 1.0) * c * blend * blend;
    let c5 = (k - 3.0 * g) / 5.0;
    let b4 = (4.0 * g - k) / 4.0;
    (f - b4 - c5, b4, c5)
}

impl InitialData {
    /// Evaluate `u0` for the power-law family (used directly by tests and plots).
    pub fn appendix_u0(c: f64, blend: f64, r: f64, params: &ModelParams) -> f64 {
        if r >= 1.0 {
            return c * r.powf(-2.0 / (params.p - 1.0));
        }
        let (inner, b4, c5) = blend_coefficients(c, blend, params);
        let start = 1.0 - blend;
        if r <= start {
            inner
        } else {
            let s = (r - start) / blend;
            let s4 = s * s * s * s;
            inner + b4 * s4 + c5 * s4 * s
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialData::AppendixPowerLaw { blend, .. } => {
                if !(blend > 0.0 && blend <= 1.0) {
                    return Err(Error::OutOfRange {
                        name: "initial.blend",
                        value: blend,
                        expected: "0 < blend <= 1",
                    });
                }
            }
            InitialData::GaussianBump { width, .. } => {
                if !(width > 0.0) {
                    return Err(Error::OutOfRange {
                        name: "initial.width",
                        value: width,
                        expected: "width > 0",
                    });
                }
            }
            InitialData::DirectedPulse { center, width, .. } => {
                if !(width > 0.0) || center - width <= 0.0 {
                    return Err(Error::OutOfRange {
                        name: "initial.width",
                        value: width,
                        expected: "0 < width < center",
                    });
                }
            }
            InitialData::Tabulated { .. } => {}
        }
        Ok(())
    }

    /// Radius beyond which the data are negligible, if there is one.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            InitialData::AppendixPowerLaw { .. } => None,
            InitialData::GaussianBump {
                amplitude,
                center,
                width,
            } => Some(if amplitude == 0.0 { 0.0 } else { center.max(0.0) + 8.0 * width }),
            InitialData::DirectedPulse { center, width, .. } => Some(center + width),
            InitialData::Tabulated { ref u0, ref u1 } => {
                let last = u0
                    .iter()
                    .zip(u1)
                    .rposition(|(a, b)| *a != 0.0 || *b != 0.0)
                    .unwrap_or(0);
                // support in node units; the caller multiplies by h
                Some(last as f64)
            }
        }
    }

    /// Samples of `(u0, u1)` on nodes `r_i = i h`, `i < n`.
    pub fn sample_u(&self, n: usize, h: f64, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let r = |i: usize| i as f64 * h;
        Ok(match self {
            InitialData::AppendixPowerLaw { c, blend } => (
                (0..n)
                    .map(|i| Self::appendix_u0(*c, *blend, r(i), params))
                    .collect(),
                vec![0.0; n],
            ),
            InitialData::GaussianBump {
                amplitude,
                center,
                width,
            } => (
                (0..n)
                    .map(|i| {
                        let x = (r(i) - center) / width;
                        amplitude * (-x * x).exp()
                    })
                    .collect(),
                vec![0.0; n],
            ),
            InitialData::DirectedPulse {
                amplitude,
                center,
                width,
                direction,
            } => {
                let sign = match direction {
                    Direction::Inward => 1.0,
                    Direction::Outward => -1.0,
                };
                let mut u0 = vec![0.0; n];
                let mut u1 = vec![0.0; n];
                for i in 1..n {
                    let x = (r(i) - center) / width;
                    u0[i] = amplitude * smooth_bump(x) / r(i);
                    u1[i] = sign * amplitude * smooth_bump_derivative(x) / (width * r(i));
                }
                (u0, u1)
            }
            InitialData::Tabulated { u0, u1 } => {
                if u0.len() != n || u1.len() != n {
                    return Err(Error::InvalidGrid(format!(
                        "tabulated data has {} / {} samples, grid has {n} nodes",
                        u0.len(),
                        u1.len()
                    )));
                }
                (u0.clone(), u1.clone())
            }
        })
    }

    /// Sample and lift onto the grid.
    pub fn radial_pair(
        &self,
        n: usize,
        h: f64,
        params: &ModelParams,
        leak_tolerance: Option<f64>,
    ) -> Result<RadialPair> {
        let (u0, u1) = self.sample_u(n, h, params)?;
        let mut pair = lift_initial_data(&u0, &u1, h, params, leak_tolerance)?;
        if let InitialData::AppendixPowerLaw { c, .. } = *self {
            pair.power_tail = Some(c);
        }
        Ok(pair)
    }
}

/// Initial data for `w = r u` on nodes `r_i = i h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPair {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub h: f64,
    /// Constant `c` when the data continue past the grid as `u0 = c r^(-2/(p-1))`, `u1 = 0`.
    #[serde(default)]
    pub power_tail: Option<f64>,
}

impl RadialPair {
    pub fn zeros(n: usize, h: f64) -> Self {
        Self {
            w0: vec![0.0; n],
            w1: vec![0.0; n],
            h,
            power_tail: None,
        }
    }

    pub fn len(&self) -> usize {
        self.w0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w0.is_empty()
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Total energy `2 pi int (w_r^2 + w_t^2 + potential) dr`.
    pub fn energy(&self, params: &ModelParams) -> f64 {
        let wr = derivative(&self.w0, self.h);
        let dens: Vec<f64> = (0..self.len())
            .map(|i| wr[i] * wr[i] + self.w1[i] * self.w1[i] + params.potential(self.w0[i], self.r(i)))
            .collect();
        2.0 * PI * trapezoid(&dens, self.h)
    }

    /// Inward-channel density `|w0' + w1|^2 + potential` at each node.
    pub fn inward_density(&self, params: &ModelParams) -> Vec<f64> {
        let wr = derivative(&self.w0, self.h);
        (0..self.len())
            .map(|i| {
                let a = wr[i] + self.w1[i];
                a * a + params.potential(self.w0[i], self.r(i))
            })
            .collect()
    }
}

/// Lift radial samples of `(u0, u1)` to `w = r u`.
///
/// `leak_tolerance` bounds `r_max u0(r_max)^2` as a fraction of the total energy;
/// `None` skips the check (for data whose truncation is handled causally).
pub fn lift_initial_data(
    u0: &[f64],
    u1: &[f64],
    h: f64,
    params: &ModelParams,
    leak_tolerance: Option<f64>,
) -> Result<RadialPair> {
    if u0.len() != u1.len() || u0.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "u0/u1 lengths {} / {} (need equal, >= 3)",
            u0.len(),
            u1.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidGrid(format!("h = {h}")));
    }
    let w0: Vec<f64> = u0.iter().enumerate().map(|(i, u)| i as f64 * h * u).collect();
    let w1: Vec<f64> = u1.iter().enumerate().map(|(i, u)| i as f64 * h * u).collect();
    let pair = RadialPair {
        w0,
        w1,
        h,
        power_tail: None,
    };
    if let Some(tol) = leak_tolerance {
        let n = u0.len() - 1;
        let leak = n as f64 * h * u0[n] * u0[n];
        let limit = tol * pair.energy(params);
        if leak > limit && leak > 0.0 {
            return Err(Error::BoundaryLeak { leak, limit });
        }
    }
    Ok(pair)
}

/// Both sides of the truncated kinetic-energy identity on nodes `a..=b`:
/// `2 pi int (w_r^2 + w_t^2)` and
/// `2 pi [int r^2 (u_r^2 + u_t^2) + b u(b)^2 - a u(a)^2]`.
pub fn energy_transformation_sides(u0: &[f64], u1: &[f64], h: f64, a: usize, b: usize) -> (f64, f64) {
    let w0: Vec<f64> = u0.iter().enumerate().map(|(i, u)| i as f64 * h * u).collect();
    let w1: Vec<f64> = u1.iter().enumerate().map(|(i, u)| i as f64 * h * u).collect();
    let wr = derivative(&w0, h);
    let ur = derivative(u0, h);
    let lhs_d: Vec<f64> = (0..w0.len()).map(|i| wr[i] * wr[i] + w1[i] * w1[i]).collect();
    let rhs_d: Vec<f64> = (0..u0.len())
        .map(|i| {
            let r = i as f64 * h;
            r * r * (ur[i] * ur[i] + u1[i] * u1[i])
        })
        .collect();
    let ra = a as f64 * h;
    let rb = b as f64 * h;
    let lhs = 2.0 * PI * trapezoid_range(&lhs_d, h, a, b);
    let rhs = 2.0 * PI * (trapezoid_range(&rhs_d, h, a, b) + rb * u0[b] * u0[b] - ra * u0[a] * u0[a]);
    (lhs, rhs)
}

/// Conserved energy computed on the `u` side: `4 pi int r^2 (u_r^2/2 + u_t^2/2 + |u|^(p+1)/(p+1)) dr`.
pub fn u_side_energy(u0: &[f64], u1: &[f64], h: f64, params: &ModelParams) -> f64 {
    let ur = derivative(u0, h);
    let dens: Vec<f64> = (0..u0.len())
        .map(|i| {
            let r = i as f64 * h;
            let pot = if params.linear {
                0.0
            } else {
                params.abs_pow(u0[i], 1) / (params.p + 1.0)
            };
            r * r * (0.5 * ur[i] * ur[i] + 0.5 * u1[i] * u1[i] + pot)
        })
        .collect();
    4.0 * PI * trapezoid(&dens, h)
}

/// The weighted inward functional in both normalisations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KValue {
    /// `int max{1,|x|^kappa} (|d_r u0 + u0/|x| + u1|^2 + 2/(p+1)|u0|^(p+1)) dx`.
    pub k: f64,
    /// `pi int max{1, r^kappa} (|w0' + w1|^2 + potential) dr = K / 4`.
    pub k1: f64,
}

/// Decade contributions `[10^k, 10^(k+1)]` (k >= 0) of a node density; fails
/// when the last complete decade does not fall below the previous one.
fn check_decades(dens: &[f64], h: f64) -> Result<()> {
    let n = dens.len() - 1;
    let total = trapezoid(dens, h).abs();
    let mut contributions = Vec::new();
    let mut lo = 1.0_f64;
    loop {
        let hi = lo * 10.0;
        let (ilo, ihi) = ((lo / h).round() as usize, (hi / h).round() as usize);
        if ihi > n {
            break;
        }
        contributions.push(trapezoid_range(dens, h, ilo, ihi));
        lo = hi;
    }
    if contributions.len() >= 2 {
        let last = contributions[contributions.len() - 1];
        let previous = contributions[contributions.len() - 2];
        if last > 1e-14 * total && last >= previous {
            return Err(Error::Divergent { previous, last });
        }
    }
    Ok(())
}

/// Weighted inward functional `pi int_0^1 e_- + pi int_1^inf a(r) e_-` for a
/// weight with `a(1) = 1`, with the decade divergence heuristic.
pub fn weighted_inward_energy(pair: &RadialPair, params: &ModelParams, a: &dyn Fn(f64) -> f64) -> Result<f64> {
    let base = pair.inward_density(params);
    let dens: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let r = pair.r(i);
            if r <= 1.0 {
                *d
            } else {
                a(r) * d
            }
        })
        .collect();
    check_decades(&dens, pair.h)?;
    let grid_part = PI * trapezoid(&dens, pair.h);
    let tail = match pair.power_tail {
        Some(c) => FarField::new(c, params).weighted_inward_tail(a, pair.r(pair.len() - 1))?,
        None => 0.0,
    };
    Ok(grid_part + tail)
}

pub fn k_functional(pair: &RadialPair, params: &ModelParams) -> Result<KValue> {
    let kappa = params.kappa;
    let k1 = weighted_inward_energy(pair, params, &|r| r.powf(kappa))?;
    Ok(KValue { k: 4.0 * k1, k1 })
}

/// Integral of `g` over `[r_from, inf)` by the substitution `r = r_from e^x`,
/// trapezoid rule on `x in [0, 80]`.
fn log_tail(r_from: f64, g: impl Fn(f64) -> f64) -> f64 {
    const DX: f64 = 0.05;
    const STEPS: usize = 1600;
    let mut acc = 0.0;
    for j in 0..=STEPS {
        let r = r_from * (j as f64 * DX).exp();
        let wgt = if j == 0 || j == STEPS { 0.5 } else { 1.0 };
        acc += wgt * g(r) * r;
    }
    acc * DX
}

/// Far field of the power-law data `w0 = c r^beta`, `w1 = 0`, approximated by the
/// free evolution `w = c/2 ((r - t)^beta + (r + t)^beta)` (valid for `r > 1 + t`).
#[derive(Debug, Clone, Copy)]
pub struct FarField {
    pub c: f64,
    params: ModelParams,
}

/// Contributions of `[r_from, inf)` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FarTails {
    pub e_minus: f64,
    pub e_plus: f64,
    /// `4 pi int |u|^(2p) r^2 dr`.
    pub lp: f64,
    /// `4 pi int |u|^(2(p-1)) r^2 dr`.
    pub exterior: f64,
}

impl FarField {
    pub fn new(c: f64, params: &ModelParams) -> Self {
        Self { c, params: *params }
    }

    pub fn w(&self, r: f64, t: f64) -> f64 {
        let b = self.params.beta;
        0.5 * self.c * ((r - t).powf(b) + (r + t).powf(b))
    }

    /// Channel energies, `L^(2p)` and `L^(2(p-1))` integrals of the far field beyond `r_from > 1 + t`.
    pub fn tails(&self, r_from: f64, t: f64) -> FarTails {
        let p = &self.params;
        let b = p.beta;
        // w_r +/- w_t = c beta (r +/- t)^(beta - 1) in closed form
        let grad = |x: f64| (self.c * b).powi(2) * x.powf(2.0 * b - 1.0) / (1.0 - 2.0 * b);
        let pot = if p.linear {
            0.0
        } else {
            PI * log_tail(r_from, |r| p.potential(self.w(r, t), r))
        };
        let lp = 4.0 * PI * log_tail(r_from, |r| {
            let u = self.w(r, t) / r;
            p.abs_pow(u, 0).powi(2) * r * r
        });
        let exterior = 4.0 * PI * log_tail(r_from, |r| {
            let u = self.w(r, t) / r;
            p.abs_pow(u, -1).powi(2) * r * r
        });
        FarTails {
            e_minus: PI * grad(r_from + t) + pot,
            e_plus: PI * grad(r_from - t) + pot,
            lp,
            exterior,
        }
    }

    /// `pi int_{r_from}^inf a(r) (|w0'|^2 + potential) dr` for the data.
    pub fn weighted_inward_tail(&self, a: &dyn Fn(f64) -> f64, r_from: f64) -> Result<f64> {
        let p = &self.params;
        let b = p.beta;
        let dens = |r: f64| {
            let w = self.c * r.powf(b);
            let wr = self.c * b * r.powf(b - 1.0);
            a(r) * (wr * wr + p.potential(w, r))
        };
        // the substituted integrand r g(r) must decay; past x = 80 it is a pure exponential
        let g = |x: f64| dens(r_from * x.exp()) * r_from * x.exp();
        let (g40, g80) = (g(40.0), g(80.0));
        if g80 <= 0.0 {
            return Ok(PI * log_tail(r_from, dens));
        }
        let rate = (g80 / g40).ln() / 40.0;
        if !(rate < -1e-3) {
            return Err(Error::Divergent {
                previous: g40,
                last: g80,
            });
        }
        Ok(PI * (log_tail(r_from, dens) + g80 / -rate))
    }
}

/// Conformal charges `(Q0, Q1)` of the state `(w, w_t)` at time `t`.
pub fn conformal_charge_w(w: &[f64], wt: &[f64], h: f64, t: f64, params: &ModelParams) -> (f64, f64) {
    let wr = derivative(w, h);
    let n = w.len();
    let mut q0 = vec![0.0; n];
    let mut q1 = vec![0.0; n];
    for i in 0..n {
        let r = i as f64 * h;
        // w/r -> u(0) = w_r(0) at the origin
        let u = if i == 0 { wr[0] } else { w[i] / r };
        let a = r * wt[i] + t * (wr[i] - u);
        let b = t * wt[i] + r * wr[i] + w[i];
        q0[i] = a * a + b * b;
        if !params.linear && i > 0 {
            q1[i] = (r * r + t * t) * params.flux_density(w[i], r);
        }
    }
    (
        4.0 * PI * trapezoid(&q0, h),
        8.0 * PI / (params.p + 1.0) * trapezoid(&q1, h),
    )
}

/// Conformal charges of radial data `(u0, u1)` at time `t`.
pub fn conformal_charge(pair: &RadialPair, t: f64, params: &ModelParams) -> (f64, f64) {
    conformal_charge_w(&pair.w0, &pair.w1, pair.h, t, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn derived_constants() {
        let p = make_params(3.0, 0.6).unwrap();
        assert_eq!(p.kappa0, 0.5);
        assert_eq!(p.beta, 0.0);
        let p = make_params(4.0, 0.2).unwrap();
        assert!(approx(p.kappa0, 0.2, 1e-15));
        assert!(approx(p.beta, 1.0 - 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn out_of_range_parameters() {
        assert!(matches!(make_params(5.0, 0.5), Err(Error::OutOfRange { name: "p", .. })));
        assert!(matches!(make_params(2.9, 0.5), Err(Error::OutOfRange { name: "p", .. })));
        assert!(matches!(make_params(3.0, 0.0), Err(Error::OutOfRange { name: "kappa", .. })));
        assert!(matches!(make_params(3.0, 1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn kappa0_decreasing() {
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let p = 3.0 + 0.1 * k as f64;
            let k0 = make_params(p, 0.5).unwrap().kappa0;
            assert!(k0 < prev);
            prev = k0;
        }
        assert_eq!(make_params(3.0, 0.5).unwrap().kappa0, 0.5);
    }

    #[test]
    fn nonlinearity_values() {
        let p = make_params(3.0, 0.5).unwrap();
        assert_eq!(p.nonlinearity(0.0, 1.0), 0.0);
        assert!(approx(p.nonlinearity(2.0, 1.0), 8.0, 1e-14));
        assert_eq!(p.nonlinearity(1.0, 0.0), 0.0);
        // w = r u with u = 1: F = r, linear in r
        for r in [1e-1, 1e-2, 1e-3] {
            assert!(approx(p.nonlinearity(r, r), r, 1e-15));
        }
        let q = make_params(3.5, 0.5).unwrap();
        assert!(approx(q.nonlinearity(-2.0, 1.0), -(2.0f64.powf(3.5)), 1e-12));
    }

    #[test]
    fn appendix_blend_is_c2_and_exact_tail() {
        let p = make_params(4.0, 0.25).unwrap();
        let (c, blend) = (0.3, 0.5);
        let f = |r: f64| InitialData::appendix_u0(c, blend, r, &p);
        for r in [1.0, 2.0, 7.5] {
            assert_eq!(f(r), c * r.powf(-2.0 / 3.0));
        }
        let e = 1e-4;
        for seam in [1.0, 0.5] {
            let d1l = (f(seam) - f(seam - e)) / e;
            let d1r = (f(seam + e) - f(seam)) / e;
            assert!(approx(d1l, d1r, 1e-3), "slope jump at {seam}");
            let d2l = (f(seam) - 2.0 * f(seam - e) + f(seam - 2.0 * e)) / (e * e);
            let d2r = (f(seam + 2.0 * e) - 2.0 * f(seam + e) + f(seam)) / (e * e);
            assert!(approx(d2l, d2r, 1e-2 * (1.0 + d2l.abs())), "curvature jump at {seam}");
        }
        // monotone blend
        let mut prev = f(0.0);
        for k in 1..=100 {
            let v = f(k as f64 * 0.01);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn zero_data_lifts_to_zero() {
        let p = make_params(3.0, 0.5).unwrap();
        let pair = lift_initial_data(&[0.0; 16], &[0.0; 16], 0.1, &p, Some(1e-6)).unwrap();
        assert!(pair.w0.iter().chain(&pair.w1).all(|v| *v == 0.0));
        let (l, r) = energy_transformation_sides(&[0.0; 16], &[0.0; 16], 0.1, 3, 9);
        assert_eq!((l, r), (0.0, 0.0));
        let k = k_functional(&pair, &p).unwrap();
        assert_eq!(k.k, 0.0);
        assert_eq!(conformal_charge(&pair, 0.0, &p), (0.0, 0.0));
    }

    #[test]
    fn boundary_leak_detected() {
        let p = make_params(3.0, 0.5).unwrap();
        let n = 101;
        let h = 0.1;
        let u0 = vec![1.0; n];
        let u1 = vec![0.0; n];
        assert!(matches!(
            lift_initial_data(&u0, &u1, h, &p, Some(1e-6)),
            Err(Error::BoundaryLeak { .. })
        ));
        assert!(lift_initial_data(&u0, &u1, h, &p, None).is_ok());
    }

    #[test]
    fn k_with_unit_weight_is_inward_energy() {
        // kappa -> 0 weight: K = 4 E_-(0) <= 8 E
        let p = make_params(3.0, 0.5).unwrap();
        let h = 0.01;
        let n = 1201;
        let data = InitialData::GaussianBump {
            amplitude: 0.7,
            center: 0.0,
            width: 1.0,
        };
        let pair = data.radial_pair(n, h, &p, Some(1e-8)).unwrap();
        let k1 = weighted_inward_energy(&pair, &p, &|_| 1.0).unwrap();
        let e_minus = PI * trapezoid(&pair.inward_density(&p), h);
        assert!(approx(k1, e_minus, 1e-14));
        assert!(4.0 * k1 <= 8.0 * pair.energy(&p));
    }

    #[test]
    fn appendix_k_divergence_windows() {
        // p = 4, kappa = 0.8: tail ~ r^(kappa - 4/3) per unit r, diverges
        let h = 0.05;
        let n = (300.0 / h) as usize + 1;
        let p4 = make_params(4.0, 0.8).unwrap();
        let data = InitialData::AppendixPowerLaw { c: 0.05, blend: 0.5 };
        let pair = data.radial_pair(n, h, &p4, None).unwrap();
        assert!(matches!(k_functional(&pair, &p4), Err(Error::Divergent { .. })));
        let p4ok = p4.with_kappa(0.25).unwrap();
        let r = k_functional(&pair, &p4ok);
        assert!(r.is_ok(), "{r:?}");
        // p = 3: the gradient channel vanishes for r >= 1 and kappa = 0.9 stays finite
        let p3 = make_params(3.0, 0.9).unwrap();
        let pair3 = data.radial_pair(n, h, &p3, None).unwrap();
        let dens = pair3.inward_density(&p3);
        let wr = derivative(&pair3.w0, h);
        for i in (2.0 / h) as usize..n - 1 {
            assert!((wr[i] + pair3.w1[i]).abs() < 1e-12);
            assert!(dens[i] > 0.0);
        }
        let k = k_functional(&pair3, &p3).unwrap();
        // closed-form tail oracle: pi int_1^R r^kappa c^4/2 r^-2 dr
        let c4 = 0.05f64.powi(4);
        let tail = |a: f64, b: f64| PI * 0.5 * c4 * (b.powf(-0.1) - a.powf(-0.1)) / -0.1;
        let rmax = (n - 1) as f64 * h;
        let numeric_tail = PI * trapezoid_range(
            &dens.iter().enumerate().map(|(i, d)| d * (i as f64 * h).powf(0.9)).collect::<Vec<_>>(),
            h,
            (2.0 / h) as usize,
            n - 1,
        );
        assert!((numeric_tail - tail(2.0, rmax)).abs() < 1e-4 * tail(2.0, rmax));
        assert!(k.k.is_finite());
    }

    #[test]
    fn energy_identity_on_interval() {
        // u0 = exp(-r^2), [a, b] = [1, 2]: both sides agree to O(h^2)
        let err = |h: f64| {
            let n = (4.0 / h) as usize + 1;
            let u0: Vec<f64> = (0..n).map(|i| (-(i as f64 * h).powi(2)).exp()).collect();
            let u1 = vec![0.0; n];
            let (l, r) = energy_transformation_sides(&u0, &u1, h, (1.0 / h) as usize, (2.0 / h) as usize);
            (l - r).abs()
        };
        let (e1, e2) = (err(1.0 / 64.0), err(1.0 / 128.0));
        assert!(e2 < 1e-3, "{e1} {e2}");
        assert!((e1 / e2).log2() > 1.8, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn w_and_u_energies_agree() {
        let p = make_params(3.0, 0.5).unwrap();
        let err = |h: f64| {
            let n = (10.0 / h) as usize + 1;
            let data = InitialData::GaussianBump {
                amplitude: 1.0,
                center: 0.0,
                width: 1.0,
            };
            let (u0, u1) = data.sample_u(n, h, &p).unwrap();
            let pair = lift_initial_data(&u0, &u1, h, &p, Some(1e-10)).unwrap();
            (pair.energy(&p) - u_side_energy(&u0, &u1, h, &p)).abs()
        };
        let (a, b, c) = (err(1.0 / 32.0), err(1.0 / 64.0), err(1.0 / 128.0));
        assert!((a / b).log2() >= 1.8 && (b / c).log2() >= 1.9, "{a} {b} {c}");
    }

    #[test]
    fn conformal_q0_at_rest_matches_u_quadrature() {
        let p = make_params(3.0, 0.5).unwrap();
        let h = 1.0 / 256.0;
        let n = (8.0 / h) as usize + 1;
        let data = InitialData::GaussianBump {
            amplitude: 1.0,
            center: 0.0,
            width: 1.0,
        };
        let (u0, u1) = data.sample_u(n, h, &p).unwrap();
        let pair = lift_initial_data(&u0, &u1, h, &p, None).unwrap();
        let (q0, _) = conformal_charge(&pair, 0.0, &p);
        // oracle: 4 pi int r^2 (2 u0 + r u0')^2 dr with exact u0' = -2 r e^{-r^2}
        let dens: Vec<f64> = (0..n)
            .map(|i| {
                let r = i as f64 * h;
                let u = (-r * r).exp();
                let v = 2.0 * u + r * (-2.0 * r * u);
                r * r * v * v
            })
            .collect();
        let oracle = 4.0 * PI * trapezoid(&dens, h);
        assert!((q0 - oracle).abs() < 1e-4 * oracle, "{q0} vs {oracle}");
    }
}
