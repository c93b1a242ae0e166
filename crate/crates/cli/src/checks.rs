//! Pass/fail verdicts shared by `run` and `verify`.

use serde::Serialize;

use nlw_core::diagnostics::{
    pointwise_bounds, triangle_residual_minus, triangle_residual_plus, weighted_morawetz_power, EnergyLedger, Trajectory,
};
use nlw_core::Error;

use crate::config::{CheckName, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// Measured quantity compared against `limit`.
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Verdict {
    fn compare(name: &str, value: f64, limit: f64, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: Some(value),
            limit: Some(limit),
            detail: detail.into(),
        }
    }

    /// `value <= limit`, failing on NaN.
    pub fn at_most(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::compare(name, value, limit, value <= limit, detail)
    }

    pub fn at_least(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self::compare(name, value, limit, value >= limit, detail)
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    pub fn skipped(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            status: Status::Skipped,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        match (self.value, self.limit) {
            (Some(v), Some(l)) => format!("{tag} {:<14} {v:.3e} (limit {l:.3e}) {}", self.name, self.detail),
            _ => format!("{tag} {:<14} {}", self.name, self.detail),
        }
    }
}

/// The four ledger columns the checks need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerColumns {
    pub t: Vec<f64>,
    pub e_total: Vec<f64>,
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
}

impl From<&EnergyLedger> for LedgerColumns {
    fn from(ledger: &EnergyLedger) -> Self {
        let mut c = Self::default();
        for r in &ledger.rows {
            c.t.push(r.t);
            c.e_total.push(r.e_total);
            c.e_minus.push(r.e_minus);
            c.e_plus.push(r.e_plus);
        }
        c
    }
}

impl LedgerColumns {
    /// Largest total energy, the scale for the relative tolerances.
    pub fn scale(&self) -> f64 {
        self.e_total.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn drift(&self) -> f64 {
        match self.e_total.first() {
            Some(&e0) if e0 != 0.0 => self.e_total.iter().map(|e| ((e - e0) / e0).abs()).fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    pub fn additivity_error(&self) -> f64 {
        (0..self.t.len())
            .map(|i| (self.e_total[i] - self.e_minus[i] - self.e_plus[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest step decrease of `E_minus` and step increase of `E_plus`.
    pub fn margins(&self) -> (f64, f64) {
        let m = |v: &[f64], sign: f64| {
            v.windows(2)
                .map(|w| sign * (w[0] - w[1]))
                .fold(f64::INFINITY, f64::min)
        };
        if self.t.len() < 2 {
            return (0.0, 0.0);
        }
        (m(&self.e_minus, 1.0), m(&self.e_plus, -1.0))
    }
}

/// Relative limit on an absolute error; a zero scale demands an exact zero.
fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn ledger_checks(cols: &LedgerColumns, checks: &[CheckName], tol: &Tolerances) -> Vec<Verdict> {
    let scale = cols.scale();
    let mut out = Vec::new();
    for check in checks {
        match check {
            CheckName::Drift => out.push(Verdict::at_most("drift", cols.drift(), tol.drift, "max |E(t) - E(0)| / E(0)")),
            CheckName::Additivity => out.push(Verdict::at_most(
                "additivity",
                relative(cols.additivity_error(), scale),
                tol.additivity,
                "max |E_total - E_minus - E_plus| / E",
            )),
            CheckName::Monotonicity => {
                let (a, b) = cols.margins();
                let worst = a.min(b);
                out.push(Verdict::at_least(
                    "monotonicity",
                    if scale > 0.0 { worst / scale } else { worst.min(0.0) },
                    -tol.monotone,
                    format!("E_minus margin {a:.3e}, E_plus margin {b:.3e}"),
                ));
            }
            _ => {}
        }
    }
    out
}

/// Outer radius of the initial data's support, from the stored samples.
pub fn support_of(traj: &Trajectory) -> f64 {
    let pair = &traj.initial;
    let last = pair
        .w0
        .iter()
        .zip(&pair.w1)
        .rposition(|(a, b)| *a != 0.0 || *b != 0.0)
        .unwrap_or(0);
    last as f64 * pair.h
}

/// Triangle residuals `(t0, r0, residual / energy)` for the inward law and, when `r0 <= t0`, the outward law.
pub fn triangle_residuals(traj: &Trajectory, e_scale: f64) -> Result<Vec<(f64, f64, f64, Option<f64>)>, Error> {
    let mut out = Vec::new();
    for probe in traj.triangles.iter().filter(|p| p.inside) {
        let rel = |b: nlw_core::diagnostics::TriangleBudget| {
            relative(b.residual.abs(), if b.energy > 0.0 { b.energy } else { e_scale })
        };
        let minus = rel(triangle_residual_minus(traj, probe.t0, probe.r0)?);
        let plus = if probe.r0 <= probe.t0 {
            Some(rel(triangle_residual_plus(traj, probe.t0, probe.r0)?))
        } else {
            None
        };
        out.push((probe.t0, probe.r0, minus, plus));
    }
    Ok(out)
}

pub fn trajectory_checks(traj: &Trajectory, e_scale: f64, checks: &[CheckName], tol: &Tolerances) -> Vec<Verdict> {
    let mut out = Vec::new();
    for check in checks {
        match check {
            CheckName::Triangles => out.push(match triangle_residuals(traj, e_scale) {
                Ok(list) if list.is_empty() => Verdict::skipped("triangles", "no triangle probes inside the valid region"),
                Ok(list) => {
                    let worst = list
                        .iter()
                        .flat_map(|(_, _, m, p)| std::iter::once(*m).chain(*p))
                        .fold(0.0, f64::max);
                    Verdict::at_most("triangles", worst, tol.triangle, format!("{} probes, relative residual", list.len()))
                }
                Err(e) => Verdict::flag("triangles", false, e.to_string()),
            }),
            CheckName::Pointwise => {
                let mut r1 = 0.0f64;
                let mut r2 = 0.0f64;
                let h = traj.h();
                let initial = pointwise_bounds(&traj.initial.w0, h, traj.initial.len() - 2, &traj.params);
                let mut states = vec![initial];
                states.extend(
                    traj.snapshots
                        .iter()
                        .map(|s| pointwise_bounds(&s.w, h, s.valid_hi, &traj.params)),
                );
                for s in &states {
                    r1 = r1.max(s.ratio1);
                    r2 = r2.max(s.ratio2);
                }
                out.push(Verdict::at_most(
                    "pointwise",
                    r1.max(r2),
                    1.0 + tol.pointwise,
                    format!("{} states, ratio1 {r1:.4}, ratio2 {r2:.4}", states.len()),
                ));
            }
            CheckName::Morawetz => out.push(match weighted_morawetz_power(traj) {
                Ok(m) => Verdict::at_most(
                    "morawetz",
                    m.bound_ratio,
                    1.0,
                    format!("xi ratio {:.3e}, bulk ratio {:.3e}", m.xi_ratio, m.bulk_ratio),
                ),
                Err(Error::Divergent { .. }) => Verdict::skipped("morawetz", "weighted inward energy is infinite"),
                Err(e) => Verdict::flag("morawetz", false, e.to_string()),
            }),
            CheckName::Flux => out.push(flux_check(traj, e_scale, tol.flux)),
            _ => {}
        }
    }
    out
}

/// `Q(s) = Q_-^-(s; 0, s)` is non-increasing beyond the data support and small by `s = t_max / 2`.
fn flux_check(traj: &Trajectory, e_scale: f64, tol: f64) -> Verdict {
    let h = traj.h();
    let support = support_of(traj);
    let half = traj.t_max() / 2.0;
    if traj.initial.power_tail.is_some() || support >= half {
        return Verdict::skipped("flux", "data are not compactly supported well inside t_max / 2");
    }
    let q = &traj.inward_flux_from_zero;
    let lo = (support / h).ceil() as usize + 1;
    let hi = ((traj.t_max() / h).round() as usize).min(q.len().saturating_sub(1));
    let slack = 1e-12 * e_scale;
    let monotone = (lo..hi).all(|k| q[k + 1] <= q[k] + slack);
    let at_half = q.get((half / h).round() as usize).copied().unwrap_or(f64::NAN);
    let rel = relative(at_half, e_scale);
    let mut v = Verdict::at_most("flux", rel, tol, format!("Q(t_max/2) / E, non-increasing beyond r = {support}: {monotone}"));
    if !monotone {
        v.status = Status::Fail;
    }
    v
}
