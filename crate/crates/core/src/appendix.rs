//! The power-law example: nonlinear triangle integrals, the `3 c r^beta`
//! envelope, the smallness threshold and the composite example report.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{EnergyLedger, MonitorSpec, Trajectory, Violation};
use crate::error::{Error, Result};
use crate::model::{k_functional, InitialData, KValue, ModelParams};
use crate::quad::node_index;
use crate::scattering::{
    dyadic_times, fit_log_growth, fit_power_law, fit_power_law_min, free_wave_defect, inward_decay_constant,
    tail_norm_l2p2, tail_norm_lp_l2p, FitResult, LogFit,
};
use crate::solver::{evolve, Boundary, GridSpec};

/// Default width of the interior polynomial blend.
pub const DEFAULT_BLEND: f64 = 0.5;

/// Backward region `{r + t < t' + r', t - r < t' - r', t > 0}` below the apex `(r', t')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleRegion {
    pub r: f64,
    pub t: f64,
}

impl TriangleRegion {
    pub fn new(r: f64, t: f64) -> Result<Self> {
        if !(t > 0.0 && r > t && r.is_finite()) {
            return Err(Error::OutOfDomain(format!("apex needs r' > t' > 0 (r' = {r}, t' = {t})")));
        }
        Ok(Self { r, t })
    }

    pub fn contains(&self, r: f64, t: f64) -> bool {
        t > 0.0 && r + t < self.r + self.t && t - r < self.t - self.r
    }
}

/// Node-trapezoid quadrature of `int int_Omega |w|^p / r^(p-1) dr dt` for a field `w(r, t)`.
pub fn triangle_integral(
    region: &TriangleRegion,
    w: &dyn Fn(f64, f64) -> f64,
    params: &ModelParams,
    h: f64,
) -> Result<f64> {
    let ia = node_index("r'", region.r, h)?;
    let ka = node_index("t'", region.t, h)?;
    let mut total = 0.0;
    for k in 0..ka {
        let t = k as f64 * h;
        let d = ka - k;
        let mut row = 0.0;
        for i in (ia - d)..=(ia + d) {
            let r = i as f64 * h;
            let wgt = if i == ia - d || i == ia + d { 0.5 } else { 1.0 };
            row += wgt * params.abs_pow(w(r, t), 0) * r.powf(1.0 - params.p);
        }
        total += if k == 0 { 0.5 } else { 1.0 } * row * h;
    }
    Ok(total * h)
}

/// Tanh-sinh quadrature on `(0, 1)`; `f` receives `(x, 1 - x)` to keep endpoint precision.
fn tanh_sinh(f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let step = 1.0 / 64.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let mut j = -(4.5 / step) as i64;
    while j as f64 * step <= 4.5 {
        let t = j as f64 * step;
        let u = half_pi * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let y = 1.0 / (1.0 + (2.0 * u).exp());
        let c = u.cosh();
        let wgt = half_pi * t.cosh() / (2.0 * c * c);
        if x > 0.0 && y > 0.0 && wgt > 0.0 {
            sum += wgt * f(x, y);
        }
        j += 1;
    }
    sum * step
}

/// Constant `C_p` with `int int_Omega A^p r^(p beta) / r^(p-1) <= C_p A^p r'^beta`.
///
/// The region is enlarged to `{t' - r' < s < t' + r', tau < t' - r'}` in `s = t + r`,
/// `tau = t - r`; scaling out `r'` leaves `2 int_0^1 int_y^inf sigma^(-(p+1)/(p-1)) dsigma dy`,
/// evaluated with `sigma = y / v` on the unit square. Infinite for `p = 3`.
pub fn triangle_source_constant(p: f64) -> f64 {
    let beta = (p - 3.0) / (p - 1.0);
    if beta <= 0.0 {
        return f64::INFINITY;
    }
    // sigma^-q dsigma = y^(1-q) v^(q-2) dv with 1 - q = beta - 1, q - 2 = -beta
    let inner = tanh_sinh(&|v, _| v.powf(-beta));
    2.0 * tanh_sinh(&|y, _| y.powf(beta - 1.0) * inner)
}

/// `C_p A^p r'^beta`.
pub fn triangle_source_bound(params: &ModelParams, amplitude: f64, r_apex: f64) -> f64 {
    triangle_source_constant(params.p) * amplitude.abs().powf(params.p) * r_apex.powf(params.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub c: f64,
    /// `max |w| / (3 c r^beta)` over `r >= 1 + t`.
    pub max_ratio: f64,
    pub first_violation: Option<Violation>,
    /// `min |w| / (c r^beta)` over `r >= max(1 + t, 4)`.
    pub min_profile: f64,
    pub holds: bool,
    pub profile_holds: bool,
}

/// Largest lower-profile deficit accepted by the smallness predicate.
pub const PROFILE_DEFICIT: f64 = 0.5;

pub fn envelope_check(traj: &Trajectory) -> Result<EnvelopeReport> {
    let env = traj
        .envelope
        .as_ref()
        .ok_or_else(|| Error::OutOfDomain("run was not monitoring the power-law envelope".into()))?;
    Ok(EnvelopeReport {
        c: env.c,
        max_ratio: env.max_ratio,
        first_violation: env.first_violation.clone(),
        min_profile: env.min_profile,
        holds: env.max_ratio < 1.0,
        profile_holds: env.min_profile >= 1.0 - PROFILE_DEFICIT,
    })
}

/// Backward-cone check at an apex with `r' > 1 + t'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApexCheck {
    pub r: f64,
    pub t: f64,
    pub w: f64,
    /// `(w0(r' - t') + w0(r' + t')) / 2`.
    pub free: f64,
    /// `w - free + signed / 2`, zero up to discretization.
    pub duhamel_residual: f64,
    /// `int int |w|^p / r^(p-1)` over the cone.
    pub absolute: f64,
    /// `C_p (3c)^p r'^beta`.
    pub bound: f64,
}

pub fn apex_checks(traj: &Trajectory, c: f64) -> Vec<ApexCheck> {
    let h = traj.h();
    let w0 = &traj.initial.w0;
    let at = |r: f64| w0.get((r / h).round() as usize).copied().unwrap_or(f64::NAN);
    traj.apexes
        .iter()
        .filter(|a| a.inside)
        .map(|a| {
            let free = 0.5 * (at(a.r - a.t) + at(a.r + a.t));
            ApexCheck {
                r: a.r,
                t: a.t,
                w: a.w,
                free,
                duhamel_residual: a.w - free + 0.5 * a.signed,
                absolute: a.absolute,
                bound: triangle_source_bound(&traj.params, 3.0 * c, a.r),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub c: f64,
    pub holds: bool,
    pub max_ratio: Option<f64>,
    pub min_profile: Option<f64>,
    /// Error text when the run itself failed (counted as not holding).
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    /// Midpoint of the final bracket, or the cap when even `hi` holds.
    pub threshold: f64,
    pub lo: f64,
    pub hi: f64,
    /// False when `hi` holds (the threshold is at least the cap).
    pub found: bool,
    pub steps: Vec<BisectionStep>,
}

/// Bisect the boundary of `holds(c)` in `[lo, hi]`; `lo` must hold.
pub fn bisect(
    lo: f64,
    hi: f64,
    iterations: usize,
    holds: &mut dyn FnMut(f64) -> BisectionStep,
) -> Result<BisectionResult> {
    if !(0.0 < lo && lo < hi) {
        return Err(Error::OutOfRange {
            name: "bisection bracket",
            value: lo,
            expected: "0 < lo < hi",
        });
    }
    let mut steps = Vec::new();
    let first = holds(lo);
    let lo_ok = first.holds;
    steps.push(first);
    if !lo_ok {
        return Err(Error::Degenerate(format!("smallness predicate fails already at c = {lo}")));
    }
    let top = holds(hi);
    let hi_ok = top.holds;
    steps.push(top);
    if hi_ok {
        return Ok(BisectionResult {
            threshold: hi,
            lo: hi,
            hi,
            found: false,
            steps,
        });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let m = 0.5 * (a + b);
        let step = holds(m);
        if step.holds {
            a = m;
        } else {
            b = m;
        }
        steps.push(step);
    }
    Ok(BisectionResult {
        threshold: 0.5 * (a + b),
        lo: a,
        hi: b,
        found: true,
        steps,
    })
}

/// Smallness predicate for one `c`: the run completes, the upper envelope holds and
/// the lower profile stays within [`PROFILE_DEFICIT`].
pub fn envelope_step(c: f64, params: &ModelParams, grid: &GridSpec) -> BisectionStep {
    let run = || -> Result<EnvelopeReport> {
        let data = InitialData::AppendixPowerLaw { c, blend: DEFAULT_BLEND };
        let pair = data.radial_pair(grid.n_r, grid.h, params, None)?;
        let spec = MonitorSpec {
            radii: Vec::new(),
            ledger_stride: grid.steps().max(1),
            envelope_c: Some(c),
            ..MonitorSpec::default()
        };
        let (traj, _) = evolve(&pair, params, grid, &spec)?;
        envelope_check(&traj)
    };
    match run() {
        Ok(env) => BisectionStep {
            c,
            holds: env.holds && env.profile_holds,
            max_ratio: Some(env.max_ratio),
            min_profile: Some(env.min_profile),
            failure: None,
        },
        Err(e) => BisectionStep {
            c,
            holds: false,
            max_ratio: None,
            min_profile: None,
            failure: Some(e.to_string()),
        },
    }
}

pub fn bisect_threshold(
    params: &ModelParams,
    grid: &GridSpec,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> Result<BisectionResult> {
    bisect(lo, hi, iterations, &mut |c| envelope_step(c, params, grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayItem {
    /// `max E_-(t) t^kappa / K` over dyadic `t >= 4`.
    pub c_obs: f64,
    pub at: f64,
    /// Constant from the weighted Morawetz chain, `(1 + 2(p-1)^2 / ((p+1)(p-1-2 kappa))) / 4`.
    pub bound: f64,
    pub samples: Vec<(f64, f64)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpTailItem {
    pub t0: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_fractions: Vec<f64>,
    /// `values` plus the extrapolated integral beyond `t_max`, when it exists.
    pub completed: Option<Vec<f64>>,
    /// Fit of `completed` (or of `values` when no extrapolation exists).
    pub fit: Option<FitResult>,
    /// `-(p+1)/(p+3) (kappa - kappa0)`.
    pub target: f64,
    pub decreasing: bool,
    /// Fitted exponent within 30% of the target.
    pub rate_matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthItem {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LogFit,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectItem {
    /// Start times `t` of `defect(t, 2t)`.
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: Option<FitResult>,
    pub decreasing: bool,
    /// Fitted exponent at most `target + 0.2`.
    pub rate_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    pub c: f64,
    pub params: ModelParams,
    pub h: f64,
    pub t_max: f64,
    pub k: KValue,
    pub decay: DecayItem,
    pub envelope: EnvelopeReport,
    pub lp_tail: LpTailItem,
    pub exterior: GrowthItem,
    pub defect: DefectItem,
    pub apexes: Vec<ApexCheck>,
    pub energy_drift: f64,
}

impl AppendixReport {
    /// The five headline checks in order.
    pub fn items(&self) -> [(&'static str, bool); 5] {
        [
            ("K finite", self.k.k.is_finite()),
            ("E_minus t^kappa bounded", self.decay.pass),
            ("envelope", self.envelope.holds),
            ("Lp L2p tail decays", self.lp_tail.decreasing),
            ("exterior norm grows like log(1+T)", self.exterior.pass),
        ]
    }

    pub fn passed(&self) -> bool {
        self.items().iter().all(|(_, ok)| *ok)
    }
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Run the power-law example with the default blend width.
pub fn run_appendix_example(c: f64, params: &ModelParams, grid: &GridSpec) -> Result<(AppendixReport, Trajectory, EnergyLedger)> {
    run_appendix_example_with(c, DEFAULT_BLEND, params, grid)
}

pub fn run_appendix_example_with(
    c: f64,
    blend: f64,
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<(AppendixReport, Trajectory, EnergyLedger)> {
    if grid.boundary != Boundary::Cone {
        return Err(Error::InvalidGrid("power-law data need the cone boundary mode".into()));
    }
    let upper = (5.0 - params.p) / (params.p - 1.0);
    if !(params.kappa > params.kappa0 && params.kappa < upper) {
        return Err(Error::OutOfRange {
            name: "kappa",
            value: params.kappa,
            expected: "kappa0(p) < kappa < (5-p)/(p-1)",
        });
    }
    if grid.t_max < 16.0 {
        return Err(Error::OutOfRange {
            name: "t_max",
            value: grid.t_max,
            expected: ">= 16",
        });
    }
    let t_max = grid.t_max;
    let data = InitialData::AppendixPowerLaw { c, blend };
    let pair = data.radial_pair(grid.n_r, grid.h, params, None)?;
    let k = k_functional(&pair, params)?;

    let defect_starts = dyadic_times(8.0, t_max / 2.0);
    let mut snaps: Vec<f64> = defect_starts.iter().flat_map(|t| [*t, 2.0 * t]).collect();
    snaps.sort_by(f64::total_cmp);
    snaps.dedup();
    let apexes = dyadic_times(1.0, (t_max / 2.0).min(8.0))
        .into_iter()
        .map(|t| (t + 2.0, t))
        .collect();
    let spec = MonitorSpec {
        snapshot_times: snaps,
        apexes,
        envelope_c: Some(c),
        ..MonitorSpec::default()
    };
    let (traj, ledger) = evolve(&pair, params, grid, &spec)?;

    let (c_obs, at) = inward_decay_constant(&traj, 4.0)?;
    let kap = params.kappa;
    let p = params.p;
    let bound = 0.25 * (1.0 + 2.0 * (p - 1.0).powi(2) / ((p + 1.0) * (p - 1.0 - 2.0 * kap)));
    let mut samples = Vec::new();
    for t in dyadic_times(4.0, t_max) {
        let i = traj.level("t", t)?;
        samples.push((t, traj.levels.e_minus[i] * t.powf(kap) / k.k));
    }
    let decay = DecayItem {
        c_obs,
        at,
        bound,
        samples,
        pass: c_obs.is_finite() && c_obs <= bound,
    };

    let envelope = envelope_check(&traj)?;

    let target = -params.scattering_rate();
    let t0 = dyadic_times(4.0, t_max / 2.0);
    let mut values = Vec::new();
    let mut tail_fractions = Vec::new();
    let mut completed = Some(Vec::new());
    for t in &t0 {
        let v = tail_norm_lp_l2p(&traj, *t)?;
        values.push(v.value);
        tail_fractions.push(v.tail_fraction);
        completed = match (completed, v.extrapolated_tail) {
            (Some(mut c), Some(tail)) => {
                c.push(v.value + tail);
                Some(c)
            }
            _ => None,
        };
    }
    let fit = fit_power_law(&t0, completed.as_deref().unwrap_or(&values), None).ok();
    let rate_matches = fit.is_some_and(|f| (f.exponent - target).abs() <= 0.3 * target.abs());
    let lp_tail = LpTailItem {
        decreasing: decreasing(&values),
        t0,
        values,
        tail_fractions,
        completed,
        fit,
        target,
        rate_matches,
    };

    let ts: Vec<f64> = (4..=t_max.floor() as usize).map(|v| v as f64).collect();
    let ext: Vec<f64> = ts.iter().map(|t| tail_norm_l2p2(&traj, *t)).collect::<Result<_>>()?;
    let lf = fit_log_growth(&ts, &ext)?;
    let exterior = GrowthItem {
        pass: lf.r_squared >= 0.99 && lf.b > 0.0,
        t: ts,
        values: ext,
        fit: lf,
    };

    let dvals: Vec<f64> = defect_starts
        .iter()
        .map(|t| free_wave_defect(&traj, *t, 2.0 * t))
        .collect::<Result<_>>()?;
    let dfit = fit_power_law_min(&defect_starts, &dvals, None, 3).ok();
    let defect = DefectItem {
        decreasing: decreasing(&dvals),
        rate_ok: dfit.is_some_and(|f| f.exponent <= target + 0.2),
        t: defect_starts,
        values: dvals,
        fit: dfit,
    };

    let report = AppendixReport {
        c,
        params: *params,
        h: grid.h,
        t_max,
        k,
        decay,
        envelope,
        lp_tail,
        exterior,
        defect,
        apexes: apex_checks(&traj, c),
        energy_drift: ledger.relative_drift(),
    };
    Ok((report, traj, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    #[test]
    fn source_constant_closed_form() {
        for p in [3.5, 4.0, 4.5] {
            let beta = (p - 3.0) / (p - 1.0);
            let exact = 2.0 / (beta * (1.0 - beta));
            let c = triangle_source_constant(p);
            assert!((c - exact).abs() < 1e-8 * exact, "p = {p}: {c} vs {exact}");
        }
        assert!(triangle_source_constant(3.0).is_infinite());
    }

    #[test]
    fn zero_field_integral() {
        let p = make_params(4.0, 0.25).unwrap();
        let reg = TriangleRegion::new(8.0, 4.0).unwrap();
        assert_eq!(triangle_integral(&reg, &|_, _| 0.0, &p, 1.0 / 16.0).unwrap(), 0.0);
    }

    #[test]
    fn region_validation() {
        assert!(TriangleRegion::new(2.0, 3.0).is_err());
        assert!(TriangleRegion::new(2.0, 0.0).is_err());
        let reg = TriangleRegion::new(8.0, 4.0).unwrap();
        assert!(reg.contains(6.0, 1.0));
        assert!(!reg.contains(3.0, 1.0));
        assert!(!reg.contains(12.0, 1.0));
        let p = make_params(4.0, 0.25).unwrap();
        assert!(matches!(
            triangle_integral(&reg, &|_, _| 1.0, &p, 0.3),
            Err(Error::OffGrid { .. })
        ));
    }

    #[test]
    fn bisection_on_a_step() {
        let mut pred = |c: f64| BisectionStep {
            c,
            holds: c < 0.7,
            max_ratio: None,
            min_profile: None,
            failure: None,
        };
        let r = bisect(0.1, 2.0, 20, &mut pred).unwrap();
        assert!(r.found && (r.threshold - 0.7).abs() < 1e-5);
        let r = bisect(0.1, 0.5, 5, &mut pred).unwrap();
        assert!(!r.found && r.threshold == 0.5);
        assert!(bisect(0.8, 2.0, 5, &mut pred).is_err());
    }
}
