//! Energy channels, origin trace, characteristic fluxes, triangle budgets,
//! weighted Morawetz integrals and pointwise bounds.
//!
//! The solver hands every time level (with both neighbours) to a [`Recorder`],
//! which keeps per-level series and spacetime accumulators so that no full
//! spacetime field is ever stored.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{conformal_charge_w, weighted_inward_energy, FarField, ModelParams, RadialPair};
use crate::quad::{nearest_node, node_index, trapezoid_range};
use crate::solver::{Boundary, GridSpec};

/// Radius at which `E(t; 0, R)` and its channels are monitored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MonitorRadius {
    Fixed(f64),
    /// `R = fraction * t`.
    Tracker(f64),
}

impl MonitorRadius {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            MonitorRadius::Fixed(r) => r,
            MonitorRadius::Tracker(f) => f * t,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            MonitorRadius::Fixed(r) => format!("r={r}"),
            MonitorRadius::Tracker(f) => format!("r={f}t"),
        }
    }
}

/// What to record during a run. Times and characteristic labels must be grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub radii: Vec<MonitorRadius>,
    /// Ledger row every `ledger_stride` steps (and at the final step).
    pub ledger_stride: usize,
    pub snapshot_stride: Option<usize>,
    pub snapshot_times: Vec<f64>,
    /// Inward characteristic labels `s = r + t`.
    pub inward_lines: Vec<f64>,
    /// Outward characteristic labels `tau = t - r`.
    pub outward_lines: Vec<f64>,
    /// Triangle-law probes `(t0, r0)`.
    pub triangles: Vec<(f64, f64)>,
    /// Backward-cone probes `(r', t')` with `r' > t'`.
    pub apexes: Vec<(f64, f64)>,
    /// Envelope constant `c` for power-law data.
    pub envelope_c: Option<f64>,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self {
            radii: vec![
                MonitorRadius::Fixed(0.25),
                MonitorRadius::Fixed(1.0),
                MonitorRadius::Tracker(0.25),
            ],
            ledger_stride: 8,
            snapshot_stride: None,
            snapshot_times: Vec::new(),
            inward_lines: Vec::new(),
            outward_lines: Vec::new(),
            triangles: Vec::new(),
            apexes: Vec::new(),
            envelope_c: None,
        }
    }
}

/// Three consecutive levels around `t`, valid on nodes `0..=valid_hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub h: f64,
    pub valid_hi: usize,
    pub w_prev: Vec<f64>,
    pub w: Vec<f64>,
    pub w_next: Vec<f64>,
}

impl Snapshot {
    /// `(w_r, w_t)` on valid nodes; centered in space and time, one-sided at the origin.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.valid_hi;
        let inv2h = 0.5 / self.h;
        let mut wr = vec![0.0; m + 1];
        let mut wt = vec![0.0; m + 1];
        wr[0] = (-3.0 * self.w[0] + 4.0 * self.w[1] - self.w[2]) * inv2h;
        for i in 1..=m {
            wr[i] = (self.w[i + 1] - self.w[i - 1]) * inv2h;
            wt[i] = (self.w_next[i] - self.w_prev[i]) * inv2h;
        }
        (wr, wt)
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// One row of the energy ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub e_total: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub xi: f64,
    /// `(E, E_minus, E_plus)` on `[0, R]` per monitor radius.
    pub radii: Vec<[f64; 3]>,
    pub q0: f64,
    pub q1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub radius_labels: Vec<String>,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn csv_header(&self) -> String {
        let mut cols = vec![
            "t".to_string(),
            "E_total".into(),
            "E_minus".into(),
            "E_plus".into(),
            "xi".into(),
        ];
        for l in &self.radius_labels {
            cols.push(format!("E[{l}]"));
            cols.push(format!("E_minus[{l}]"));
            cols.push(format!("E_plus[{l}]"));
        }
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![row.t, row.e_total, row.e_minus, row.e_plus, row.xi];
            for tr in &row.radii {
                fields.extend_from_slice(tr);
            }
            let line: Vec<String> = fields.iter().map(|v| format!("{v:.15e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// `max |E_total - (E_minus + E_plus)|` over rows.
    pub fn additivity_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.e_total - (r.e_minus + r.e_plus)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |E(t) - E(0)| / E(0)`; zero for zero energy.
    pub fn relative_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        if first.e_total == 0.0 {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| ((r.e_total - first.e_total) / first.e_total).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest step-to-step decrease of `E_minus` and increase of `E_plus`
    /// (negative values are monotonicity violations).
    pub fn monotonicity_margins(&self) -> (f64, f64) {
        let mut m_minus = f64::INFINITY;
        let mut m_plus = f64::INFINITY;
        for pair in self.rows.windows(2) {
            m_minus = m_minus.min(pair[0].e_minus - pair[1].e_minus);
            m_plus = m_plus.min(pair[1].e_plus - pair[0].e_plus);
        }
        if self.rows.len() < 2 {
            (0.0, 0.0)
        } else {
            (m_minus, m_plus)
        }
    }

    /// Largest step-to-step increase of the conformal charge `Q0 + Q1`.
    pub fn conformal_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|p| (p[1].q0 + p[1].q1) - (p[0].q0 + p[0].q1))
            .fold(0.0, f64::max)
    }
}

/// Per-level series (one entry per time level `k = 0..=N`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelSeries {
    pub t: Vec<f64>,
    /// `w(h, t) / h`.
    pub xi: Vec<f64>,
    /// `(4 w(h, t) - w(2h, t)) / (2h)`.
    pub xi_second_order: Vec<f64>,
    pub e_total: Vec<f64>,
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
    /// `int |w|^(p+1) / r^p dr`.
    pub bulk: Vec<f64>,
    /// `(4 pi int |u|^(2p) r^2 dr)^(1/2)`.
    pub lp_l2p: Vec<f64>,
    /// `4 pi int_{r > 1 + t} |u|^(2(p-1)) r^2 dr`.
    pub exterior: Vec<f64>,
    /// `(E, E_minus, E_plus)` on `[0, R]` per monitor radius, per level.
    pub radius_channels: Vec<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharSample {
    pub t: f64,
    pub r: f64,
    pub w: f64,
    /// `w_r + w_t` on inward lines, `w_r - w_t` on outward lines.
    pub combo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharLine {
    pub label: f64,
    pub samples: Vec<CharSample>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleProbe {
    pub t0: f64,
    pub r0: f64,
    pub inside: bool,
    pub e_minus_t0: f64,
    pub e_plus_t0: f64,
    /// `int int_{Omega_u} |w|^(p+1)/r^p`.
    pub bulk_up: f64,
    /// `int int_{Omega_d} |w|^(p+1)/r^p`.
    pub bulk_down: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApexProbe {
    pub r: f64,
    pub t: f64,
    pub inside: bool,
    /// `w(r', t')`.
    pub w: f64,
    /// `int int_cone |w|^(p-1) w / r^(p-1)`.
    pub signed: f64,
    /// `int int_cone |w|^p / r^(p-1)`.
    pub absolute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub r: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvelopeRecord {
    pub c: f64,
    /// `max |w| / (3 c r^beta)` over `r >= 1 + t`.
    pub max_ratio: f64,
    pub first_violation: Option<Violation>,
    /// `min |w| / (c r^beta)` over `r >= max(1 + t, 4)`.
    pub min_profile: f64,
    /// `(t, w / (c r^beta))` at `r = 1 + t + {0, 2, 4}` (NaN outside the grid).
    pub traces: Vec<(f64, [f64; 3])>,
}

/// Everything a run keeps besides the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub initial: RadialPair,
    pub radii: Vec<MonitorRadius>,
    pub snapshots: Vec<Snapshot>,
    pub levels: LevelSeries,
    pub inward_lines: Vec<CharLine>,
    pub outward_lines: Vec<CharLine>,
    pub triangles: Vec<TriangleProbe>,
    pub apexes: Vec<ApexProbe>,
    pub envelope: Option<EnvelopeRecord>,
    /// `Q_-^-(s; 0, s)` indexed by the node of `s`; complete for `s <= t_max`.
    pub inward_flux_from_zero: Vec<f64>,
    /// `int f(s - t, t) dt` with `f = |w|^(p+1)/r^p`, indexed by the node of `s = r + t`.
    pub bulk_by_char: Vec<f64>,
}

impl Trajectory {
    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn t_max(&self) -> f64 {
        self.grid.t_max
    }

    pub fn level(&self, name: &'static str, t: f64) -> Result<usize> {
        let k = node_index(name, t, self.grid.h)?;
        if k < 0 || k as usize >= self.levels.t.len() {
            return Err(Error::OutOfDomain(format!("{name} = {t} outside [0, {}]", self.grid.t_max)));
        }
        Ok(k as usize)
    }

    pub fn snapshot_at(&self, t: f64) -> Result<&Snapshot> {
        let k = self.level("t", t)?;
        self.snapshots
            .iter()
            .find(|s| s.step == k)
            .ok_or_else(|| Error::OutOfDomain(format!("no snapshot stored at t = {t}")))
    }
}

fn same_label(a: f64, b: f64, h: f64) -> bool {
    (a - b).abs() <= 1e-9 * h
}

/// Online accumulation of all per-level diagnostics.
pub struct Recorder {
    params: ModelParams,
    grid: GridSpec,
    n_steps: usize,
    spec: MonitorSpec,
    traj: Trajectory,
    ledger: EnergyLedger,
    snapshot_steps: BTreeSet<usize>,
    inward_idx: Vec<usize>,
    outward_idx: Vec<i64>,
    triangle_idx: Vec<(usize, usize)>,
    apex_idx: Vec<(usize, usize)>,
    inv_r_pm1: Vec<f64>,
    inv_r_pm2: Vec<f64>,
    inv_env: Vec<f64>,
    far: Option<FarField>,
    wr: Vec<f64>,
    wt: Vec<f64>,
    dm: Vec<f64>,
    dp: Vec<f64>,
    cum_m: Vec<f64>,
    cum_p: Vec<f64>,
    bulk: Vec<f64>,
    flux: Vec<f64>,
}

impl Recorder {
    pub fn new(pair: &RadialPair, params: &ModelParams, grid: &GridSpec, spec: &MonitorSpec) -> Result<Self> {
        let h = grid.h;
        let n = grid.n_r;
        let n_steps = grid.steps();
        let mut spec = spec.clone();
        if spec.ledger_stride == 0 {
            return Err(Error::InvalidGrid("monitors.stride must be positive".into()));
        }
        for r in &spec.radii {
            let ok = match *r {
                MonitorRadius::Fixed(v) => v >= 0.0,
                MonitorRadius::Tracker(f) => f > 0.0,
            };
            if !ok {
                return Err(Error::InvalidGrid(format!("bad monitor radius {r:?}")));
            }
        }
        let mut snapshot_steps = BTreeSet::new();
        if let Some(stride) = spec.snapshot_stride {
            if stride == 0 {
                return Err(Error::InvalidGrid("monitors.snapshot_stride must be positive".into()));
            }
            snapshot_steps.extend((0..=n_steps).step_by(stride));
            snapshot_steps.insert(n_steps);
        }
        for &t in &spec.snapshot_times {
            let k = node_index("monitors.snapshot_times", t, h)?;
            if k < 0 || k as usize > n_steps {
                return Err(Error::OutOfDomain(format!("snapshot time {t} outside [0, {}]", grid.t_max)));
            }
            snapshot_steps.insert(k as usize);
        }
        // triangle probes register the characteristics their budgets need
        let mut triangle_idx = Vec::new();
        for &(t0, r0) in &spec.triangles {
            let k0 = node_index("monitors.triangles", t0, h)?;
            let ri = node_index("monitors.triangles", r0, h)?;
            if k0 < 0 || ri <= 0 {
                return Err(Error::OutOfDomain(format!("triangle (t0, r0) = ({t0}, {r0})")));
            }
            triangle_idx.push((k0 as usize, ri as usize));
            let s = t0 + r0;
            if !spec.inward_lines.iter().any(|x| same_label(*x, s, h)) {
                spec.inward_lines.push(s);
            }
            if k0 >= ri {
                let tau = t0 - r0;
                if !spec.outward_lines.iter().any(|x| same_label(*x, tau, h)) {
                    spec.outward_lines.push(tau);
                }
            }
        }
        let mut inward_idx = Vec::new();
        for &s in &spec.inward_lines {
            let k = node_index("monitors.flux_inward", s, h)?;
            if k <= 0 {
                return Err(Error::OutOfDomain(format!("inward label s = {s} must be positive")));
            }
            inward_idx.push(k as usize);
        }
        let mut outward_idx = Vec::new();
        for &tau in &spec.outward_lines {
            outward_idx.push(node_index("monitors.flux_outward", tau, h)?);
        }
        let mut apex_idx = Vec::new();
        for &(r, t) in &spec.apexes {
            let i = node_index("monitors.apexes", r, h)?;
            let k = node_index("monitors.apexes", t, h)?;
            if !(i > k && k >= 0) {
                return Err(Error::OutOfDomain(format!("apex (r', t') = ({r}, {t}) needs r' > t' >= 0")));
            }
            apex_idx.push((i as usize, k as usize));
        }
        let inv_r_pm1 = (0..n)
            .map(|i| if i == 0 { 0.0 } else { (i as f64 * h).powf(1.0 - params.p) })
            .collect();
        let inv_r_pm2 = (0..n)
            .map(|i| if i == 0 { 0.0 } else { (i as f64 * h).powf(2.0 - params.p) })
            .collect();
        let inv_env = match spec.envelope_c {
            Some(c) if c > 0.0 => (0..n)
                .map(|i| if i == 0 { 0.0 } else { 1.0 / (3.0 * c * (i as f64 * h).powf(params.beta)) })
                .collect(),
            _ => Vec::new(),
        };
        let far = match (pair.power_tail, grid.boundary) {
            (Some(c), Boundary::Cone) => {
                if grid.r_max() < 2.0 * grid.t_max + 2.0 {
                    return Err(Error::InvalidGrid(format!(
                        "power-law data need r_max >= 2 t_max + 2 (r_max = {}, t_max = {})",
                        grid.r_max(),
                        grid.t_max
                    )));
                }
                Some(FarField::new(c, params))
            }
            _ => None,
        };
        let traj = Trajectory {
            params: *params,
            grid: *grid,
            initial: pair.clone(),
            radii: spec.radii.clone(),
            snapshots: Vec::new(),
            levels: LevelSeries {
                radius_channels: vec![Vec::with_capacity(n_steps + 1); spec.radii.len()],
                ..Default::default()
            },
            inward_lines: spec
                .inward_lines
                .iter()
                .map(|s| CharLine { label: *s, samples: Vec::new() })
                .collect(),
            outward_lines: spec
                .outward_lines
                .iter()
                .map(|s| CharLine { label: *s, samples: Vec::new() })
                .collect(),
            triangles: spec
                .triangles
                .iter()
                .map(|&(t0, r0)| TriangleProbe { t0, r0, inside: true, ..Default::default() })
                .collect(),
            apexes: spec
                .apexes
                .iter()
                .map(|&(r, t)| ApexProbe { r, t, inside: true, ..Default::default() })
                .collect(),
            envelope: spec.envelope_c.map(|c| EnvelopeRecord {
                c,
                min_profile: if c > 0.0 { f64::INFINITY } else { 0.0 },
                ..Default::default()
            }),
            inward_flux_from_zero: vec![0.0; n],
            bulk_by_char: vec![0.0; n + n_steps + 1],
        };
        let ledger = EnergyLedger {
            radius_labels: spec.radii.iter().map(|r| r.label()).collect(),
            rows: Vec::new(),
        };
        Ok(Self {
            params: *params,
            grid: *grid,
            n_steps,
            spec,
            traj,
            ledger,
            snapshot_steps,
            inward_idx,
            outward_idx,
            triangle_idx,
            apex_idx,
            inv_r_pm1,
            inv_r_pm2,
            inv_env,
            far,
            wr: vec![0.0; n],
            wt: vec![0.0; n],
            dm: vec![0.0; n],
            dp: vec![0.0; n],
            cum_m: vec![0.0; n],
            cum_p: vec![0.0; n],
            bulk: vec![0.0; n],
            flux: vec![0.0; n],
        })
    }

    /// Record level `k` given the levels `k - 1`, `k`, `k + 1`.
    pub fn observe(&mut self, k: usize, prev: &[f64], curr: &[f64], next: &[f64]) {
        let h = self.grid.h;
        let t = k as f64 * h;
        let m = self.grid.valid_hi(k);
        let p = &self.params;
        let inv2h = 0.5 / h;
        let pot_c = 2.0 / (p.p + 1.0);

        self.wr[0] = (-3.0 * curr[0] + 4.0 * curr[1] - curr[2]) * inv2h;
        self.wt[0] = 0.0;
        self.flux[0] = 0.0;
        self.bulk[0] = 0.0;
        for i in 1..=m {
            self.wr[i] = (curr[i + 1] - curr[i - 1]) * inv2h;
            self.wt[i] = (next[i] - prev[i]) * inv2h;
            if p.linear {
                self.flux[i] = 0.0;
                self.bulk[i] = 0.0;
            } else {
                let fl = p.abs_pow(curr[i], 1) * self.inv_r_pm1[i];
                self.flux[i] = fl;
                self.bulk[i] = fl / (i as f64 * h);
            }
        }
        for i in 0..=m {
            let a = self.wr[i] + self.wt[i];
            let b = self.wr[i] - self.wt[i];
            let pot = pot_c * self.flux[i];
            self.dm[i] = a * a + pot;
            self.dp[i] = b * b + pot;
        }
        self.cum_m[0] = 0.0;
        self.cum_p[0] = 0.0;
        for i in 1..=m {
            self.cum_m[i] = self.cum_m[i - 1] + 0.5 * PI * h * (self.dm[i - 1] + self.dm[i]);
            self.cum_p[i] = self.cum_p[i - 1] + 0.5 * PI * h * (self.dp[i - 1] + self.dp[i]);
        }
        // beyond the valid edge the power-law data are continued by their far field
        let tails = self.far.map(|f| f.tails(m as f64 * h, t)).unwrap_or_default();
        let e_minus = self.cum_m[m] + tails.e_minus;
        let e_plus = self.cum_p[m] + tails.e_plus;
        let xi = curr[1] / h;

        let lv = &mut self.traj.levels;
        lv.t.push(t);
        lv.xi.push(xi);
        lv.xi_second_order.push((4.0 * curr[1] - curr[2]) * inv2h);
        lv.e_minus.push(e_minus);
        lv.e_plus.push(e_plus);
        lv.e_total.push(e_minus + e_plus);
        lv.bulk.push(trapezoid_range(&self.bulk, h, 0, m));

        let mut triples = Vec::with_capacity(self.spec.radii.len());
        for (j, rad) in self.spec.radii.iter().enumerate() {
            let idx = nearest_node(rad.at(t), h, m);
            let tr = [self.cum_m[idx] + self.cum_p[idx], self.cum_m[idx], self.cum_p[idx]];
            lv.radius_channels[j].push(tr);
            triples.push(tr);
        }

        // spacetime norms of u = w / r
        let mut lp = 0.0;
        let mut ext = 0.0;
        let ext_lo = (1.0 / h).round() as usize + k;
        for i in 1..=m {
            let a = curr[i].abs();
            if a == 0.0 {
                continue;
            }
            let wp = p.abs_pow(a, 0);
            let g = wp * self.inv_r_pm1[i];
            let wgt = if i == m { 0.5 } else { 1.0 };
            lp += wgt * g * g;
            if i >= ext_lo {
                let e = wp / a * self.inv_r_pm2[i];
                let wgt = if i == ext_lo || i == m { 0.5 } else { 1.0 };
                ext += wgt * e * e;
            }
        }
        lv.lp_l2p.push((4.0 * PI * lp * h + tails.lp).sqrt());
        lv.exterior.push(if ext_lo <= m { 4.0 * PI * ext * h + tails.exterior } else { 0.0 });

        // characteristic accumulators
        let last = k == self.n_steps;
        let wt_k = if k == 0 || last { 0.5 } else { 1.0 };
        let flux_c = 4.0 * PI / (p.p + 1.0);
        if !p.linear {
            for i in 1..=m {
                let wgt = if i == m { 0.5 } else { 1.0 };
                self.traj.bulk_by_char[i + k] += wt_k * wgt * self.bulk[i] * h;
            }
            let start = if k == 0 { 0.5 } else { 1.0 };
            let qin = &mut self.traj.inward_flux_from_zero;
            for i in 1..=m {
                if i + k < qin.len() {
                    qin[i + k] += start * flux_c * self.flux[i] * h;
                }
            }
        }
        for (line, &s) in self.traj.inward_lines.iter_mut().zip(&self.inward_idx) {
            if k <= s && s - k <= m {
                let i = s - k;
                line.samples.push(CharSample {
                    t,
                    r: i as f64 * h,
                    w: curr[i],
                    combo: self.wr[i] + self.wt[i],
                });
            }
        }
        for (line, &tau) in self.traj.outward_lines.iter_mut().zip(&self.outward_idx) {
            let i = k as i64 - tau;
            if i >= 0 && i as usize <= m {
                let i = i as usize;
                line.samples.push(CharSample {
                    t,
                    r: i as f64 * h,
                    w: curr[i],
                    combo: self.wr[i] - self.wt[i],
                });
            }
        }

        // triangle probes
        for (probe, &(k0, r0)) in self.traj.triangles.iter_mut().zip(&self.triangle_idx) {
            let s = k0 + r0;
            if k == k0 {
                if r0 > m {
                    probe.inside = false;
                } else {
                    probe.e_minus_t0 = self.cum_m[r0];
                    probe.e_plus_t0 = self.cum_p[r0];
                }
            }
            if k >= k0 && k <= s {
                let top = s - k;
                let wt = if k == k0 || k == s { 0.5 } else { 1.0 };
                probe.bulk_up += wt * h * trapezoid_range(&self.bulk, h, 0, top.min(m));
            }
            if k0 >= r0 {
                let tau = k0 - r0;
                if k >= tau && k <= k0 {
                    let top = k - tau;
                    let wt = if k == tau || k == k0 { 0.5 } else { 1.0 };
                    probe.bulk_down += wt * h * trapezoid_range(&self.bulk, h, 0, top.min(m));
                }
            }
        }

        // backward-cone probes
        for (probe, &(ia, ka)) in self.traj.apexes.iter_mut().zip(&self.apex_idx) {
            if k > ka {
                continue;
            }
            let d = ka - k;
            let (lo, hi) = (ia - d, ia + d);
            if hi > m {
                probe.inside = false;
                continue;
            }
            if k == ka {
                probe.w = curr[ia];
            }
            let wt = if k == 0 || k == ka { 0.5 } else { 1.0 };
            let mut signed = 0.0;
            let mut absolute = 0.0;
            for i in lo..=hi {
                let wgt = if (i == lo || i == hi) && lo != hi { 0.5 } else { 1.0 };
                let ap = p.abs_pow(curr[i], 0) * self.inv_r_pm1[i];
                absolute += wgt * ap;
                signed += wgt * ap * curr[i].signum();
            }
            if lo == hi {
                signed = 0.0;
                absolute = 0.0;
            }
            probe.signed += wt * h * h * signed;
            probe.absolute += wt * h * h * absolute;
        }

        // power-law envelope
        if let Some(env) = self.traj.envelope.as_mut() {
            if !self.inv_env.is_empty() {
                let prof_lo = ext_lo.max((4.0 / h).round() as usize);
                let mut first: Option<Violation> = None;
                for i in ext_lo..=m {
                    let ratio = curr[i].abs() * self.inv_env[i];
                    if ratio > env.max_ratio {
                        env.max_ratio = ratio;
                    }
                    if ratio > 1.0 && first.is_none() {
                        first = Some(Violation { t, r: i as f64 * h, ratio });
                    }
                    if i >= prof_lo {
                        env.min_profile = env.min_profile.min(3.0 * ratio);
                    }
                }
                if env.first_violation.is_none() {
                    env.first_violation = first;
                }
                let step2 = (2.0 / h).round() as usize;
                let mut tr = [f64::NAN; 3];
                for (j, slot) in tr.iter_mut().enumerate() {
                    let i = ext_lo + j * step2;
                    if i <= m {
                        *slot = 3.0 * curr[i] * self.inv_env[i];
                    }
                }
                env.traces.push((t, tr));
            }
        }

        if self.snapshot_steps.contains(&k) {
            self.traj.snapshots.push(Snapshot {
                step: k,
                t,
                h,
                valid_hi: m,
                w_prev: prev.to_vec(),
                w: curr.to_vec(),
                w_next: next.to_vec(),
            });
        }

        if k % self.spec.ledger_stride == 0 || last {
            let (q0, q1) = conformal_charge_w(&curr[..=m], &self.wt[..=m], h, t, p);
            self.ledger.rows.push(LedgerRow {
                t,
                e_total: e_minus + e_plus,
                e_minus,
                e_plus,
                xi,
                radii: triples,
                q0,
                q1,
            });
        }
    }

    pub fn finish(self) -> (Trajectory, EnergyLedger) {
        (self.traj, self.ledger)
    }
}

/// `pi int (|w_r -/+ w_t|^2 + potential)` over `[r1, r2]` and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channels {
    pub e_minus: f64,
    pub e_plus: f64,
    pub e: f64,
}

pub fn energy_channels(snap: &Snapshot, params: &ModelParams, r1: f64, r2: f64) -> Result<Channels> {
    let h = snap.h;
    if !(r1 >= 0.0 && r2 > r1) {
        return Err(Error::OutOfDomain(format!("radii [{r1}, {r2}]")));
    }
    let a = node_index("r1", r1, h)? as usize;
    let b = node_index("r2", r2, h)? as usize;
    if b > snap.valid_hi {
        return Err(Error::OutOfDomain(format!(
            "r2 = {r2} beyond the valid region r <= {}",
            snap.r(snap.valid_hi)
        )));
    }
    let (wr, wt) = snap.derivatives();
    let mut dm = vec![0.0; b + 1];
    let mut dp = vec![0.0; b + 1];
    for i in a..=b {
        let pot = params.potential(snap.w[i], snap.r(i));
        dm[i] = (wr[i] + wt[i]).powi(2) + pot;
        dp[i] = (wr[i] - wt[i]).powi(2) + pot;
    }
    let e_minus = PI * trapezoid_range(&dm, h, a, b);
    let e_plus = PI * trapezoid_range(&dp, h, a, b);
    Ok(Channels {
        e_minus,
        e_plus,
        e: e_minus + e_plus,
    })
}

/// Origin trace `xi(t) = w(h, t) / h`.
pub fn xi_trace(w: &[f64], h: f64) -> f64 {
    w[1] / h
}

/// Second-order origin trace `(4 w(h) - w(2h)) / (2h)`.
pub fn xi_trace_second_order(w: &[f64], h: f64) -> f64 {
    (4.0 * w[1] - w[2]) / (2.0 * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FluxKind {
    Inward { s: f64 },
    Outward { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxRecord {
    pub kind: FluxKind,
    pub t1: f64,
    pub t2: f64,
    pub value: f64,
}

fn line_flux(line: &CharLine, t1: f64, t2: f64, h: f64, params: &ModelParams) -> Result<f64> {
    let k1 = node_index("t1", t1, h)?;
    let k2 = node_index("t2", t2, h)?;
    let pts: Vec<&CharSample> = line
        .samples
        .iter()
        .filter(|s| {
            let k = (s.t / h).round() as i64;
            k >= k1 && k <= k2
        })
        .collect();
    if pts.len() as i64 != k2 - k1 + 1 {
        return Err(Error::OutOfDomain(format!(
            "characteristic {} not recorded over [{t1}, {t2}]",
            line.label
        )));
    }
    let dens: Vec<f64> = pts.iter().map(|s| params.flux_density(s.w, s.r)).collect();
    Ok(4.0 * PI / (params.p + 1.0) * trapezoid_range(&dens, h, 0, dens.len() - 1))
}

/// `Q_-^-(s; t1, t2)` along the recorded inward characteristic `r + t = s`.
pub fn flux_inward(traj: &Trajectory, s: f64, t1: f64, t2: f64) -> Result<FluxRecord> {
    let h = traj.h();
    node_index("s", s, h)?;
    if !(t1 < t2 && t2 <= s + 1e-9 * h) {
        return Err(Error::OutOfDomain(format!("inward window [{t1}, {t2}] for s = {s}")));
    }
    let value = match traj.inward_lines.iter().find(|l| same_label(l.label, s, h)) {
        Some(line) => line_flux(line, t1, t2, h, &traj.params)?,
        None if t1 == 0.0 && same_label(t2, s, h) => inward_flux_from_zero(traj, s)?,
        None => return Err(Error::OutOfDomain(format!("inward characteristic s = {s} not monitored"))),
    };
    Ok(FluxRecord {
        kind: FluxKind::Inward { s },
        t1,
        t2,
        value,
    })
}

/// `Q_+^+(tau; t1, t2)` along the recorded outward characteristic `t - r = tau`.
pub fn flux_outward(traj: &Trajectory, tau: f64, t1: f64, t2: f64) -> Result<FluxRecord> {
    let h = traj.h();
    node_index("tau", tau, h)?;
    if !(t1 < t2 && tau <= t1 + 1e-9 * h) {
        return Err(Error::OutOfDomain(format!("outward window [{t1}, {t2}] for tau = {tau}")));
    }
    let line = traj
        .outward_lines
        .iter()
        .find(|l| same_label(l.label, tau, h))
        .ok_or_else(|| Error::OutOfDomain(format!("outward characteristic tau = {tau} not monitored")))?;
    Ok(FluxRecord {
        kind: FluxKind::Outward { tau },
        t1,
        t2,
        value: line_flux(line, t1, t2, h, &traj.params)?,
    })
}

/// `Q_-^-(s; 0, s)` from the per-characteristic accumulator.
pub fn inward_flux_from_zero(traj: &Trajectory, s: f64) -> Result<f64> {
    let k = node_index("s", s, traj.h())?;
    if k <= 0 || k as usize >= traj.levels.t.len() || k as usize >= traj.inward_flux_from_zero.len() {
        return Err(Error::OutOfDomain(format!("s = {s} outside (0, {}]", traj.t_max())));
    }
    Ok(traj.inward_flux_from_zero[k as usize])
}

/// Trapezoid integral of a per-level series over `[t1, t2]`.
pub fn time_integral(values: &[f64], h: f64, k1: usize, k2: usize) -> f64 {
    trapezoid_range(values, h, k1, k2)
}

fn xi_squared(traj: &Trajectory) -> Vec<f64> {
    traj.levels.xi.iter().map(|x| x * x).collect()
}

/// Terms of a triangle-law budget; `residual = energy - (xi_part + flux_part + bulk_part)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleBudget {
    pub energy: f64,
    pub xi_part: f64,
    pub flux_part: f64,
    pub bulk_part: f64,
    pub residual: f64,
}

fn bulk_constant(params: &ModelParams) -> f64 {
    2.0 * PI * (params.p - 1.0) / (params.p + 1.0)
}

fn find_probe(traj: &Trajectory, t0: f64, r0: f64) -> Result<&TriangleProbe> {
    let h = traj.h();
    let probe = traj
        .triangles
        .iter()
        .find(|p| same_label(p.t0, t0, h) && same_label(p.r0, r0, h))
        .ok_or_else(|| Error::OutOfDomain(format!("triangle ({t0}, {r0}) not monitored")))?;
    if !probe.inside {
        return Err(Error::OutOfDomain(format!("triangle ({t0}, {r0}) leaves the valid region")));
    }
    Ok(probe)
}

/// Inward triangle law on `Omega_u = {r > 0, t > t0, r + t < r0 + t0}`.
pub fn triangle_residual_minus(traj: &Trajectory, t0: f64, r0: f64) -> Result<TriangleBudget> {
    let probe = find_probe(traj, t0, r0)?;
    let h = traj.h();
    let k0 = traj.level("t0", t0)?;
    let ks = traj.level("t0 + r0", t0 + r0)?;
    let xi_part = PI * time_integral(&xi_squared(traj), h, k0, ks);
    let flux_part = flux_inward(traj, t0 + r0, t0, t0 + r0)?.value;
    let bulk_part = bulk_constant(&traj.params) * probe.bulk_up;
    Ok(TriangleBudget {
        energy: probe.e_minus_t0,
        xi_part,
        flux_part,
        bulk_part,
        residual: probe.e_minus_t0 - (xi_part + flux_part + bulk_part),
    })
}

/// Outward triangle law on `Omega_d = {r > 0, t < t0, t - r > t0 - r0}`; needs `r0 <= t0`.
pub fn triangle_residual_plus(traj: &Trajectory, t0: f64, r0: f64) -> Result<TriangleBudget> {
    if r0 > t0 {
        return Err(Error::OutOfDomain(format!("outward triangle needs r0 <= t0 (got {r0} > {t0})")));
    }
    let probe = find_probe(traj, t0, r0)?;
    let h = traj.h();
    let k0 = traj.level("t0", t0)?;
    let kt = traj.level("t0 - r0", t0 - r0)?;
    let xi_part = PI * time_integral(&xi_squared(traj), h, kt, k0);
    let flux_part = flux_outward(traj, t0 - r0, t0 - r0, t0)?.value;
    let bulk_part = bulk_constant(&traj.params) * probe.bulk_down;
    Ok(TriangleBudget {
        energy: probe.e_plus_t0,
        xi_part,
        flux_part,
        bulk_part,
        residual: probe.e_plus_t0 - (xi_part + flux_part + bulk_part),
    })
}

/// Fraction of `int_{k1}^{k2}` carried by the last tenth of the window.
fn tail_fraction(values: &[f64], h: f64, k1: usize, k2: usize) -> f64 {
    let total = time_integral(values, h, k1, k2);
    if total <= 0.0 {
        return 0.0;
    }
    let kt = k2 - (k2 - k1) / 10;
    time_integral(values, h, kt, k2) / total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiniteTriangle {
    pub energy: f64,
    pub xi_part: f64,
    pub bulk_part: f64,
    pub residual: f64,
    /// Share of `xi_part + bulk_part` coming from the last tenth of `[t, t_max]`.
    pub tail_fraction: f64,
}

/// `E_-(t)` against `pi int_t^T xi^2 + c int_t^T int |w|^(p+1)/r^p` (truncated at `T = t_max`).
pub fn infinite_triangle_residual(traj: &Trajectory, t: f64) -> Result<InfiniteTriangle> {
    let h = traj.h();
    let k = traj.level("t", t)?;
    let last = traj.levels.t.len() - 1;
    if k >= last {
        return Err(Error::OutOfDomain(format!("t = {t} leaves no window before t_max")));
    }
    let c = bulk_constant(&traj.params);
    let xi2 = xi_squared(traj);
    let combined: Vec<f64> = xi2
        .iter()
        .zip(&traj.levels.bulk)
        .map(|(x, b)| PI * x + c * b)
        .collect();
    let xi_part = PI * time_integral(&xi2, h, k, last);
    let bulk_part = c * time_integral(&traj.levels.bulk, h, k, last);
    let fraction = tail_fraction(&combined, h, k, last);
    if fraction > 0.1 {
        return Err(Error::TailNotConverged { fraction });
    }
    let energy = traj.levels.e_minus[k];
    Ok(InfiniteTriangle {
        energy,
        xi_part,
        bulk_part,
        residual: energy - (xi_part + bulk_part),
        tail_fraction: fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorawetzReport {
    /// `pi int_1^T a(t) xi^2 dt`.
    pub xi_weighted: f64,
    /// `2 pi (p-1)/(p+1) int int_{r + t > 1} a(r + t) |w|^(p+1)/r^p`.
    pub bulk_weighted: f64,
    /// Weighted inward energy of the data, `K1`.
    pub k1: f64,
    pub gamma: f64,
    /// `xi_weighted / K1`.
    pub xi_ratio: f64,
    /// `bulk_weighted / ((p-1)/(p-1-2 gamma) K1)`.
    pub bulk_ratio: f64,
    /// Larger of the two ratios.
    pub bound_ratio: f64,
}

/// Sample `a(1) = 1` and `0 <= a'(r) <= gamma a(r) / r` on `[1, 10^6]`.
pub fn validate_weight(a: &dyn Fn(f64) -> f64, gamma: f64, p: f64) -> Result<()> {
    if !(gamma >= 0.0 && p - 1.0 - 2.0 * gamma > 0.0) {
        return Err(Error::WeightInvalid(format!(
            "gamma = {gamma} must lie in [0, (p-1)/2)"
        )));
    }
    if (a(1.0) - 1.0).abs() > 1e-12 {
        return Err(Error::WeightInvalid(format!("a(1) = {} != 1", a(1.0))));
    }
    for j in 0..=600 {
        let r = 10f64.powf(j as f64 / 100.0);
        let e = 1e-6 * r;
        let d = (a(r + e) - a(r - e)) / (2.0 * e);
        let bound = gamma * a(r) / r;
        let slack = 1e-6 * (bound.abs() + a(r).abs() / r);
        if !a(r).is_finite() || d < -slack || d > bound + slack {
            return Err(Error::WeightInvalid(format!(
                "growth condition fails at r = {r}: a' = {d:.6e}, gamma a/r = {bound:.6e}"
            )));
        }
    }
    Ok(())
}

/// Weighted Morawetz integrals for a general weight and their ratios to the bounds.
pub fn weighted_morawetz(traj: &Trajectory, a: &dyn Fn(f64) -> f64, gamma: f64) -> Result<MorawetzReport> {
    let params = &traj.params;
    validate_weight(a, gamma, params.p)?;
    let h = traj.h();
    let last = traj.levels.t.len() - 1;
    let k1_lo = (1.0 / h).round() as usize;
    let weighted_xi: Vec<f64> = traj
        .levels
        .xi
        .iter()
        .enumerate()
        .map(|(k, x)| if k >= k1_lo { a(k as f64 * h) * x * x } else { 0.0 })
        .collect();
    let xi_weighted = if k1_lo < last {
        PI * time_integral(&weighted_xi, h, k1_lo, last)
    } else {
        0.0
    };
    let mut bulk = 0.0;
    for (s, g) in traj.bulk_by_char.iter().enumerate().skip(k1_lo) {
        let wgt = if s == k1_lo { 0.5 } else { 1.0 };
        bulk += wgt * a(s as f64 * h) * g;
    }
    let bulk_weighted = bulk_constant(params) * bulk * h;
    let k1 = weighted_inward_energy(&traj.initial, params, a)?;
    let factor = (params.p - 1.0) / (params.p - 1.0 - 2.0 * gamma);
    let ratio = |v: f64, b: f64| if b > 0.0 { v / b } else if v == 0.0 { 0.0 } else { f64::INFINITY };
    let xi_ratio = ratio(xi_weighted, k1);
    let bulk_ratio = ratio(bulk_weighted, factor * k1);
    Ok(MorawetzReport {
        xi_weighted,
        bulk_weighted,
        k1,
        gamma,
        xi_ratio,
        bulk_ratio,
        bound_ratio: xi_ratio.max(bulk_ratio),
    })
}

/// Weighted Morawetz integrals for `a(r) = r^kappa` (`gamma = kappa`).
pub fn weighted_morawetz_power(traj: &Trajectory) -> Result<MorawetzReport> {
    let kappa = traj.params.kappa;
    weighted_morawetz(traj, &|r: f64| r.powf(kappa), kappa)
}

/// `(int_{t0}^T E_-(t; 0, R) dt, int_{t0}^T E_+(t; 0, R) dt)` for a monitored fixed radius.
pub fn cylinder_integral(traj: &Trajectory, t0: f64, radius: f64) -> Result<(f64, f64)> {
    let h = traj.h();
    let j = traj
        .radii
        .iter()
        .position(|r| matches!(r, MonitorRadius::Fixed(v) if same_label(*v, radius, h)))
        .ok_or_else(|| Error::OutOfDomain(format!("radius {radius} is not a fixed monitor radius")))?;
    let k0 = traj.level("t0", t0)?;
    let last = traj.levels.t.len() - 1;
    if k0 >= last {
        return Err(Error::OutOfDomain(format!("t0 = {t0} leaves no window before t_max")));
    }
    let series = &traj.levels.radius_channels[j];
    let minus: Vec<f64> = series.iter().map(|v| v[1]).collect();
    let plus: Vec<f64> = series.iter().map(|v| v[2]).collect();
    for s in [&minus, &plus] {
        let fraction = tail_fraction(s, h, k0, last);
        if fraction > 0.1 {
            return Err(Error::TailNotConverged { fraction });
        }
    }
    Ok((time_integral(&minus, h, k0, last), time_integral(&plus, h, k0, last)))
}

/// `E_+(t; 0, r)` and its ratio to `K t^(1-kappa) / (t - r)`.
pub fn outward_local_energy_bound(traj: &Trajectory, t: f64, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && r < t) {
        return Err(Error::OutOfDomain(format!("need 0 < r < t (r = {r}, t = {t})")));
    }
    let snap = traj.snapshot_at(t)?;
    let ch = energy_channels(snap, &traj.params, 0.0, r)?;
    let k = crate::model::k_functional(&traj.initial, &traj.params)?.k;
    let bound = k * t.powf(1.0 - traj.params.kappa) / (t - r);
    Ok((ch.e_plus, if bound > 0.0 { ch.e_plus / bound } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRatios {
    /// `max_R |w(R)| / (R^(1/2) E1(R)^(1/2))`.
    pub ratio1: f64,
    /// `max_R |w(R)| / (2 R^((p-1)/(p+3)) E1(R)^(1/(p+3)) E2(R)^(1/(p+3)))`.
    pub ratio2: f64,
}

/// Worst ratios of `|w(R)|` to the two pointwise bounds over nodes `1..=hi`.
///
/// `E1` sums squared cell differences (the energy of the piecewise-linear
/// interpolant), `E2` is the trapezoid rule of `|w|^(p+1)/r^(p-1)`.
pub fn pointwise_bounds(w: &[f64], h: f64, hi: usize, params: &ModelParams) -> PointwiseRatios {
    let p = params.p;
    let e2_exp = 1.0 / (p + 3.0);
    let r_exp = (p - 1.0) / (p + 3.0);
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    let mut g_prev = 0.0;
    let mut out = PointwiseRatios { ratio1: 0.0, ratio2: 0.0 };
    let hi = hi.min(w.len() - 1);
    // both ratios are invariant under w -> lambda w; normalizing delays underflow
    let scale = w[..=hi].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return out;
    }
    let w: Vec<f64> = w[..=hi].iter().map(|v| v / scale).collect();
    for j in 1..=hi {
        let r = j as f64 * h;
        let d = w[j] - w[j - 1];
        e1 += d * d / h;
        let g = params.abs_pow(w[j] / r, 1) * r * r;
        e2 += 0.5 * h * (g_prev + g);
        g_prev = g;
        let a = w[j].abs();
        if a == 0.0 {
            continue;
        }
        // squared sums underflow long before |w| does near a high-order zero
        if e1 > f64::MIN_POSITIVE {
            out.ratio1 = out.ratio1.max(a / (r.sqrt() * e1.sqrt()));
        }
        if e1 > f64::MIN_POSITIVE && e2 > f64::MIN_POSITIVE {
            out.ratio2 = out.ratio2.max(a / (2.0 * r.powf(r_exp) * e1.powf(e2_exp) * e2.powf(e2_exp)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_params;

    fn travelling(f: impl Fn(f64) -> f64, sign: f64, n: usize, h: f64, t: f64) -> Snapshot {
        let lvl = |tt: f64| (0..n).map(|i| f(i as f64 * h + sign * tt)).collect::<Vec<_>>();
        Snapshot {
            step: 0,
            t,
            h,
            valid_hi: n - 2,
            w_prev: lvl(t - h),
            w: lvl(t),
            w_next: lvl(t + h),
        }
    }

    #[test]
    fn inward_wave_has_no_outward_energy() {
        let p = make_params(3.0, 0.5).unwrap().linear_mode();
        let h = 1.0 / 32.0;
        let snap = travelling(|x| x * x - 0.5 * x, 1.0, 129, h, 0.25);
        let ch = energy_channels(&snap, &p, 0.5, 3.5).unwrap();
        assert!(ch.e_plus.abs() < 1e-12 * ch.e_minus);
        // |w_r + w_t|^2 = 4 f'(r + t)^2 integrated exactly up to the trapezoid error
        let exact = PI * 4.0 * {
            let g = |x: f64| (2.0 * x - 0.5).powi(3) / 6.0;
            g(3.75) - g(0.75)
        };
        assert!((ch.e_minus - exact).abs() < 1e-2 * exact);
        let out = travelling(|x| x * x, -1.0, 129, h, 0.25);
        let ch = energy_channels(&out, &p, 0.5, 3.5).unwrap();
        assert!(ch.e_minus.abs() < 1e-12 * ch.e_plus);
    }

    #[test]
    fn channel_radii_are_checked() {
        let p = make_params(3.0, 0.5).unwrap();
        let snap = travelling(|x| x, 1.0, 33, 0.125, 0.0);
        assert!(matches!(energy_channels(&snap, &p, 0.0, 0.3), Err(Error::OffGrid { .. })));
        assert!(matches!(energy_channels(&snap, &p, 0.0, 4.0), Err(Error::OutOfDomain(_))));
        assert!(matches!(energy_channels(&snap, &p, 1.0, 1.0), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn origin_traces() {
        let h = 0.01;
        let w: Vec<f64> = (0..4).map(|i| 3.0 * i as f64 * h + (i as f64 * h).powi(2)).collect();
        assert!((xi_trace(&w, h) - (3.0 + h)).abs() < 1e-12);
        assert!((xi_trace_second_order(&w, h) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pointwise_ratio_of_a_ramp() {
        // w = r: E1(R) = R, so |w| / sqrt(R E1) = 1 at every node
        let p = make_params(3.0, 0.5).unwrap();
        let h = 0.01;
        let w: Vec<f64> = (0..101).map(|i| i as f64 * h).collect();
        let r = pointwise_bounds(&w, h, 100, &p);
        assert!((r.ratio1 - 1.0).abs() < 1e-12);
        assert!(r.ratio2 <= 1.0);
        let zero = pointwise_bounds(&vec![0.0; 10], h, 9, &p);
        assert_eq!((zero.ratio1, zero.ratio2), (0.0, 0.0));
    }

    #[test]
    fn monitor_radius_labels() {
        assert_eq!(MonitorRadius::Fixed(1.0).at(5.0), 1.0);
        assert_eq!(MonitorRadius::Tracker(0.25).at(8.0), 2.0);
        assert_ne!(MonitorRadius::Fixed(1.0).label(), MonitorRadius::Tracker(1.0).label());
    }

    #[test]
    fn weight_validation() {
        assert!(validate_weight(&|r: f64| r.powf(0.6), 0.6, 3.0).is_ok());
        // gamma must stay below (p-1)/2
        assert!(validate_weight(&|r: f64| r.powf(0.6), 1.0, 3.0).is_err());
        // a(1) = 1 is required
        assert!(validate_weight(&|r: f64| 2.0 * r.powf(0.3), 0.3, 3.0).is_err());
        // growth faster than r^gamma
        assert!(validate_weight(&|r: f64| r.powf(0.9), 0.5, 4.0).is_err());
        // decreasing weight
        assert!(validate_weight(&|r: f64| 1.0 / r, 0.5, 4.0).is_err());
    }

    #[test]
    fn trapezoid_time_integral() {
        let v = vec![2.0; 11];
        assert!((time_integral(&v, 0.1, 0, 10) - 2.0).abs() < 1e-14);
        assert_eq!(time_integral(&v, 0.1, 3, 3), 0.0);
    }
}
