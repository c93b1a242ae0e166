//! `run` and `appendix`: evolve, check, and write the output directory.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use nlw_core::appendix::{bisect_threshold, run_appendix_example_with, AppendixReport, BisectionResult};
use nlw_core::diagnostics::{weighted_morawetz_power, EnergyLedger, Trajectory};
use nlw_core::plot::{Plot, Series};
use nlw_core::scattering::{fit_power_law, FitResult};
use nlw_core::solver::{evolve, Boundary};
use nlw_core::Error;

use crate::checks::{ledger_checks, trajectory_checks, triangle_residuals, LedgerColumns, Verdict};
use crate::config::RunConfig;

pub const SUMMARY_SCHEMA: &str = "nlw-summary/1";

/// Why a command stopped before producing verdicts.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OutOfRange { .. }
            | Error::OffGrid { .. }
            | Error::InvalidGrid(_)
            | Error::OutOfDomain(_)
            | Error::WeightInvalid(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

pub fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Value,
    pub verdicts: Vec<Verdict>,
    /// Extra lines for the console report.
    pub notes: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| !v.failed())
    }
}

/// Power-law fit of `E_minus` over the last three quarters of the run.
pub fn e_minus_decay(cols: &LedgerColumns) -> Option<FitResult> {
    let t_max = cols.t.last().copied()?;
    let (t, y): (Vec<f64>, Vec<f64>) = cols
        .t
        .iter()
        .zip(&cols.e_minus)
        .filter(|(t, e)| **t >= t_max / 4.0 && **e > 0.0)
        .map(|(t, e)| (*t, *e))
        .unzip();
    fit_power_law(&t, &y, None).ok()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn energy_plot(cols: &LedgerColumns) -> Plot {
    let series = |label: &str, v: &[f64]| Series::new(label, cols.t.iter().copied().zip(v.iter().copied()).collect());
    Plot::new("Energy channels", "t", "energy")
        .with(series("E_total", &cols.e_total))
        .with(series("E_minus", &cols.e_minus))
        .with(series("E_plus", &cols.e_plus))
}

fn e_minus_plot(cols: &LedgerColumns) -> Plot {
    let pts = cols.t.iter().copied().zip(cols.e_minus.iter().copied()).collect();
    Plot::new("Inward energy decay", "t", "E_minus")
        .log_log()
        .with(Series::new("E_minus", pts))
}

/// Write the trajectory with the envelope traces dropped (they carry NaN padding).
fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), Failure> {
    let mut stored = traj.clone();
    stored.envelope = None;
    let text = serde_json::to_string(&stored).map_err(|e| Failure::Numerical(e.to_string()))?;
    write(dir, "trajectory.json", &text)
}

fn energy_section(cols: &LedgerColumns, ledger: &EnergyLedger) -> Value {
    let (m_minus, m_plus) = cols.margins();
    json!({
        "initial": cols.e_total.first().copied().unwrap_or(0.0),
        "final": cols.e_total.last().copied().unwrap_or(0.0),
        "drift": cols.drift(),
        "additivity_error": cols.additivity_error(),
        "margin_e_minus": m_minus,
        "margin_e_plus": m_plus,
        "conformal_increase": ledger.conformal_increase(),
    })
}

fn finish_summary(cfg: &RunConfig, mut body: serde_json::Map<String, Value>, verdicts: &[Verdict], started: Instant) -> Value {
    body.insert("schema".into(), json!(SUMMARY_SCHEMA));
    body.insert("config".into(), to_value(&cfg.flat.echo()));
    body.insert("params".into(), to_value(&cfg.params));
    body.insert("grid".into(), to_value(&cfg.grid));
    body.insert("checks".into(), to_value(&verdicts));
    body.insert("passed".into(), json!(verdicts.iter().all(|v| !v.failed())));
    body.insert("timing".into(), json!({ "elapsed_seconds": started.elapsed().as_secs_f64() }));
    Value::Object(body)
}

/// Evolve the configured data, evaluate the enabled checks and write the outputs.
pub fn execute(cfg: &RunConfig, log: &dyn Fn(&str)) -> Result<RunOutcome, Failure> {
    if cfg.appendix.is_some() {
        return execute_appendix(cfg, log);
    }
    let started = Instant::now();
    let mut spec = cfg.monitors.clone();
    for &(t0, r0) in &cfg.monitors.triangles {
        spec.inward_lines.push(t0 + r0);
        if r0 <= t0 {
            spec.outward_lines.push(t0 - r0);
        }
    }
    for lines in [&mut spec.inward_lines, &mut spec.outward_lines] {
        lines.sort_by(f64::total_cmp);
        lines.dedup();
    }
    let leak = if cfg.grid.boundary == Boundary::Cone { None } else { Some(1e-10) };
    let pair = cfg.initial.radial_pair(cfg.grid.n_r, cfg.grid.h, &cfg.params, leak)?;
    log(&format!("evolving {} steps on {} nodes", cfg.grid.steps(), cfg.grid.n_r));
    let (traj, ledger) = evolve(&pair, &cfg.params, &cfg.grid, &spec)?;

    let cols = LedgerColumns::from(&ledger);
    let scale = cols.scale();
    let mut verdicts = ledger_checks(&cols, &cfg.checks, &cfg.tolerances);
    verdicts.extend(trajectory_checks(&traj, scale, &cfg.checks, &cfg.tolerances));
    verdicts.sort_by(|a, b| a.name.cmp(&b.name));

    let mut body = serde_json::Map::new();
    body.insert("energy".into(), energy_section(&cols, &ledger));
    let triangles: Vec<Value> = triangle_residuals(&traj, scale)
        .unwrap_or_default()
        .into_iter()
        .map(|(t0, r0, minus, plus)| json!({ "t0": t0, "r0": r0, "inward": minus, "outward": plus }))
        .collect();
    body.insert("triangles".into(), Value::Array(triangles));
    body.insert(
        "morawetz".into(),
        match weighted_morawetz_power(&traj) {
            Ok(m) => to_value(&m),
            Err(e) => json!({ "error": e.to_string() }),
        },
    );
    let fit = e_minus_decay(&cols);
    body.insert("fits".into(), json!({ "e_minus_decay": to_value(&fit) }));
    let summary = finish_summary(cfg, body, &verdicts, started);

    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_failure(&cfg.out_dir, e))?;
    write(&cfg.out_dir, "ledger.csv", &ledger.to_csv())?;
    write(&cfg.out_dir, "summary.json", &render_summary(&summary))?;
    if cfg.trajectory {
        write_trajectory(&cfg.out_dir, &traj)?;
    }
    if cfg.svg {
        write(&cfg.out_dir, "energy.svg", &energy_plot(&cols).to_svg())?;
        write(&cfg.out_dir, "e_minus.svg", &e_minus_plot(&cols).to_svg())?;
    }
    let mut notes = vec![format!("E(0) = {:.6e}, drift = {:.3e}", cols.e_total.first().copied().unwrap_or(0.0), cols.drift())];
    if let Some(f) = fit {
        notes.push(format!("E_minus ~ t^{:.4} (r^2 {:.4})", f.exponent, f.r_squared));
    }
    Ok(RunOutcome { summary, verdicts, notes })
}

pub fn render_summary(summary: &Value) -> String {
    let mut s = serde_json::to_string_pretty(summary).unwrap_or_default();
    s.push('\n');
    s
}

fn appendix_plots(report: &AppendixReport) -> Vec<(&'static str, Plot)> {
    let zip = |a: &[f64], b: &[f64]| a.iter().copied().zip(b.iter().copied()).collect::<Vec<_>>();
    let mut lp = Plot::new("L^p L^2p tail norm", "t0", "norm^p")
        .log_log()
        .with(Series::new("truncated", zip(&report.lp_tail.t0, &report.lp_tail.values)));
    if let Some(c) = &report.lp_tail.completed {
        lp = lp.with(Series::new("with extrapolated tail", zip(&report.lp_tail.t0, c)));
    }
    let fit = report.exterior.fit;
    let model: Vec<(f64, f64)> = report.exterior.t.iter().map(|t| (*t, fit.a + fit.b * (1.0 + t).ln())).collect();
    let exterior = Plot::new("Exterior L^2(p-1) norm", "T", "integral")
        .with(Series::new("measured", zip(&report.exterior.t, &report.exterior.values)))
        .with(Series::new("a + b log(1+T)", model));
    let decay = Plot::new("E_minus t^kappa / K", "t", "ratio")
        .log_log()
        .with(Series::new("samples", report.decay.samples.clone()));
    let defect = Plot::new("Free-wave defect(t, 2t)", "t", "defect")
        .log_log()
        .with(Series::new("defect", zip(&report.defect.t, &report.defect.values)));
    vec![
        ("lp_tail.svg", lp),
        ("exterior.svg", exterior),
        ("decay.svg", decay),
        ("defect.svg", defect),
    ]
}

fn execute_appendix(cfg: &RunConfig, log: &dyn Fn(&str)) -> Result<RunOutcome, Failure> {
    let started = Instant::now();
    let opts = cfg.appendix.as_ref().expect("appendix options");
    let mut bisection: Option<BisectionResult> = None;
    let c = match opts.c {
        Some(c) => c,
        None => {
            log(&format!(
                "bisecting the smallness threshold in [{}, {}] ({} iterations)",
                opts.bisect_lo, opts.bisect_hi, opts.iterations
            ));
            let b = bisect_threshold(&cfg.params, &cfg.grid, opts.bisect_lo, opts.bisect_hi, opts.iterations)?;
            let c = 0.5 * b.threshold;
            log(&format!("threshold {:.4} (found: {}), running at c = {c:.4}", b.threshold, b.found));
            bisection = Some(b);
            c
        }
    };
    let (report, traj, ledger) = run_appendix_example_with(c, opts.blend, &cfg.params, &cfg.grid)?;
    let cols = LedgerColumns::from(&ledger);

    let mut verdicts: Vec<Verdict> = report
        .items()
        .iter()
        .map(|(name, ok)| Verdict::flag(name, *ok, ""))
        .collect();
    verdicts[0].detail = format!("K = {:.6e}", report.k.k);
    verdicts[1] = Verdict::at_most(
        "E_minus t^kappa bounded",
        report.decay.c_obs,
        report.decay.bound,
        format!("max at t = {}", report.decay.at),
    );
    verdicts[2] = Verdict::at_most(
        "envelope",
        report.envelope.max_ratio,
        1.0,
        format!("max |w| / (3 c r^beta), lower profile {:.4}", report.envelope.min_profile),
    );
    verdicts[2].status = if report.envelope.holds {
        crate::checks::Status::Pass
    } else {
        crate::checks::Status::Fail
    };
    verdicts[3].detail = match report.lp_tail.fit {
        Some(f) => format!(
            "fitted exponent {:.4}, predicted rate {:.4}",
            f.exponent, report.lp_tail.target
        ),
        None => "no fit".into(),
    };
    verdicts[4].detail = format!(
        "b = {:.4e}, r^2 = {:.5}",
        report.exterior.fit.b, report.exterior.fit.r_squared
    );

    let mut body = serde_json::Map::new();
    body.insert("energy".into(), energy_section(&cols, &ledger));
    body.insert("appendix".into(), to_value(&report));
    body.insert("bisection".into(), to_value(&bisection));
    let summary = finish_summary(cfg, body, &verdicts, started);

    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_failure(&cfg.out_dir, e))?;
    write(&cfg.out_dir, "ledger.csv", &ledger.to_csv())?;
    write(&cfg.out_dir, "summary.json", &render_summary(&summary))?;
    if cfg.trajectory {
        write_trajectory(&cfg.out_dir, &traj)?;
    }
    if cfg.svg {
        write(&cfg.out_dir, "energy.svg", &energy_plot(&cols).to_svg())?;
        if let Some(env) = &traj.envelope {
            let mut plot = Plot::new("Envelope profile w / (c r^beta)", "t", "ratio");
            for (j, offset) in [0, 2, 4].into_iter().enumerate() {
                let pts = env.traces.iter().map(|(t, tr)| (*t, tr[j])).collect();
                plot = plot.with(Series::new(format!("r = 1 + t + {offset}"), pts));
            }
            write(&cfg.out_dir, "envelope.svg", &plot.to_svg())?;
        }
        for (name, plot) in appendix_plots(&report) {
            write(&cfg.out_dir, name, &plot.to_svg())?;
        }
    }
    let mut notes = vec![format!("c = {c:.4}, K = {:.4e}", report.k.k)];
    if let Some(f) = report.lp_tail.fit {
        notes.push(format!(
            "tail-norm exponent {:.4} vs predicted {:.4} (within 30%: {})",
            f.exponent, report.lp_tail.target, report.lp_tail.rate_matches
        ));
    }
    if let Some(f) = report.defect.fit {
        notes.push(format!(
            "free-wave defect exponent {:.4} (decreasing: {})",
            f.exponent, report.defect.decreasing
        ));
    }
    Ok(RunOutcome { summary, verdicts, notes })
}
