//! `verify`: re-run identity checks from a finished run's outputs.

use std::fs;
use std::path::Path;

use nlw_core::diagnostics::Trajectory;

use crate::checks::{ledger_checks, trajectory_checks, triangle_residuals, LedgerColumns, Verdict};
use crate::config::{CheckName, Tolerances};
use crate::run::{io_failure, Failure};

/// Read the `t, E_total, E_minus, E_plus` columns of `ledger.csv`.
pub fn read_ledger(path: &Path) -> Result<LedgerColumns, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_failure(path, e))?;
    let headers = rdr.headers().map_err(|e| io_failure(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Config(format!("{}: missing column `{name}`", path.display())))
    };
    let idx = [col("t")?, col("E_total")?, col("E_minus")?, col("E_plus")?];
    let mut cols = LedgerColumns::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_failure(path, e))?;
        let mut v = [0.0; 4];
        for (slot, &j) in v.iter_mut().zip(&idx) {
            *slot = rec
                .get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Failure::Config(format!("{}: row {} is not numeric", path.display(), row + 2)))?;
        }
        cols.t.push(v[0]);
        cols.e_total.push(v[1]);
        cols.e_minus.push(v[2]);
        cols.e_plus.push(v[3]);
    }
    Ok(cols)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_failure(path, e))
}

fn needs_trajectory(checks: &[CheckName]) -> bool {
    checks
        .iter()
        .any(|c| matches!(c, CheckName::Triangles | CheckName::Pointwise | CheckName::Morawetz | CheckName::Flux))
}

/// Verdicts for one run directory.
pub fn verify_dir(dir: &Path, checks: &[CheckName], tol: &Tolerances) -> Result<Vec<Verdict>, Failure> {
    let cols = read_ledger(&dir.join("ledger.csv"))?;
    let mut out = ledger_checks(&cols, checks, tol);
    if needs_trajectory(checks) {
        let traj = read_trajectory(&dir.join("trajectory.json"))?;
        out.extend(trajectory_checks(&traj, cols.scale(), checks, tol));
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Ratio of coarse to fine triangle residuals over the probes both runs share.
pub fn refinement(coarse: &Path, fine: &Path) -> Result<Verdict, Failure> {
    let load = |dir: &Path| -> Result<_, Failure> {
        let cols = read_ledger(&dir.join("ledger.csv"))?;
        let traj = read_trajectory(&dir.join("trajectory.json"))?;
        let h = traj.h();
        Ok((triangle_residuals(&traj, cols.scale())?, h))
    };
    let (a, ha) = load(coarse)?;
    let (b, hb) = load(fine)?;
    if !(hb < ha) {
        return Err(Failure::Config(format!(
            "refinement needs the second directory on the finer grid (h = {ha} then {hb})"
        )));
    }
    let mut ratios = Vec::new();
    for (t0, r0, m, _) in &a {
        if let Some((_, _, mf, _)) = b.iter().find(|(t, r, _, _)| t == t0 && r == r0) {
            if *mf > 0.0 {
                ratios.push(m / mf);
            }
        }
    }
    if ratios.is_empty() {
        return Ok(Verdict::skipped("refinement", "no shared triangle probes with a nonzero residual"));
    }
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let order = worst.log2() / (ha / hb).log2();
    Ok(Verdict::at_least(
        "refinement",
        worst,
        3.0,
        format!("{} probes, smallest residual ratio (observed order {order:.2})", ratios.len()),
    ))
}
