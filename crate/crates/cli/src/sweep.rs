//! `sweep`: independent runs over one config axis, aggregated into `sweep.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{parse_number, FlatConfig, RunConfig};
use crate::run::{execute, io_failure, Failure};

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    /// Values as config text, in sweep order.
    pub values: Vec<String>,
}

/// `key = lo:hi:step` (inclusive) or `key = v1, v2, ...`.
pub fn parse_axis(spec: &str) -> Result<Axis, String> {
    let (key, rhs) = spec
        .split_once('=')
        .ok_or_else(|| format!("axis `{spec}` is not `key = values`"))?;
    let key = key.trim().to_string();
    let rhs = rhs.trim();
    let values: Vec<String> = if rhs.contains(':') {
        let parts: Vec<f64> = rhs
            .split(':')
            .map(|s| parse_number(s).ok_or_else(|| format!("`{s}` is not a number")))
            .collect::<Result<_, _>>()?;
        let [lo, hi, step] = parts[..] else {
            return Err(format!("range `{rhs}` is not `lo:hi:step`"));
        };
        if !(step > 0.0) || hi < lo {
            return Err(format!("range `{rhs}` is empty"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                // round away the accumulated binary noise of lo + i * step
                let v = lo + i as f64 * step;
                format!("{}", (v * 1e12).round() / 1e12)
            })
            .collect()
    } else {
        rhs.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    if key.is_empty() || values.is_empty() {
        return Err(format!("axis `{spec}` has no key or no values"));
    }
    Ok(Axis { key, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    pub value: String,
    pub dir: PathBuf,
    /// 0 pass, 1 check failure, 2 config error, 3 numerical error.
    pub code: i32,
    pub drift: Option<f64>,
    pub e_minus_exponent: Option<f64>,
    pub detail: String,
}

fn run_job(template: &FlatConfig, base: Option<&Path>, key: &str, value: &str, dir: PathBuf) -> JobResult {
    let mut flat = template.clone();
    flat.set(key, value);
    flat.set("output.dir", &dir.to_string_lossy());
    let mut job = JobResult {
        value: value.to_string(),
        dir,
        code: 0,
        drift: None,
        e_minus_exponent: None,
        detail: String::new(),
    };
    let cfg = match RunConfig::from_flat(flat, base) {
        Ok(c) => c,
        Err(e) => {
            job.code = 2;
            job.detail = e.to_string();
            return job;
        }
    };
    match execute(&cfg, &|_| {}) {
        Ok(out) => {
            job.drift = out.summary["energy"]["drift"].as_f64();
            job.e_minus_exponent = out.summary["fits"]["e_minus_decay"]["exponent"].as_f64();
            let failed: Vec<&str> = out.verdicts.iter().filter(|v| v.failed()).map(|v| v.name.as_str()).collect();
            if !failed.is_empty() {
                job.code = 1;
                job.detail = format!("failed: {}", failed.join(" "));
            }
        }
        Err(f) => {
            job.code = f.exit_code();
            job.detail = f.message().to_string();
        }
    }
    job
}

/// Observed convergence order of the drift between consecutive grid spacings.
pub fn drift_orders(axis: &Axis, jobs: &[JobResult]) -> Vec<Option<f64>> {
    let mut out = vec![None; jobs.len()];
    if axis.key != "grid.h" {
        return out;
    }
    for i in 1..jobs.len() {
        let (Some(h0), Some(h1)) = (parse_number(&jobs[i - 1].value), parse_number(&jobs[i].value)) else {
            continue;
        };
        if let (Some(d0), Some(d1)) = (jobs[i - 1].drift, jobs[i].drift) {
            if d0 > 0.0 && d1 > 0.0 && h0 != h1 {
                out[i] = Some((d0 / d1).ln() / (h0 / h1).ln());
            }
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var("NLW_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Run every job of the axis in parallel and write `sweep.csv` into `out`.
pub fn sweep(
    template: &FlatConfig,
    base: Option<&Path>,
    axis: &Axis,
    out: &Path,
    threads: Option<usize>,
) -> Result<Vec<JobResult>, Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Config(e.to_string()))?;
    let jobs: Vec<JobResult> = pool.install(|| {
        axis.values
            .par_iter()
            .enumerate()
            .map(|(i, v)| run_job(template, base, &axis.key, v, out.join(format!("job_{i:03}"))))
            .collect()
    });
    let orders = drift_orders(axis, &jobs);

    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_failure(&path, e))?;
    let header = ["job", axis.key.as_str(), "exit_code", "drift", "order", "e_minus_exponent", "detail"];
    w.write_record(header).map_err(|e| io_failure(&path, e))?;
    for (i, (job, order)) in jobs.iter().zip(&orders).enumerate() {
        w.write_record([
            format!("job_{i:03}"),
            job.value.clone(),
            job.code.to_string(),
            cell(job.drift),
            cell(*order),
            cell(job.e_minus_exponent),
            job.detail.clone(),
        ])
        .map_err(|e| io_failure(&path, e))?;
    }
    w.flush().map_err(|e| io_failure(&path, e))?;
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_forms() {
        let a = parse_axis("params.kappa = 0.3:0.9:0.1").unwrap();
        assert_eq!(a.key, "params.kappa");
        assert_eq!(a.values, ["0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]);
        let b = parse_axis("grid.h = 1/64,1/128, 1/256").unwrap();
        assert_eq!(b.values, ["1/64", "1/128", "1/256"]);
        assert!(parse_axis("grid.h").is_err());
        assert!(parse_axis("x = 1:0:1").is_err());
        assert!(parse_axis("x = 1:2").is_err());
    }

    #[test]
    fn orders_from_quadratic_drift() {
        let axis = parse_axis("grid.h = 1/8, 1/16").unwrap();
        let job = |v: &str, d: f64| JobResult {
            value: v.into(),
            dir: PathBuf::new(),
            code: 0,
            drift: Some(d),
            e_minus_exponent: None,
            detail: String::new(),
        };
        let o = drift_orders(&axis, &[job("1/8", 4e-4), job("1/16", 1e-4)]);
        assert!(o[0].is_none());
        assert!((o[1].unwrap() - 2.0).abs() < 1e-12);
    }
}
