//! `fit`: power-law fit of one CSV column against another.

use std::path::Path;

use nlw_core::scattering::{fit_power_law_min, FitResult};

use crate::config::parse_number;
use crate::run::{io_failure, Failure};

/// `lo:hi` window, either side may be empty.
pub fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("window `{s}` is not `lo:hi`"))?;
    let side = |v: &str, default: f64| {
        if v.trim().is_empty() {
            Ok(default)
        } else {
            parse_number(v).ok_or_else(|| format!("`{v}` is not a number"))
        }
    };
    Ok((side(a, f64::NEG_INFINITY)?, side(b, f64::INFINITY)?))
}

pub fn fit_csv(path: &Path, x: &str, column: &str, window: Option<(f64, f64)>) -> Result<FitResult, Failure> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_failure(path, e))?;
    let headers = rdr.headers().map_err(|e| io_failure(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Failure::Config(format!("{}: no column `{name}`", path.display())))
    };
    let (ix, iy) = (find(x)?, find(column)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_failure(path, e))?;
        let (Some(a), Some(b)) = (rec.get(ix).and_then(parse_number), rec.get(iy).and_then(parse_number)) else {
            continue;
        };
        // the power law is only defined on positive samples
        if a > 0.0 && b > 0.0 {
            xs.push(a);
            ys.push(b);
        }
    }
    fit_power_law_min(&xs, &ys, window, 2).map_err(|e| Failure::Numerical(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows() {
        assert_eq!(parse_window("1:8").unwrap(), (1.0, 8.0));
        assert_eq!(parse_window(":1/2").unwrap(), (f64::NEG_INFINITY, 0.5));
        assert!(parse_window("3").is_err());
    }
}
