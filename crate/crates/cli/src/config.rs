//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted paths
//! (`params.p = 3.0`). Numbers accept fractions (`1/128`), lists are
//! comma-separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nlw_core::diagnostics::{MonitorRadius, MonitorSpec};
use nlw_core::model::{Direction, InitialData, ModelParams};
use nlw_core::solver::{Boundary, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(k), None) => write!(f, "key `{k}`: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn key_error(key: &str, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: Some(key.to_string()),
        line,
        message: message.into(),
    }
}

/// Raw assignments in file order of first appearance, with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError {
                    key: None,
                    line: Some(line),
                    message: format!("expected `key = value`, found `{body}`"),
                });
            };
            let key = k.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(ConfigError {
                    key: None,
                    line: Some(line),
                    message: format!("invalid key `{key}`"),
                });
            }
            if entries.insert(key.to_string(), (v.trim().to_string(), line)).is_some() {
                return Err(key_error(key, Some(line), "assigned twice"));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Key/value pairs for echoing into summaries.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }
}

/// Typed access that remembers which keys were consumed.
struct Reader<'a> {
    flat: &'a FlatConfig,
    used: Vec<&'static str>,
}

pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (b != 0.0).then(|| a / b);
    }
    s.parse().ok()
}

impl<'a> Reader<'a> {
    fn raw(&mut self, key: &'static str) -> Option<(&'a str, usize)> {
        self.used.push(key);
        self.flat.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.flat.entries.get(key).map(|(_, l)| *l).filter(|l| *l > 0)
    }

    fn number(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => parse_number(v)
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| key_error(key, Some(l).filter(|l| *l > 0), format!("`{v}` is not a number"))),
        }
    }

    fn required(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or_else(|| key_error(key, None, "required"))
    }

    fn count(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .map(Some)
                .ok_or_else(|| key_error(key, Some(l).filter(|l| *l > 0), format!("`{v}` is not a positive integer"))),
        }
    }

    fn flag(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(("true" | "yes" | "on" | "1", _)) => Ok(true),
            Some(("false" | "no" | "off" | "0", _)) => Ok(false),
            Some((v, l)) => Err(key_error(key, Some(l).filter(|l| *l > 0), format!("`{v}` is not a boolean"))),
        }
    }

    fn text(&mut self, key: &'static str) -> Option<&'a str> {
        self.raw(key).map(|(v, _)| v)
    }

    fn list(&mut self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        let Some((v, l)) = self.raw(key) else { return Ok(Vec::new()) };
        split_list(v)
            .map(|item| {
                parse_number(item)
                    .ok_or_else(|| key_error(key, Some(l).filter(|l| *l > 0), format!("`{item}` is not a number")))
            })
            .collect()
    }

    fn pairs(&mut self, key: &'static str) -> Result<Vec<(f64, f64)>, ConfigError> {
        let Some((v, l)) = self.raw(key) else { return Ok(Vec::new()) };
        split_list(v)
            .map(|item| {
                let bad = || key_error(key, Some(l).filter(|l| *l > 0), format!("`{item}` is not an `a:b` pair"));
                let (a, b) = item.split_once(':').ok_or_else(bad)?;
                Ok((parse_number(a).ok_or_else(bad)?, parse_number(b).ok_or_else(bad)?))
            })
            .collect()
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckName {
    Drift,
    Additivity,
    Monotonicity,
    Triangles,
    Morawetz,
    Pointwise,
    Flux,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::Drift,
        CheckName::Additivity,
        CheckName::Monotonicity,
        CheckName::Triangles,
        CheckName::Morawetz,
        CheckName::Pointwise,
        CheckName::Flux,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Drift => "drift",
            CheckName::Additivity => "additivity",
            CheckName::Monotonicity => "monotonicity",
            CheckName::Triangles => "triangles",
            CheckName::Morawetz => "morawetz",
            CheckName::Pointwise => "pointwise",
            CheckName::Flux => "flux",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s.trim())
    }
}

pub fn parse_checks(list: &str) -> Result<Vec<CheckName>, String> {
    let mut out: Vec<CheckName> = split_list(list)
        .map(|s| CheckName::parse(s).ok_or_else(|| format!("unknown check `{s}`")))
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub drift: f64,
    pub additivity: f64,
    pub monotone: f64,
    pub triangle: f64,
    pub pointwise: f64,
    pub flux: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            drift: 1e-4,
            additivity: 1e-12,
            monotone: 1e-6,
            triangle: 1e-2,
            pointwise: 1e-6,
            flux: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixOptions {
    /// Fixed `c`; when absent the run bisects for the threshold and uses half of it.
    pub c: Option<f64>,
    pub blend: f64,
    pub bisect_lo: f64,
    pub bisect_hi: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub flat: FlatConfig,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub initial: InitialData,
    pub monitors: MonitorSpec,
    pub checks: Vec<CheckName>,
    pub tolerances: Tolerances,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub trajectory: bool,
    pub appendix: Option<AppendixOptions>,
}

fn family_keys(family: &str) -> &'static [&'static str] {
    match family {
        "appendix" => &["initial.c", "initial.blend"],
        "gaussian" => &["initial.amplitude", "initial.center", "initial.width"],
        "pulse" => &["initial.amplitude", "initial.center", "initial.width", "initial.direction"],
        "tabulated" => &["initial.file"],
        _ => &[],
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: None,
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let flat = FlatConfig::parse(&text)?;
        Self::from_flat(flat, path.parent())
    }

    /// Build from parsed assignments; relative data files resolve against `base`.
    pub fn from_flat(flat: FlatConfig, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut rd = Reader { flat: &flat, used: Vec::new() };

        let p = rd.required("params.p")?;
        let kappa = rd.number("params.kappa")?;
        let linear = rd.flag("params.linear", false)?;
        let mut params =
            ModelParams::new(p, 0.5).map_err(|e| key_error("params.p", rd.line("params.p"), e.to_string()))?;
        let kappa = kappa.unwrap_or(0.5 * (params.kappa0 + 1.0));
        params = params
            .with_kappa(kappa)
            .map_err(|e| key_error("params.kappa", rd.line("params.kappa"), e.to_string()))?;
        if linear {
            params = params.linear_mode();
        }

        let family = rd.text("initial.family").unwrap_or("zero").to_string();
        let allowed = family_keys(&family);
        let num = |rd: &mut Reader, key: &'static str, default: f64| -> Result<f64, ConfigError> {
            Ok(rd.number(key)?.unwrap_or(default))
        };
        let mut appendix = None;
        let initial = match family.as_str() {
            "zero" => InitialData::GaussianBump {
                amplitude: 0.0,
                center: 0.0,
                width: 1.0,
            },
            "gaussian" => InitialData::GaussianBump {
                amplitude: num(&mut rd, "initial.amplitude", 1.0)?,
                center: num(&mut rd, "initial.center", 0.0)?,
                width: num(&mut rd, "initial.width", 1.0)?,
            },
            "pulse" => {
                let direction = match rd.text("initial.direction").unwrap_or("inward") {
                    "inward" => Direction::Inward,
                    "outward" => Direction::Outward,
                    other => {
                        return Err(key_error(
                            "initial.direction",
                            rd.line("initial.direction"),
                            format!("`{other}` is neither `inward` nor `outward`"),
                        ))
                    }
                };
                InitialData::DirectedPulse {
                    amplitude: num(&mut rd, "initial.amplitude", 1.0)?,
                    center: num(&mut rd, "initial.center", 3.0)?,
                    width: num(&mut rd, "initial.width", 1.0)?,
                    direction,
                }
            }
            "appendix" => {
                let c = rd.number("initial.c")?;
                let blend = num(&mut rd, "initial.blend", 0.5)?;
                appendix = Some(AppendixOptions {
                    c,
                    blend,
                    bisect_lo: num(&mut rd, "appendix.bisect_lo", 0.05)?,
                    bisect_hi: num(&mut rd, "appendix.bisect_hi", 2.0)?,
                    iterations: rd.count("appendix.iterations")?.unwrap_or(6),
                });
                InitialData::AppendixPowerLaw {
                    c: c.unwrap_or(0.0),
                    blend,
                }
            }
            "tabulated" => {
                let file = rd
                    .text("initial.file")
                    .ok_or_else(|| key_error("initial.file", None, "required for tabulated data"))?;
                let path = base.map(|b| b.join(file)).unwrap_or_else(|| PathBuf::from(file));
                let (u0, u1) = read_table(&path).map_err(|m| key_error("initial.file", rd.line("initial.file"), m))?;
                InitialData::Tabulated { u0, u1 }
            }
            other => {
                return Err(key_error(
                    "initial.family",
                    rd.line("initial.family"),
                    format!("unknown family `{other}` (zero, gaussian, pulse, appendix, tabulated)"),
                ))
            }
        };
        for key in ["initial.c", "initial.blend", "initial.amplitude", "initial.center", "initial.width", "initial.direction", "initial.file"] {
            if flat.get(key).is_some() && !allowed.contains(&key) {
                return Err(key_error(key, rd.line(key), format!("not used by family `{family}`")));
            }
        }
        if family != "appendix" {
            for key in ["appendix.bisect_lo", "appendix.bisect_hi", "appendix.iterations"] {
                if flat.get(key).is_some() {
                    return Err(key_error(key, rd.line(key), "only used by the appendix family"));
                }
            }
        }

        let h = rd.required("grid.h")?;
        let t_max = rd.required("grid.t_max")?;
        let boundary = match rd.text("grid.boundary") {
            None => {
                if family == "appendix" {
                    Boundary::Cone
                } else {
                    Boundary::CausalPad
                }
            }
            Some("causal_pad") => Boundary::CausalPad,
            Some("outgoing") => Boundary::Outgoing,
            Some("cone") => Boundary::Cone,
            Some(other) => {
                return Err(key_error(
                    "grid.boundary",
                    rd.line("grid.boundary"),
                    format!("`{other}` is not one of causal_pad, outgoing, cone"),
                ))
            }
        };
        let r_max = rd.number("grid.r_max")?;
        let grid_err = |e: nlw_core::Error| key_error("grid.h", None, e.to_string());
        let grid = match (boundary, r_max) {
            (_, Some(r)) => GridSpec::new(h, r, t_max, boundary).map_err(grid_err)?,
            (Boundary::Cone, None) => GridSpec::new(h, 2.0 * t_max + 4.0, t_max, boundary).map_err(grid_err)?,
            (Boundary::CausalPad, None) => {
                let support = match &initial {
                    InitialData::Tabulated { .. } => None,
                    d => d.support_radius(),
                }
                .ok_or_else(|| key_error("grid.r_max", None, "required for this data family"))?;
                GridSpec::causal(h, support, t_max).map_err(grid_err)?
            }
            (Boundary::Outgoing, None) => return Err(key_error("grid.r_max", None, "required for the outgoing boundary")),
        };
        if let InitialData::Tabulated { u0, .. } = &initial {
            if u0.len() != grid.n_r {
                return Err(key_error(
                    "initial.file",
                    rd.line("initial.file"),
                    format!("{} rows for a grid of {} nodes", u0.len(), grid.n_r),
                ));
            }
        }

        let mut monitors = MonitorSpec::default();
        if let Some((v, l)) = rd.raw("monitors.radii") {
            monitors.radii = split_list(v)
                .map(|item| {
                    let bad = || key_error("monitors.radii", Some(l).filter(|l| *l > 0), format!("`{item}` is neither `R` nor `ft`"));
                    match item.strip_suffix('t') {
                        Some(f) => parse_number(f).map(MonitorRadius::Tracker).ok_or_else(bad),
                        None => parse_number(item).map(MonitorRadius::Fixed).ok_or_else(bad),
                    }
                })
                .collect::<Result<_, _>>()?;
        }
        if let Some(s) = rd.count("monitors.ledger_stride")? {
            monitors.ledger_stride = s;
        }
        monitors.snapshot_stride = rd.count("monitors.snapshot_stride")?;
        monitors.snapshot_times = rd.list("monitors.snapshot_times")?;
        monitors.inward_lines = rd.list("monitors.inward")?;
        monitors.outward_lines = rd.list("monitors.outward")?;
        monitors.triangles = rd.pairs("monitors.triangles")?;
        monitors.apexes = rd.pairs("monitors.apexes")?;
        monitors.envelope_c = rd.number("monitors.envelope_c")?;

        let checks = match rd.text("checks.enabled") {
            None => vec![
                CheckName::Drift,
                CheckName::Additivity,
                CheckName::Monotonicity,
                CheckName::Triangles,
                CheckName::Pointwise,
            ],
            Some(v) => parse_checks(v).map_err(|m| key_error("checks.enabled", rd.line("checks.enabled"), m))?,
        };
        let d = Tolerances::default();
        let tolerances = Tolerances {
            drift: num(&mut rd, "checks.drift_tol", d.drift)?,
            additivity: num(&mut rd, "checks.additivity_tol", d.additivity)?,
            monotone: num(&mut rd, "checks.monotone_tol", d.monotone)?,
            triangle: num(&mut rd, "checks.triangle_tol", d.triangle)?,
            pointwise: num(&mut rd, "checks.pointwise_tol", d.pointwise)?,
            flux: num(&mut rd, "checks.flux_tol", d.flux)?,
        };

        let out_dir = PathBuf::from(rd.text("output.dir").unwrap_or("nlw-out"));
        let svg = rd.flag("output.svg", true)?;
        let trajectory = rd.flag("output.trajectory", true)?;

        if let Some(key) = flat.keys().find(|k| !rd.used.contains(&k.as_str())) {
            return Err(key_error(key, rd.line(key), "unknown key"));
        }
        Ok(Self {
            flat,
            params,
            grid,
            initial,
            monitors,
            checks,
            tolerances,
            out_dir,
            svg,
            trajectory,
            appendix,
        })
    }
}

/// Two-column CSV (`u0,u1` header) of node samples.
fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| format!("missing column `{name}`"));
    let (a, b) = (col("u0")?, col("u1")?);
    let mut u0 = Vec::new();
    let mut u1 = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let get = |j: usize| {
            rec.get(j)
                .and_then(parse_number)
                .ok_or_else(|| format!("row {}: bad number", i + 2))
        };
        u0.push(get(a)?);
        u1.push(get(b)?);
    }
    Ok((u0, u1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_flat(FlatConfig::parse(text)?, None)
    }

    #[test]
    fn parses_comments_fractions_and_lists() {
        let c = cfg("# demo\nparams.p = 3.0  # cubic\nparams.kappa = 0.6\ngrid.h = 1/32\ngrid.t_max = 2\n\
                     initial.family = gaussian\nmonitors.radii = 0.5, 0.25t\nmonitors.triangles = 1:2\n")
            .unwrap();
        assert_eq!(c.grid.h, 1.0 / 32.0);
        assert_eq!(c.monitors.radii, vec![MonitorRadius::Fixed(0.5), MonitorRadius::Tracker(0.25)]);
        assert_eq!(c.monitors.triangles, vec![(1.0, 2.0)]);
        assert_eq!(c.grid.boundary, Boundary::CausalPad);
    }

    #[test]
    fn errors_name_the_key() {
        let e = cfg("params.p = 6\ngrid.h = 0.1\ngrid.t_max = 1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("params.p"));
        let e = cfg("params.p = 3\ngrid.h = 0.1\ngrid.t_max = 1\ngrid.typo = 2\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("grid.typo"));
        assert_eq!(e.line, Some(4));
        let e = cfg("params.p = 3\ngrid.h = 0.1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("grid.t_max"));
        let e = cfg("params.p = 3\ngrid.h = 0.1\ngrid.t_max = 1\ninitial.c = 2\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("initial.c"));
        assert!(FlatConfig::parse("params.p 3").is_err());
        assert!(FlatConfig::parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn appendix_family_defaults_to_the_cone() {
        let c = cfg("params.p = 4\nparams.kappa = 0.25\ngrid.h = 1/16\ngrid.t_max = 16\ninitial.family = appendix\n").unwrap();
        assert_eq!(c.grid.boundary, Boundary::Cone);
        assert_eq!(c.grid.r_max(), 36.0);
        assert!(c.appendix.as_ref().unwrap().c.is_none());
    }

    #[test]
    fn check_lists() {
        assert_eq!(parse_checks("drift, flux").unwrap(), vec![CheckName::Drift, CheckName::Flux]);
        assert!(parse_checks("drift, nope").is_err());
    }
}
