use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlw_cli::checks::Verdict;
use nlw_cli::config::{parse_checks, CheckName, FlatConfig, RunConfig, Tolerances};
use nlw_cli::fit::{fit_csv, parse_window};
use nlw_cli::run::{execute, Failure, RunOutcome};
use nlw_cli::sweep::{parse_axis, sweep, threads_from_env};
use nlw_cli::verify::{refinement, verify_dir};

#[derive(Parser)]
#[command(name = "nlw", version, about = "Radial defocusing wave laboratory")]
struct Cli {
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated checks (overrides `checks.enabled`).
    #[arg(long, global = true)]
    checks: Option<String>,
    /// Only print failures.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one configuration, check it and write ledger.csv, summary.json and plots.
    Run {
        /// Config file (alternative to --config).
        file: Option<PathBuf>,
    },
    /// Re-check the outputs of earlier runs; a second, finer directory adds the refinement check.
    Verify { dir: PathBuf, finer: Option<PathBuf> },
    /// Run a config over one axis (`key = lo:hi:step` or `key = v1, v2`) in parallel.
    Sweep {
        #[arg(long)]
        axis: String,
    },
    /// Power-law example with bisection of the smallness threshold.
    Appendix,
    /// Power-law fit `y = A x^b` of a CSV column.
    Fit {
        file: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value = "t")]
        x: String,
        /// Fit window `lo:hi`.
        #[arg(long)]
        window: Option<String>,
    },
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("error: {}", f.message());
    ExitCode::from(f.exit_code() as u8)
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn report(verdicts: &[Verdict], notes: &[String], quiet: bool) -> ExitCode {
    for v in verdicts {
        if !quiet || v.failed() {
            println!("{}", v.line());
        }
    }
    if !quiet {
        for n in notes {
            println!("  {n}");
        }
    }
    if verdicts.iter().any(Verdict::failed) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn load_flat(path: &Path) -> Result<FlatConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    FlatConfig::parse(&text).map_err(|e| e.to_string())
}

/// Apply `--out` and `--checks` to the parsed assignments.
fn overrides(cli: &Cli, flat: &mut FlatConfig) {
    if let Some(out) = &cli.out {
        flat.set("output.dir", &out.to_string_lossy());
    }
    if let Some(c) = &cli.checks {
        flat.set("checks.enabled", c);
    }
}

fn run_flat(cli: &Cli, mut flat: FlatConfig, base: Option<&Path>) -> ExitCode {
    overrides(cli, &mut flat);
    let cfg = match RunConfig::from_flat(flat, base) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let quiet = cli.quiet;
    let log = |m: &str| {
        if !quiet {
            eprintln!("{m}");
        }
    };
    match execute(&cfg, &log) {
        Ok(RunOutcome { verdicts, notes, .. }) => {
            log(&format!("outputs in {}", cfg.out_dir.display()));
            report(&verdicts, &notes, quiet)
        }
        Err(f) => fail(&f),
    }
}

fn appendix_defaults() -> FlatConfig {
    let mut flat = FlatConfig::default();
    for (k, v) in [
        ("params.p", "4"),
        ("params.kappa", "0.25"),
        ("grid.h", "1/128"),
        ("grid.t_max", "64"),
        ("initial.family", "appendix"),
        ("output.dir", "nlw-appendix"),
    ] {
        flat.set(k, v);
    }
    flat
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { file } => {
            let Some(path) = file.as_ref().or(cli.config.as_ref()) else {
                return config_error("run needs a config file");
            };
            match load_flat(path) {
                Ok(flat) => run_flat(&cli, flat, path.parent()),
                Err(e) => config_error(e),
            }
        }
        Command::Appendix => {
            let mut flat = appendix_defaults();
            let mut base = None;
            if let Some(path) = &cli.config {
                match load_flat(path) {
                    Ok(user) => {
                        for (k, v) in user.echo() {
                            flat.set(&k, &v);
                        }
                        base = path.parent();
                    }
                    Err(e) => return config_error(e),
                }
            }
            run_flat(&cli, flat, base)
        }
        Command::Verify { dir, finer } => {
            let checks = match &cli.checks {
                Some(c) => match parse_checks(c) {
                    Ok(c) => c,
                    Err(e) => return config_error(e),
                },
                None => vec![
                    CheckName::Additivity,
                    CheckName::Monotonicity,
                    CheckName::Triangles,
                    CheckName::Pointwise,
                ],
            };
            let tol = Tolerances::default();
            let mut verdicts = match verify_dir(dir, &checks, &tol) {
                Ok(v) => v,
                Err(f) => return fail(&f),
            };
            if let Some(fine) = finer {
                match verify_dir(fine, &checks, &tol) {
                    Ok(v) => verdicts.extend(v.into_iter().map(|mut v| {
                        v.name = format!("{} (fine)", v.name);
                        v
                    })),
                    Err(f) => return fail(&f),
                }
                match refinement(dir, fine) {
                    Ok(v) => verdicts.push(v),
                    Err(f) => return fail(&f),
                }
            }
            report(&verdicts, &[], cli.quiet)
        }
        Command::Sweep { axis } => {
            let Some(path) = &cli.config else {
                return config_error("sweep needs --config");
            };
            let axis = match parse_axis(axis) {
                Ok(a) => a,
                Err(e) => return config_error(e),
            };
            let mut flat = match load_flat(path) {
                Ok(f) => f,
                Err(e) => return config_error(e),
            };
            if let Some(c) = &cli.checks {
                flat.set("checks.enabled", c);
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("nlw-sweep"));
            let jobs = match sweep(&flat, path.parent(), &axis, &out, threads_from_env()) {
                Ok(j) => j,
                Err(f) => return fail(&f),
            };
            for j in &jobs {
                if !cli.quiet || j.code != 0 {
                    println!("{} = {:<10} exit {} {}", axis.key, j.value, j.code, j.detail);
                }
            }
            if !cli.quiet {
                eprintln!("wrote {}", out.join("sweep.csv").display());
            }
            match jobs.iter().map(|j| j.code).max().unwrap_or(0) {
                0 => ExitCode::SUCCESS,
                c => ExitCode::from(c as u8),
            }
        }
        Command::Fit { file, column, x, window } => {
            let window = match window.as_deref().map(parse_window).transpose() {
                Ok(w) => w,
                Err(e) => return config_error(e),
            };
            match fit_csv(file, x, column, window) {
                Ok(f) => {
                    println!("exponent  {:.6}", f.exponent);
                    println!("amplitude {:.6e}", f.amplitude);
                    println!("r_squared {:.6}", f.r_squared);
                    println!("points    {} over [{}, {}]", f.points, f.t_lo, f.t_hi);
                    ExitCode::SUCCESS
                }
                Err(f) => fail(&f),
            }
        }
    }
}
