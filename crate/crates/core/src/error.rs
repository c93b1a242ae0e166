use thiserror::Error;

/// Failures raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("boundary leak: r_max*u0(r_max)^2 = {leak:.3e} exceeds {limit:.3e}")]
    BoundaryLeak { leak: f64, limit: f64 },
    #[error("weighted functional diverges: decade contribution {last:.3e} >= previous {previous:.3e}")]
    Divergent { previous: f64, last: f64 },
    #[error("blowup at t = {t}: max |w| = {max:.3e} exceeds guard {guard:.3e}")]
    Blowup { t: f64, max: f64, guard: f64 },
    #[error("Picard iteration does not contract (sweep {sweep}: residual {residual:.3e}, previous {previous:.3e})")]
    NoContraction {
        sweep: usize,
        residual: f64,
        previous: f64,
    },
    #[error("{name} = {value} is not a multiple of the grid spacing {h}")]
    OffGrid { name: &'static str, value: f64, h: f64 },
    #[error("outside the computed domain: {0}")]
    OutOfDomain(String),
    #[error("tail not converged: last tenth of the window carries {fraction:.3} of the total")]
    TailNotConverged { fraction: f64 },
    #[error("invalid weight: {0}")]
    WeightInvalid(String),
    #[error("only {found} dyadic samples fit in the domain (need 8)")]
    ShortSpan { found: usize },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
