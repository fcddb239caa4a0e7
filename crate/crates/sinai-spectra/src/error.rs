use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ellipticity margin must satisfy 0 < kappa < 1/2, got {0}")]
    InvalidKappa(f64),

    #[error("invalid disorder law: {0}")]
    InvalidLaw(String),

    #[error("window [{lo}, {hi}] is empty or does not contain the required sites")]
    BadWindow { lo: i64, hi: i64 },

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("potential increment {increment} at site {site} exceeds the ellipticity bound {bound}")]
    EllipticityViolation {
        site: i64,
        increment: f64,
        bound: f64,
    },

    #[error("site sets must be disjoint and nonempty: {0}")]
    BadSiteSets(String),

    #[error("invalid path: {0}")]
    BadPath(String),

    #[error("abscissa {0} lies in the forbidden set")]
    SiteInForbiddenSet(f64),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("path certificate rejected: {0}")]
    CertificateRejected(String),

    #[error("no trapped minima at this depth scale")]
    NoMinima,

    #[error("shift {lambda} lies in the spectrum (nearest eigenvalue {nearest})")]
    LambdaInSpectrum { lambda: f64, nearest: f64 },

    #[error("walk left the environment window at step {step}")]
    WindowExit { step: u64 },

    #[error("span too short: {0} interior slopes (need at least {1})")]
    InsufficientSpan(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
