use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("y = {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("derivative order {order} is not available for {kind} profiles")]
    UnsupportedOrder { order: usize, kind: &'static str },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("y = {y} is not an inflection point (U'' = {second})")]
    NotInflection { y: f64, second: f64 },

    #[error("singular potential: U - U(y_i) vanishes away from y_i near y = {0}")]
    SingularPotential(f64),

    #[error("profile is not monotone (min U' = {0})")]
    NonMonotone(f64),

    #[error("bound requires 0 < delta < (pi - 2)/(pi - 1), got delta = {0}")]
    BoundOutOfRange(f64),

    #[error("{what} did not converge under refinement: coarse {coarse}, fine {fine}")]
    NotConverged {
        what: &'static str,
        coarse: f64,
        fine: f64,
    },

    #[error("Newton iteration failed for {what} (residual {residual:e})")]
    NewtonFailed { what: &'static str, residual: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("no instability certificate: {0}")]
    NoCertificate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
