use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("point lies outside the domain")]
    OutsideDomain,
    #[error("coincident points where distinct points are required")]
    Coincident,
    #[error("degenerate random stream: {0}")]
    DegenerateStream(&'static str),
    #[error("series not contracting at order {order}: observed ratio {ratio:.3} (field too strong for the budget at this time)")]
    NonContracting { order: usize, ratio: f64 },
    #[error("no exponential window found: {0}")]
    NoLinearWindow(String),
    #[error("descriptor parse error: {0}")]
    Descriptor(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
