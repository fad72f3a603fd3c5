use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("logarithm argument on its branch cut: {0}")]
    BranchCut(String),
    #[error("tracts are not inside the contraction half-plane (margin {0})")]
    ContractRegime(f64),
    #[error("address not realized: {0}")]
    AddressNotRealized(String),
    #[error("tail refinement exceeded its budget at t = {0}")]
    UnresolvedTail(f64),
    #[error("no endpoint detected within budget")]
    NoEndpointDetected,
    #[error("orbit point {0} is boundary-ambiguous")]
    ItineraryUnreadable(usize),
    #[error("traced tail too short for projection")]
    TailTooShort,
    #[error("projection did not converge within n_max = {0}")]
    NotConverged(usize),
    #[error("forward orbit left the half-plane at step {0}")]
    OrbitLeftHalfPlane(usize),
    #[error("unsupported region variant: {0}")]
    UnsupportedRegion(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::BranchCut(_) => "BranchCutError",
            Error::ContractRegime(_) => "ContractRegimeError",
            Error::AddressNotRealized(_) => "AddressNotRealized",
            Error::UnresolvedTail(_) => "UnresolvedTail",
            Error::NoEndpointDetected => "NoEndpointDetected",
            Error::ItineraryUnreadable(_) => "ItineraryUnreadable",
            Error::TailTooShort => "TailTooShort",
            Error::NotConverged(_) => "NotConverged",
            Error::OrbitLeftHalfPlane(_) => "OrbitLeftHalfPlane",
            Error::UnsupportedRegion(_) => "UnsupportedRegion",
            Error::Invalid(_) => "InvalidInput",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
