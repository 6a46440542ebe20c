use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The wavefunction is exactly zero, so `log|psi|` has no derivative.
    #[error("wavefunction vanishes at the evaluation point")]
    NodeEvaluation,
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("non-finite local energy at walker {walker}")]
    NonFiniteEnergy { walker: usize },
    #[error("singular configuration: interparticle distance {distance:e} below 1e-12")]
    SingularConfiguration { distance: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("brute-force antisymmetrization is limited to N <= 8 (got N = {0})")]
    SizeLimit(usize),
    #[error("point lies on the node set")]
    OnNode,
}
