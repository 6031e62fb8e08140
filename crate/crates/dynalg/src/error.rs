use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty region has no causal gap")]
    EmptyRegion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("lattice mismatch")]
    LatticeMismatch,
    #[error("stencil exceeds lattice")]
    StencilExceedsLattice,
    #[error("CFL violation: dt^2 (lambda_max + m^2) = {0} is not below 4")]
    Cfl(f64),
    #[error("source support touches the {0} time boundary")]
    SupportAtBoundary(&'static str),
    #[error("image escapes lattice")]
    ImageEscapesLattice,
    #[error("one-particle norm undefined")]
    OneParticleUndefined,
    #[error("closed-form pairings require d = 2")]
    ClosedFormDimension,
    #[error("negative mass")]
    NegativeMass,
    #[error("invalid Poincare map: {0}")]
    InvalidPoincare(String),
    #[error("overlapping field supports")]
    OverlappingSupports,
    #[error("no separating Cauchy slab")]
    NoCauchySlab,
    #[error("mode truncation inadequate: leakage {leakage:.3e} exceeds {limit:.1e}")]
    ModeTruncation { leakage: f64, limit: f64 },
    #[error("move {tag} at position {position}: {reason}")]
    Move {
        tag: &'static str,
        position: usize,
        reason: String,
    },
    #[error("replay failed on the {side} side at step {step}: {reason}")]
    Replay {
        side: &'static str,
        step: usize,
        reason: String,
    },
    #[error("unknown generator id {0}")]
    UnknownGenerator(usize),
    #[error("Planck parameter must be positive, got {0}")]
    NonPositivePlanck(f64),
    #[error("tactic {tactic} failed: {reason}")]
    Tactic { tactic: &'static str, reason: String },
    #[error("plateau violation: {0}")]
    Plateau(String),
    #[error("delta_chi meets O")]
    DeltaChiMeetsRegion,
    #[error("causal premise failed: {0}")]
    CausalPremise(String),
    #[error("support violation: {0}")]
    Support(String),
    #[error("normal-ordered flag mismatch")]
    FlagMismatch,
    #[error("jet degree exceeds 1")]
    JetDegree,
    #[error("nonlinear S0 requires renormalization, out of scope")]
    NonlinearS0,
    #[error("series order must be non-negative")]
    NegativeOrder,
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
