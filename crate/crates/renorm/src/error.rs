//! Error type shared by every module in the crate.

use thiserror::Error;

/// Everything that can go wrong in series arithmetic, operator application,
/// fixed-point search, spectral assembly, or map dynamics.
#[derive(Debug, Error)]
pub enum RenormError {
    #[error("mismatched domain radii: {0} vs {1}")]
    MismatchedDomain(f64, f64),
    #[error("coefficient index ({i},{j}) outside truncation degree {deg}")]
    OutOfRange { i: usize, j: usize, deg: usize },
    #[error("composition argument leaves the bi-disk: norm {norm} > radius {rho}")]
    DomainEscape { norm: f64, rho: f64 },
    #[error("denominator too close to singular: |{0}| below threshold")]
    SingularDenominator(f64),
    #[error("{what} did not converge after {iters} iterations (residual {residual})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("no scaling root inside the admissible window [{lo}, {hi}]")]
    NoRootInWindow { lo: f64, hi: f64 },
    #[error("{name} = {value} outside admissible window [{lo}, {hi}]")]
    ScaleOutsideWindow {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("scaling root suspected non-simple: |P'(root)| = {0}")]
    MultipleRootSuspected(f64),
    #[error("series is not symmetric: defect {defect} exceeds tolerance {tol}")]
    NotSymmetric { defect: f64, tol: f64 },
    #[error("inverse certificate invalid: contraction factor {0} >= 1")]
    NotContractive(f64),
    #[error("eigenvalue iteration failed: {0}")]
    IterationFailure(String),
    #[error("head Jacobian singular or ill-conditioned")]
    SingularJacobian,
    #[error("iteration left the working ball: norm {norm} > {bound}")]
    Diverged { norm: f64, bound: f64 },
    #[error("implicit solve for y failed at (x,u)=({x},{u}) after {iters} iterations")]
    ImplicitSolveFailure { x: f64, u: f64, iters: usize },
    #[error("twist condition violated: s1(y,x) = {0} too small")]
    TwistViolation(f64),
    #[error("periodic orbit lost at cascade level {level}")]
    OrbitLost { level: usize },
    #[error("insufficient cascade data: need at least {need} levels, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("malformed series file: {0}")]
    ParseError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RenormError>;
