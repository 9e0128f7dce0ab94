use thiserror::Error;

/// Everything that can go wrong between building a curve and tracking a flow.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by the zero polynomial")]
    DivisionByZero,

    #[error("interpolation nodes {i} and {j} coincide")]
    DuplicateNodes { i: usize, j: usize },

    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} must have degree at least {min}")]
    DegreeTooLow { what: &'static str, min: usize },

    #[error("root iteration did not converge for degree {degree} after {iterations} sweeps")]
    RootsDidNotConverge { degree: usize, iterations: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("branch points {first} and {second} coincide (gap {gap:e})")]
    CoincidentBranchPoints {
        first: String,
        second: String,
        gap: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state is off the constraint manifold (|phi| = {phi:e}, |phi_dot| = {phi_dot:e})")]
    OffManifold { phi: f64, phi_dot: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },

    #[error("U is not monic (leading coefficient {leading})")]
    NotMonic { leading: f64 },

    #[error("(f + V^2) is not divisible by U (relative remainder {residual:e})")]
    NotDivisible { residual: f64 },

    #[error("leading terms of dV failed to cancel (residual {residual:e})")]
    CancellationFailure { residual: f64 },

    #[error("divisibility residual grew to {residual:e} at t = {t}")]
    DivisibilityGrowth { t: f64, residual: f64 },

    #[error("{what}: found {found} real roots, expected {expected}")]
    ComplexRoots {
        what: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("divisor points collide (gap {gap:e})")]
    RootCollision { gap: f64 },

    #[error("{what}[{index}] = {value:e} is negative; triple is outside the real regime")]
    OutsideRealRegime {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("coordinate {index} has vanishing position and velocity; branch is undetermined")]
    DegenerateBranch { index: usize },

    #[error("branch of coordinate {index} is ambiguous between t = {t0} and t = {t1}")]
    AmbiguousCrossing { index: usize, t0: f64, t1: f64 },

    #[error("degenerate spectrum: m[{index}] = {m:e} (c coincides with a coupling constant)")]
    DegenerateSpectrum { index: usize, m: f64 },

    #[error("{which} failed to drop degree (residual {residual:e}); constraint violated upstream")]
    DegreeDrop { which: &'static str, residual: f64 },

    #[error("spectrum is not interlaced with the coupling constants")]
    NotInterlaced,

    #[error("evaluation point coincides with pole a[{index}]")]
    Pole { index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
