use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid too small: n = {0}, need n >= 3")]
    GridTooSmall(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("point {0:?} outside the domain")]
    OutsideDomain([f64; 3]),
    #[error("herglotz parameter alpha = {0} must be >= 1")]
    InvalidAlpha(f64),
    #[error("sound speed is not radial: {0}")]
    NonRadial(String),
    #[error("invalid medium: {0}")]
    InvalidMedium(String),
    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ray trapped: no exit before t = {0}")]
    TrappedRay(f64),
    #[error("frame degeneracy: pseudo-orthonormality defect {0:.3e}")]
    FrameDegeneracy(f64),
    #[error("chart inversion failed at (t, x) = {0:?}")]
    ChartInversion([f64; 4]),
    #[error("non-symmetric metric hessian: defect {0:.3e}")]
    NonSymmetricHessian(f64),
    #[error("det Y degenerate: |det Y| = {0:.3e} at s = {1}")]
    DetYDegenerate(f64, f64),
    #[error("square-root branch jump of {0:.3} rad at s = {1}")]
    BranchJump(f64, f64),
    #[error("CFL violated: dt = {dt} > {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (residual {residual:.3e})")]
    CgNonConvergence { iterations: usize, residual: f64 },
    #[error("Picard iteration did not converge at step {step} (update {update:.3e})")]
    PicardNonConvergence { step: usize, update: f64 },
    #[error("nonlinear degeneracy: min(1 - 2 beta u) = {min_factor:.4} < 0.1 at step {step}")]
    NonlinearDegeneracy { step: usize, min_factor: f64 },
    #[error("resolution guard: {0}")]
    ResolutionGuard(String),
    #[error("invariant check failed: {0}")]
    CheckFailed(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidAlpha(_)
            | Error::InvalidMedium(_)
            | Error::InvalidGrid(_)
            | Error::GridTooSmall(_)
            | Error::NonRadial(_)
            | Error::Io(_) => 2,
            Error::ResolutionGuard(_) | Error::Cfl { .. } => 4,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
