use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not reach tolerance: value {value:.6e}, error estimate {error:.3e}")]
    QuadratureFailure { value: f64, error: f64 },
    #[error("integrand returned a non-finite value at {0}")]
    NonFiniteIntegrand(String),
    #[error("kernel profile is not differentiable (top-hat kernels have no derivative)")]
    NonDifferentiableKernel,
    #[error("line passes within {distance:.3e} of the Newtonian singularity")]
    SingularLine { distance: f64 },
    #[error("paired line integrand does not decay at order {order}: tail ratio {ratio:.3}")]
    SlowDecay { order: u32, ratio: f64 },
    #[error("unsupported quadrature order {0}")]
    UnsupportedOrder(usize),
    #[error("deformation is not injective: nodes {0} and {1} map to the same point")]
    NonInvertibleMap(usize, usize),
    #[error("volume constraint violated: V = {v:.8e}, Ṽ = {v_tilde:.8e}")]
    VolumeConstraintViolated { v: f64, v_tilde: f64 },
    #[error("finite-difference step failed: {0}")]
    FdStepFailure(String),
    #[error("finite-difference step too small: noise {noise:.3e} exceeds signal {signal:.3e}")]
    StepTooSmall { noise: f64, signal: f64 },
    #[error("alignment iteration diverged at step {step}: update {update:.3e}")]
    IterationDiverged { step: usize, update: f64 },
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("exhaustion trace does not converge: {0}")]
    NonConvergentTrace(String),
    #[error("optimizer stalled at value {best:.6e}")]
    OptimizerStalled { best: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
