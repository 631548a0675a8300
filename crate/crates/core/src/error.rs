use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeomError {
    #[error("size error: {0}")]
    Size(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("quadrature did not converge (estimated residual {residual:.3e})")]
    Quadrature { residual: f64 },

    #[error("exponential fit missed its target: achieved {achieved:.4e}, wanted {target:.4e}")]
    Fit { achieved: f64, target: f64 },

    #[error("hierarchy of {count} DDOs exceeds the capacity budget of {budget}")]
    Capacity { count: u128, budget: u128 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("propagation diverged at step {step}; try a smaller time step")]
    Instability { step: usize },

    #[error("singular frequency response at omega = {omega}")]
    Singular { omega: f64 },

    #[error("spectrum grids do not align")]
    GridMismatch,

    #[error("spectrum grid is not uniform; resample it first")]
    NonUniformGrid,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DeomError>;
