//! Optimal stopping of `e^{X_t}` for a Brownian bridge `X` pinned at `(T, α)`.
//!
//! The optimal rule stops the first time `X` reaches a boundary `b(t)`. This
//! crate computes `b` from its nonlinear Volterra integral equation, evaluates
//! the value function from the early-exercise representation, and provides
//! the independent checks (quadrature, Monte Carlo, finite differences) used
//! to validate both.
//!
//! ```no_run
//! use bridge_stop::{picard_solve, value_at, BridgeSpec, TimeGrid, DEFAULT_MAX_ITER};
//!
//! let spec = BridgeSpec::default();
//! let grid = TimeGrid::with_mesh(&spec, 0.0, 1e-3).unwrap();
//! let (boundary, report) = picard_solve(&spec, &grid, 1e-6, DEFAULT_MAX_ITER).unwrap();
//! println!("b(0) = {} after {} iterations", boundary.value(0), report.iterations);
//! println!("v(0, 0) = {}", value_at(&spec, &boundary, 0.0, 0.0).unwrap());
//! ```

pub mod error;
pub mod fit;
pub mod io;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod solver;
pub mod value;

pub use error::{Error, Result};
pub use fit::{ansatz, fit_ansatz, FitResult};
pub use kernel::{inner_integral, inner_integral_oracle, kernel_params, std_normal_cdf, KernelInputs, KernelParams};
pub use model::{drift, generator_gain, simulate_path, transition_density, BridgeSpec, Path, PathSeed, TimeGrid};
pub use montecarlo::{
    estimate_rule_value, estimate_suboptimal, estimate_sup_constants, McConfig, McEstimate, McReport, StoppingRule,
    SupConstants,
};
pub use solver::{
    backward_solve, compare_boundaries, max_equation_residual, monotonicity_slack, picard_solve, picard_step, Boundary,
    BoundaryDiagnostics, SolveReport, DEFAULT_MAX_ITER,
};
pub use value::{
    classify, left_second_derivative, linspace, pde_residual, spatial_derivative, value_at, value_surface, Region,
    ValueSurface,
};
