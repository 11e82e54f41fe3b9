//! RBF-FD discretization of parametric linear operators with Dirichlet data.

pub mod kernel;
pub mod operator;
pub mod system;
pub mod weights;

pub use kernel::{imq_eval, Derivative, KernelKind, PolyAugmentation, RbfKernel};
pub use operator::{
    finite_difference_check, helmholtz_apply_imq, DiffOperator, Helmholtz, HelmholtzSource, ParametricOperator,
};
pub use system::{
    assemble_system, solve_high_fidelity, AffineDiscretization, HighFidelitySolution, HighFidelitySystem,
    SolveOptions,
};
pub use weights::{local_interp_matrix, stencil_weights, StencilSystem, SINGULAR_PIVOT_RATIO};
