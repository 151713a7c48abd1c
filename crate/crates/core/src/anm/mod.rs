//! Atomic-norm minimization over Kronecker-structured 2D atoms.

pub mod exact;
pub mod solver;
pub mod toeplitz;

pub use exact::{atomic_norm_exact, solve_anm_reference, ReferenceSolution, MAX_REFERENCE_ELEMENTS};
pub use solver::{anm_objective, regularization_weight, smallest_eigenvalue, solve_anm, AnmSolution, SolverOptions};
pub use toeplitz::{toeplitz2_adjoint, toeplitz2_assemble, Toeplitz2Params};
