//! Repo-wide numerical tolerances.

/// Hermiticity, trace and positivity tolerance for density matrices.
pub const STATE_TOL: f64 = 1e-10;

/// Unitarity tolerance for truncated displacement blocks.
pub const UNITARY_TOL: f64 = 1e-8;

/// Maximum truncation leakage accepted when building coherent-type states.
pub const DEFAULT_LEAKAGE_TOL: f64 = 1e-6;

/// Probabilities outside [0, 1] by less than this are clipped; more is a bug.
pub const PROB_CLIP_TOL: f64 = 1e-9;

/// Relative singular-value floor below which the condition number is infinite.
pub const SINGULAR_REL_TOL: f64 = 1e-14;

/// Minimum separation between two displacements of one plan.
pub const DUPLICATE_ALPHA_TOL: f64 = 1e-6;

/// Largest supported truncation dimension.
pub const MAX_DIM: usize = 64;

/// Extra Fock levels kept beyond `D + ceil(8|α|²)` for displaced operators.
pub const WORKING_DIM_PAD: usize = 20;

/// Working dimension used for displaced-operator sums.
pub fn working_dim(dim: usize, alpha_abs: f64) -> usize {
    dim + (8.0 * alpha_abs * alpha_abs).ceil() as usize + WORKING_DIM_PAD
}
