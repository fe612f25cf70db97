//! Pushforward solutions of the stochastic advection equation and the checks
//! run on them: weak-form residuals, the Itô-Wentzell formula, conservation
//! over transported chains and classical special cases.

pub mod chain;
pub mod kiw;
pub mod solution;
pub mod special;
pub mod weak;

pub use chain::{conservation_check, AffineSimplexSpec, Chain, ConservationReport, Piece, Simplex};
pub use kiw::{kiw_residual, kiw_transport_gap, Coupling, KiwPath, KiwProcess, KiwReport};
pub use solution::{
    accumulate_along_flow, invert, linearity_defect, pullback_of_solution_defect, pullback_pairings, push_coefficients,
    pushforward_from_backward, pushforward_pairings, solve_pushforward, PushforwardSolution,
};
pub use special::{specialization_suite, IdentityCheck, SpecializationSettings};
pub use weak::{weak_residual, weak_residual_sweep, PathResidual, WeakResidualReport};
