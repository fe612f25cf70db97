//! Characteristic flows of `dφ = b dt + Σ_k ξ_k ∘ dW^k`: Brownian drivers,
//! one-step schemes with Jacobian propagation, ensembles and refinement
//! diagnostics.

pub mod brownian;
pub mod diagnostics;
pub mod ensemble;
pub mod integrate;

pub use brownian::{keyed_normal, BrownianPaths, TimeGrid};
pub use diagnostics::{flow_property_gap, refinement_ladder, round_trip_sweep, scheme_discrepancy_sweep, strong_error_sweep, trajectory};
pub use ensemble::{
    coupled_distance, flow_convergence_sweep, integrate_backward_flow, integrate_flow, jacobian_moments, operator_norm, EnsembleOptions,
    FlowEnsemble, FlowSweep, MomentEstimate, Record,
};
pub use integrate::{flow_endpoint, integrate_path, Direction, FlowState, FlowSystem, PathOutcome, Scheme};
