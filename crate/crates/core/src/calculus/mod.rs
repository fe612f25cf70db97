//! Coordinate exterior calculus on R^n.

pub mod field;
pub mod identities;
pub mod maps;
pub mod multi_index;
pub mod norms;
pub mod ops;
pub mod quadrature;

pub use field::{DerivativeMode, FieldMeta, KFormField, KVectorField, TestForm, VectorField, MAX_DEFAULT_DIM};
pub use maps::{pullback, pullback_at, pushforward, pushforward_at, AffineMap, ClosureMap, Diffeo, SpatialMap};
pub use multi_index::{binomial, MultiIndex};
pub use norms::{
    hodge_pairing, holder_seminorm_estimate, inner_product_pointwise, l2_pairing, lp_norm, lp_norm_ball, pair_with_test,
    weak_derivative_check,
};
pub use ops::{contract, exterior_derivative, flat, hodge_inverse, hodge_star, lie_derivative, lie_derivative_adjoint, sharp, wedge};
pub use quadrature::{QuadratureGrid, Rule, SimplexRule};
