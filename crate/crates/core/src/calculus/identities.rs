//! Randomised checks of the exterior-calculus identities: `d² = 0`, Cartan's
//! formula, `⋆⋆ = (−1)^{k(n−k)}`, the L² adjointness of the Lie derivative
//! and `∫β∧⋆α = ⟨⟨β,α⟩⟩`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::field::{KFormField, TestForm, VectorField};
use super::multi_index::binomial;
use super::norms::{hodge_pairing, l2_pairing};
use super::ops::{contract, exterior_derivative, hodge_star, lie_derivative, lie_derivative_adjoint};
use super::quadrature::{QuadratureGrid, Rule};
use crate::error::Result;
use crate::expr::Expr;

/// Smooth scalar `Σ_m a_m sin(k_m·x + φ_m)` with random coefficients.
pub fn random_trig(n: usize, terms: usize, rng: &mut impl Rng) -> Expr {
    let parts: Vec<Expr> = (0..terms)
        .map(|_| {
            let mut arg: Vec<Expr> = (0..n).map(|i| Expr::var(i).scale(rng.random_range(-1.5..1.5))).collect();
            arg.push(Expr::constant(rng.random_range(0.0..std::f64::consts::TAU)));
            Expr::sum(&arg).sin().scale(rng.random_range(-1.0..1.0))
        })
        .collect();
    Expr::sum(&parts)
}

pub fn random_trig_field(n: usize, terms: usize, rng: &mut impl Rng) -> Result<VectorField> {
    VectorField::new((0..n).map(|_| random_trig(n, terms, rng)).collect())
}

pub fn random_trig_form(n: usize, k: usize, terms: usize, rng: &mut impl Rng) -> Result<KFormField> {
    KFormField::new(n, k, (0..binomial(n, k)).map(|_| random_trig(n, terms, rng)).collect())
}

/// Outcome of one named identity over all its cases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    pub fn new(name: &str, cases: usize, max_residual: f64, tolerance: f64) -> Self {
        IdentityCheck {
            name: name.into(),
            cases,
            max_residual,
            tolerance,
            passed: max_residual <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentitySettings {
    pub seed: u64,
    pub cases: usize,
    pub probes: usize,
    /// Largest dimension for the pointwise identities.
    pub max_dim: usize,
    /// Largest dimension for the quadrature identities.
    pub max_quadrature_dim: usize,
    pub tolerance: f64,
}

impl Default for IdentitySettings {
    fn default() -> Self {
        IdentitySettings {
            seed: 1,
            cases: 20,
            probes: 4,
            max_dim: 4,
            max_quadrature_dim: 3,
            tolerance: 1e-8,
        }
    }
}

fn probe(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// `(n, k)` for case `i`, cycling through dimensions `1..=max_n` and degrees
/// `0..=n − min_gap`.
fn shape(i: usize, max_n: usize, min_gap: usize) -> (usize, usize) {
    let pairs: Vec<(usize, usize)> = (1..=max_n)
        .flat_map(|n| (0..=n.saturating_sub(min_gap)).map(move |k| (n, k)))
        .filter(|(n, k)| k + min_gap <= *n)
        .collect();
    pairs[i % pairs.len()]
}

pub fn d_squared(s: &IdentitySettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut worst = 0.0f64;
    for i in 0..s.cases {
        let (n, k) = shape(i, s.max_dim, 2);
        let a = random_trig_form(n, k, 2, &mut rng)?;
        let dd = exterior_derivative(&exterior_derivative(&a)?)?;
        for _ in 0..s.probes {
            let x = probe(n, &mut rng);
            worst = worst.max(dd.eval(0.0, &x).iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
    }
    Ok(IdentityCheck::new("d-squared", s.cases, worst, s.tolerance))
}

/// `ℒ_b α = d ι_b α + ι_b dα` (the boundary degrees use the vanishing term).
pub fn cartan(s: &IdentitySettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x11);
    let mut worst = 0.0f64;
    for i in 0..s.cases {
        let (n, k) = shape(i, s.max_dim, 0);
        let a = random_trig_form(n, k, 2, &mut rng)?;
        let b = random_trig_field(n, 2, &mut rng)?;
        let lhs = lie_derivative(&b, &a)?;
        let rhs = match (k, k == n) {
            (0, _) => contract(&b, &exterior_derivative(&a)?)?,
            (_, true) => exterior_derivative(&contract(&b, &a)?)?,
            _ => exterior_derivative(&contract(&b, &a)?)?.add(&contract(&b, &exterior_derivative(&a)?)?)?,
        };
        for _ in 0..s.probes {
            let x = probe(n, &mut rng);
            worst = worst.max(max_diff(&lhs.eval(0.0, &x), &rhs.eval(0.0, &x)));
        }
    }
    Ok(IdentityCheck::new("cartan", s.cases, worst, s.tolerance))
}

pub fn double_star(s: &IdentitySettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x22);
    let mut worst = 0.0f64;
    for i in 0..s.cases {
        let (n, k) = shape(i, s.max_dim, 0);
        let a = random_trig_form(n, k, 2, &mut rng)?;
        let ss = hodge_star(&hodge_star(&a));
        let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..s.probes {
            let x = probe(n, &mut rng);
            let want: Vec<f64> = a.eval(0.0, &x).iter().map(|v| sign * v).collect();
            worst = worst.max(max_diff(&ss.eval(0.0, &x), &want));
        }
    }
    Ok(IdentityCheck::new("double-star", s.cases, worst, s.tolerance))
}

/// Bump test form near the origin with random smooth channel profiles.
pub fn random_test_form(n: usize, k: usize, rng: &mut impl Rng) -> Result<TestForm> {
    let center = probe(n, rng).into_iter().map(|v| 0.3 * v).collect::<Vec<_>>();
    let radius = rng.random_range(0.6..1.0);
    let profiles = (0..binomial(n, k)).map(|_| random_trig(n, 1, rng).add(&Expr::one())).collect();
    TestForm::bump(n, k, &center, radius, profiles)
}

fn quadrature_grid(theta: &TestForm) -> Result<QuadratureGrid> {
    let per_axis = match theta.center().len() {
        1 => 256,
        2 => 64,
        _ => 24,
    };
    QuadratureGrid::cube(theta.center(), theta.radius(), per_axis, Rule::GaussLegendre { order: 8 })
}

/// `⟨⟨ℒ_b K, θ⟩⟩ = ⟨⟨K, ℒ_b^T θ⟩⟩` by quadrature over the support of `θ`.
/// The residual counts as zero when it is within three times the estimated
/// quadrature error (differences of both sides between the grid and its
/// refinement).
pub fn adjointness(s: &IdentitySettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x33);
    let mut worst = 0.0f64;
    for i in 0..s.cases {
        let (n, k) = shape(i, s.max_quadrature_dim, 0);
        let kf = random_trig_form(n, k, 2, &mut rng)?;
        let b = random_trig_field(n, 2, &mut rng)?;
        let theta = random_test_form(n, k, &mut rng)?;
        let lk = lie_derivative(&b, &kf)?;
        let adj = lie_derivative_adjoint(&b, theta.form())?;
        let grid = quadrature_grid(&theta)?;
        let fine = grid.refined();
        let lhs = l2_pairing(&lk, theta.form(), 0.0, &grid)?;
        let lhs_fine = l2_pairing(&lk, theta.form(), 0.0, &fine)?;
        let rhs = l2_pairing(&kf, &adj, 0.0, &grid)?;
        let rhs_fine = l2_pairing(&kf, &adj, 0.0, &fine)?;
        let estimate = (lhs - lhs_fine).abs() + (rhs - rhs_fine).abs();
        let excess = ((lhs_fine - rhs_fine).abs() - 3.0 * estimate).max(0.0);
        worst = worst.max(excess);
    }
    Ok(IdentityCheck::new("adjointness", s.cases, worst, s.tolerance))
}

/// `∫ β ∧ ⋆α = ⟨⟨β, α⟩⟩` on the same quadrature.
pub fn hodge_pairing_identity(s: &IdentitySettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x44);
    let mut worst = 0.0f64;
    for i in 0..s.cases {
        let (n, k) = shape(i, s.max_quadrature_dim, 0);
        let gauss = Expr::dist_sq(&vec![0.0; n]).neg().exp();
        let a = random_trig_form(n, k, 2, &mut rng)?.mul_scalar(&gauss);
        let b = random_trig_form(n, k, 2, &mut rng)?;
        let grid = QuadratureGrid::cube(&vec![0.0; n], 3.0, 8, Rule::GaussLegendre { order: 4 })?;
        let lhs = hodge_pairing(&b, &a, 0.0, &grid)?;
        let rhs = l2_pairing(&b, &a, 0.0, &grid)?;
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    Ok(IdentityCheck::new("hodge-pairing", s.cases, worst, s.tolerance))
}

pub fn identity_suite(s: &IdentitySettings) -> Result<Vec<IdentityCheck>> {
    Ok(vec![
        d_squared(s)?,
        cartan(s)?,
        double_star(s)?,
        adjointness(s)?,
        hodge_pairing_identity(s)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in identity_suite(&IdentitySettings::default()).unwrap() {
            assert!(c.passed, "{c:?}");
            assert!(c.cases >= 20);
        }
    }

    #[test]
    fn shapes_cover_all_dimensions() {
        let dims: std::collections::BTreeSet<usize> = (0..20).map(|i| shape(i, 4, 2).0).collect();
        assert_eq!(dims.into_iter().collect::<Vec<_>>(), vec![2, 3, 4]);
    }
}
