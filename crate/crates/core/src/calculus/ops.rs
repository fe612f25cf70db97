//! Pointwise-algebraic and differential operators on forms with the Euclidean metric.

use super::field::{KFormField, KVectorField, VectorField};
use super::multi_index::{combinations, sort_with_sign, MultiIndex};
use crate::error::{Error, Result};
use crate::expr::Expr;

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Exterior product via the signed shuffle sum.
pub fn wedge(alpha: &KFormField, beta: &KFormField) -> Result<KFormField> {
    let n = alpha.n();
    same_dim(n, beta.n())?;
    let (j, k) = (alpha.degree(), beta.degree());
    if j + k > n {
        return Err(Error::DegreeOverflow { j, k, n });
    }
    let channels = combinations(n, j + k)
        .into_iter()
        .map(|target| {
            let mut terms = Vec::new();
            for left_pos in combinations(j + k, j) {
                let left: Vec<usize> = left_pos.iter().map(|&p| target[p]).collect();
                let right: Vec<usize> = target.iter().copied().filter(|i| !left.contains(i)).collect();
                let concat: Vec<usize> = left.iter().chain(&right).copied().collect();
                let (_, sign) = sort_with_sign(&concat).expect("disjoint indices");
                let a = alpha.component(&left);
                let b = beta.component(&right);
                let term = a.mul(&b);
                if !term.is_zero() {
                    terms.push(term.scale(sign));
                }
            }
            Expr::sum(&terms)
        })
        .collect();
    Ok(KFormField::from_parts(n, j + k, channels, alpha.mode().combine(beta.mode())))
}

/// Interior product `ι_X α`.
pub fn contract(x: &VectorField, alpha: &KFormField) -> Result<KFormField> {
    let n = alpha.n();
    same_dim(n, x.n())?;
    let k = alpha.degree();
    if k == 0 {
        return Err(Error::ContractZeroForm);
    }
    let channels = combinations(n, k - 1)
        .into_iter()
        .map(|rest| {
            let terms: Vec<Expr> = (0..n)
                .map(|l| {
                    let mut idx = vec![l];
                    idx.extend_from_slice(&rest);
                    x.component(l).mul(&alpha.component(&idx))
                })
                .collect();
            Expr::sum(&terms)
        })
        .collect();
    Ok(KFormField::from_parts(n, k - 1, channels, alpha.mode().combine(x.mode())))
}

/// Exterior derivative `dα`.
pub fn exterior_derivative(alpha: &KFormField) -> Result<KFormField> {
    let n = alpha.n();
    let k = alpha.degree();
    if k >= n {
        return Err(Error::TopDegreeDerivative);
    }
    let mode = alpha.mode();
    let channels = combinations(n, k + 1)
        .into_iter()
        .map(|target| {
            let terms: Vec<Expr> = (0..=k)
                .map(|p| {
                    let rest: Vec<usize> = target.iter().enumerate().filter(|&(q, _)| q != p).map(|(_, &i)| i).collect();
                    let d = mode.differentiate(&alpha.component(&rest), target[p]);
                    if p % 2 == 0 {
                        d
                    } else {
                        d.neg()
                    }
                })
                .collect();
            Expr::sum(&terms)
        })
        .collect();
    Ok(KFormField::from_parts(n, k + 1, channels, mode))
}

/// Euclidean Hodge star, `(⋆α)_J = sgn(I, J) α_I` with `I` the complement of `J`.
pub fn hodge_star(alpha: &KFormField) -> KFormField {
    let n = alpha.n();
    let k = alpha.degree();
    let channels = MultiIndex::all(n, n - k)
        .into_iter()
        .map(|j| {
            let i = j.complement();
            let concat: Vec<usize> = i.indices().iter().chain(j.indices()).copied().collect();
            let (_, sign) = sort_with_sign(&concat).expect("complementary indices");
            alpha.channel(&i).scale(sign)
        })
        .collect();
    KFormField::from_parts(n, n - k, channels, alpha.mode())
}

/// Inverse Hodge star on `(n-k)`-forms: `⋆⁻¹β = (-1)^{k(n-k)} ⋆β`, where `k` is
/// the degree of the result.
pub fn hodge_inverse(beta: &KFormField) -> KFormField {
    let n = beta.n();
    let k = n - beta.degree();
    let s = if (k * (n - k)).is_multiple_of(2) { 1.0 } else { -1.0 };
    hodge_star(beta).scale(s)
}

/// Lie derivative of a k-form:
/// `(ℒ_b K)_I = b^l ∂_l K_I + Σ_j Σ_l K_{i_1..l..i_k} ∂_{i_j} b^l`.
pub fn lie_derivative(b: &VectorField, k_form: &KFormField) -> Result<KFormField> {
    let n = k_form.n();
    same_dim(n, b.n())?;
    let k = k_form.degree();
    let mode = k_form.mode();
    let channels = MultiIndex::all(n, k)
        .into_iter()
        .map(|idx| {
            let base = k_form.channel(&idx);
            let mut terms: Vec<Expr> = (0..n).map(|l| b.component(l).mul(&mode.differentiate(base, l))).collect();
            for slot in 0..k {
                let ij = idx.indices()[slot];
                for l in 0..n {
                    let mut swapped = idx.indices().to_vec();
                    swapped[slot] = l;
                    terms.push(k_form.component(&swapped).mul(b.jacobian_entry(l, ij)));
                }
            }
            Expr::sum(&terms)
        })
        .collect();
    Ok(KFormField::from_parts(n, k, channels, mode.combine(b.mode())))
}

/// `L²` adjoint of the Lie derivative, `⟨⟨ℒ_b K, θ⟩⟩ = ⟨⟨K, ℒ_b^T θ⟩⟩`:
/// `(ℒ_b^T θ)_I = -∂_l(b^l θ_I) + Σ_j Σ_l θ_{i_1..l..i_k} ∂_l b^{i_j}`.
pub fn lie_derivative_adjoint(b: &VectorField, theta: &KFormField) -> Result<KFormField> {
    let n = theta.n();
    same_dim(n, b.n())?;
    let k = theta.degree();
    let mode = theta.mode();
    let div = b.divergence();
    let channels = MultiIndex::all(n, k)
        .into_iter()
        .map(|idx| {
            let base = theta.channel(&idx);
            let mut terms: Vec<Expr> = (0..n).map(|l| b.component(l).mul(&mode.differentiate(base, l)).neg()).collect();
            terms.push(div.mul(base).neg());
            for slot in 0..k {
                let ij = idx.indices()[slot];
                for l in 0..n {
                    let mut swapped = idx.indices().to_vec();
                    swapped[slot] = l;
                    terms.push(theta.component(&swapped).mul(b.jacobian_entry(ij, l)));
                }
            }
            Expr::sum(&terms)
        })
        .collect();
    Ok(KFormField::from_parts(n, k, channels, mode.combine(b.mode())))
}

/// Index raising with the Euclidean metric: channel-identity map.
pub fn sharp(theta: &KFormField) -> KVectorField {
    KVectorField::new(theta.n(), theta.degree(), theta.channels().to_vec()).expect("same channel layout")
}

/// Index lowering with the Euclidean metric: channel-identity map.
pub fn flat(v: &KVectorField) -> KFormField {
    KFormField::from_parts(v.n(), v.degree(), v.channels().to_vec(), super::field::DerivativeMode::Analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::field::DerivativeMode;

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    fn assert_channels(f: &KFormField, t: f64, p: &[f64], expected: &[f64], tol: f64) {
        let got = f.eval(t, p);
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() <= tol, "got {got:?}, expected {expected:?}");
        }
    }

    #[test]
    fn wedge_basis_and_antisymmetry() {
        let dx1 = KFormField::basis(3, &[0]).unwrap();
        let dx2 = KFormField::basis(3, &[1]).unwrap();
        let w = wedge(&dx1, &dx2).unwrap();
        assert_channels(&w, 0.0, &[0.0; 3], &[1.0, 0.0, 0.0], 0.0);
        let z = wedge(&dx1, &dx1).unwrap();
        assert_channels(&z, 0.0, &[0.3; 3], &[0.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn wedge_of_scaled_one_forms() {
        // f = x2, g = x1 at (2, 3): f g = 6
        let a = KFormField::monomial(2, &[0], x(1)).unwrap();
        let b = KFormField::monomial(2, &[1], x(0)).unwrap();
        let w = wedge(&a, &b).unwrap();
        assert_channels(&w, 0.0, &[2.0, 3.0], &[6.0], 1e-15);
    }

    #[test]
    fn wedge_errors() {
        let a = KFormField::basis(2, &[0]).unwrap();
        let b = KFormField::basis(2, &[0, 1]).unwrap();
        assert!(matches!(wedge(&a, &b), Err(Error::DegreeOverflow { .. })));
        let c = KFormField::basis(3, &[0]).unwrap();
        assert!(matches!(wedge(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn contraction_examples() {
        let e1 = VectorField::constant(&[1.0, 0.0]).unwrap();
        let vol = KFormField::basis(2, &[0, 1]).unwrap();
        assert_channels(&contract(&e1, &vol).unwrap(), 0.0, &[0.0, 0.0], &[0.0, 1.0], 0.0);

        let ab = VectorField::constant(&[2.5, -1.0]).unwrap();
        let dx1 = KFormField::basis(2, &[0]).unwrap();
        assert_channels(&contract(&ab, &dx1).unwrap(), 0.0, &[0.0, 0.0], &[2.5], 0.0);

        // X = (x2, -x1) at (1, 2): ι_X(dx1∧dx2) = X^1 dx2 - X^2 dx1 = 2 dx2 + 1 dx1
        let rot = VectorField::new(vec![x(1), x(0).neg()]).unwrap();
        assert_channels(&contract(&rot, &vol).unwrap(), 0.0, &[1.0, 2.0], &[1.0, 2.0], 0.0);

        let f = KFormField::scalar(2, Expr::one()).unwrap();
        assert_eq!(contract(&rot, &f).unwrap_err(), Error::ContractZeroForm);
    }

    #[test]
    fn exterior_derivative_examples() {
        let c = KFormField::scalar(2, Expr::constant(3.0)).unwrap();
        assert_channels(&exterior_derivative(&c).unwrap(), 0.0, &[0.4, 0.1], &[0.0, 0.0], 0.0);

        let a = KFormField::monomial(2, &[0], x(1)).unwrap();
        assert_channels(&exterior_derivative(&a).unwrap(), 0.0, &[0.4, 0.1], &[-1.0], 0.0);

        let top = KFormField::basis(2, &[0, 1]).unwrap();
        assert_eq!(exterior_derivative(&top).unwrap_err(), Error::TopDegreeDerivative);
    }

    #[test]
    fn d_squared_vanishes_in_both_modes() {
        let alpha = KFormField::monomial(2, &[0], x(0).sin().mul(&x(1))).unwrap();
        let dd = exterior_derivative(&exterior_derivative(&alpha).unwrap());
        // d of a 2-form in R^2 is not defined; use R^3 instead
        assert!(dd.is_err());
        let alpha3 = KFormField::monomial(3, &[0], x(0).sin().mul(&x(1)).add(&x(2).cos())).unwrap();
        let dd = exterior_derivative(&exterior_derivative(&alpha3).unwrap()).unwrap();
        assert_channels(&dd, 0.0, &[0.3, -0.2, 0.9], &[0.0], 1e-14);

        let h = 1e-3;
        let fd = alpha3.clone().with_mode(DerivativeMode::CentralDifference { step: h });
        let dd = exterior_derivative(&exterior_derivative(&fd).unwrap()).unwrap();
        assert_channels(&dd, 0.0, &[0.3, -0.2, 0.9], &[0.0], 1e-9);
    }

    #[test]
    fn hodge_examples() {
        let dx1 = KFormField::basis(3, &[0]).unwrap();
        assert_channels(&hodge_star(&dx1), 0.0, &[0.0; 3], &[0.0, 0.0, 1.0], 0.0);
        for n in 1..=4 {
            let one = KFormField::scalar(n, Expr::one()).unwrap();
            assert_channels(&hodge_star(&one), 0.0, &vec![0.0; n], &[1.0], 0.0);
        }
        // ⋆dx2 in R^3 = dx3∧dx1 = -dx1∧dx3
        let dx2 = KFormField::basis(3, &[1]).unwrap();
        assert_channels(&hodge_star(&dx2), 0.0, &[0.0; 3], &[0.0, -1.0, 0.0], 0.0);
    }

    #[test]
    fn hodge_inverse_undoes_star() {
        for n in 1..=4 {
            for k in 0..=n {
                let channels = (0..crate::calculus::multi_index::binomial(n, k))
                    .map(|i| x(i % n).add(&Expr::constant(i as f64)))
                    .collect();
                let a = KFormField::new(n, k, channels).unwrap();
                let back = hodge_inverse(&hodge_star(&a));
                let p: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 + 0.3).collect();
                assert_channels(&back, 0.0, &p, &a.eval(0.0, &p), 1e-15);
            }
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let rot = VectorField::new(vec![x(1).neg(), x(0)]).unwrap();
        let dx1 = KFormField::basis(2, &[0]).unwrap();
        assert_channels(&lie_derivative(&rot, &dx1).unwrap(), 0.0, &[0.7, -0.2], &[0.0, -1.0], 0.0);

        let vol = KFormField::basis(2, &[0, 1]).unwrap();
        assert_channels(&lie_derivative(&rot, &vol).unwrap(), 0.0, &[0.7, -0.2], &[0.0], 0.0);

        let radial = VectorField::new(vec![x(0), x(1)]).unwrap();
        assert_channels(&lie_derivative(&radial, &vol).unwrap(), 0.0, &[0.7, -0.2], &[2.0], 0.0);
    }

    #[test]
    fn lie_adjoint_constant_field_and_scalar_case() {
        let b = VectorField::constant(&[0.5, -2.0]).unwrap();
        let theta = KFormField::monomial(2, &[1], x(0).sin().mul(&x(1))).unwrap();
        let lt = lie_derivative_adjoint(&b, &theta).unwrap();
        let p = [0.3, 0.8];
        // -b·∇θ_2
        let expected = -(0.5 * 0.3f64.cos() * 0.8 + -2.0 * 0.3f64.sin());
        assert_channels(&lt, 0.0, &p, &[0.0, expected], 1e-14);

        // k = 0: ℒ^T θ = -div(b θ)
        let bx = VectorField::new(vec![x(0).mul(&x(1)), x(1).sin()]).unwrap();
        let f = x(0).add(&x(1).mul(&x(1)));
        let th = KFormField::scalar(2, f.clone()).unwrap();
        let lt = lie_derivative_adjoint(&bx, &th).unwrap();
        let flux0 = bx.component(0).mul(&f);
        let flux1 = bx.component(1).mul(&f);
        let div = flux0.diff(0).add(&flux1.diff(1));
        assert!((lt.eval(0.0, &p)[0] + div.eval(0.0, &p)).abs() < 1e-13);
    }

    #[test]
    fn sharp_flat_round_trip() {
        let a = KFormField::new(3, 2, vec![x(0), x(1).sin(), Expr::constant(2.0)]).unwrap();
        let back = flat(&sharp(&a));
        let p = [0.1, 0.2, 0.3];
        assert_eq!(back.eval(0.0, &p), a.eval(0.0, &p));
        let dx1 = KFormField::basis(3, &[0]).unwrap();
        assert_eq!(sharp(&dx1).eval(0.0, &p), vec![1.0, 0.0, 0.0]);
        let vol12 = KFormField::basis(2, &[0, 1]).unwrap();
        assert_eq!(sharp(&vol12).pair(&vol12, 0.0, &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn adjointness_by_quadrature() {
        use crate::calculus::field::TestForm;
        use crate::calculus::norms::l2_pairing;
        use crate::calculus::quadrature::{QuadratureGrid, Rule};
        let b = VectorField::new(vec![(x(1) * 1.3).sin() + x(0) * 0.4, (x(0) * x(0)).scale(0.5) - (x(1) * 0.7).cos()]).unwrap();
        let k = KFormField::new(2, 1, vec![(x(0) + x(1) * 0.5).sin(), (x(0) * x(1)).cos() + x(1)]).unwrap();
        let theta = TestForm::bump(2, 1, &[0.1, -0.2], 0.7, vec![Expr::one(), x(0) * 0.5 + 1.0]).unwrap();
        let residual = |g: &QuadratureGrid| {
            let lhs = l2_pairing(&lie_derivative(&b, &k).unwrap(), theta.form(), 0.0, g).unwrap();
            let rhs = l2_pairing(&k, &lie_derivative_adjoint(&b, theta.form()).unwrap(), 0.0, g).unwrap();
            (lhs - rhs, lhs)
        };
        let g = QuadratureGrid::cube(&[0.1, -0.2], 0.7, 96, Rule::GaussLegendre { order: 8 }).unwrap();
        let (coarse, lhs) = residual(&g);
        let (fine, lhs_fine) = residual(&g.refined());
        let estimate = (lhs - lhs_fine).abs();
        assert!(fine.abs() < 3.0 * estimate.max(1e-12), "{coarse} {fine} {estimate}");
        assert!(coarse.abs() < 1e-7);
    }
}
