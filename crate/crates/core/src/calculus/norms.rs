//! Pointwise metric, L² pairing, L^p and Sobolev norms, Hölder probes and
//! weak-derivative residuals.

use super::field::{KFormField, TestForm, VectorField};
use super::ops::{hodge_star, wedge};
use super::quadrature::{ordered_par_max, QuadratureGrid, Rule};
use crate::error::{Error, Result};

fn check_shape(a: &KFormField, b: &KFormField) -> Result<()> {
    a.check_same_shape(b)
}

/// `⟨F, K⟩_x`: sum of channel products on increasing multi-indices.
pub fn inner_product_pointwise(f: &KFormField, k: &KFormField, t: f64, x: &[f64]) -> Result<f64> {
    check_shape(f, k)?;
    Ok(f.channels()
        .iter()
        .zip(k.channels())
        .map(|(a, b)| a.eval(t, x) * b.eval(t, x))
        .sum())
}

/// `|K(x)|_x`.
pub fn pointwise_norm(k: &KFormField, t: f64, x: &[f64]) -> f64 {
    k.channels().iter().map(|c| c.eval(t, x).powi(2)).sum::<f64>().sqrt()
}

/// `⟨⟨F, K⟩⟩ = ∫ ⟨F, K⟩_x dx` by quadrature over `grid`.
pub fn l2_pairing(f: &KFormField, k: &KFormField, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    check_shape(f, k)?;
    if grid.dim() != f.n() {
        return Err(Error::DimensionMismatch {
            left: grid.dim(),
            right: f.n(),
        });
    }
    Ok(grid.integrate(|x| {
        f.channels()
            .iter()
            .zip(k.channels())
            .map(|(a, b)| {
                let bv = b.eval(t, x);
                if bv == 0.0 {
                    0.0
                } else {
                    a.eval(t, x) * bv
                }
            })
            .sum()
    }))
}

/// Pairing against a compactly supported test form; the grid must cover its support.
pub fn pair_with_test(k: &KFormField, theta: &TestForm, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    if !grid.contains_ball(theta.center(), theta.radius()) {
        return Err(Error::SupportOutsideGrid);
    }
    l2_pairing(k, theta.form(), t, grid)
}

/// `∫ β ∧ ⋆α` (top-degree channel integrated over the box).
pub fn hodge_pairing(beta: &KFormField, alpha: &KFormField, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    let top = wedge(beta, &hodge_star(alpha))?;
    Ok(grid.integrate(|x| top.channels()[0].eval(t, x)))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

/// `‖K‖_{L^p}` over the grid box; `p = f64::INFINITY` takes the max over nodes.
pub fn lp_norm(k: &KFormField, p: f64, t: f64, grid: &QuadratureGrid) -> Result<f64> {
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(grid.max_over_nodes(|x| pointwise_norm(k, t, x)));
    }
    Ok(grid.integrate(|x| pointwise_norm(k, t, x).powf(p)).powf(1.0 / p))
}

/// `‖K‖_{L^p(B(center, radius))}` using a Gauss–Legendre grid on the bounding
/// cube with the ball indicator.
pub fn lp_norm_ball(k: &KFormField, p: f64, t: f64, center: &[f64], radius: f64, points_per_axis: usize) -> Result<f64> {
    check_exponent(p)?;
    let grid = ball_grid(center, radius, points_per_axis)?;
    let r2 = radius * radius;
    let inside = |x: &[f64]| x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() <= r2;
    if p.is_infinite() {
        return Ok(grid.max_over_nodes(|x| if inside(x) { pointwise_norm(k, t, x) } else { 0.0 }));
    }
    Ok(grid
        .integrate(|x| if inside(x) { pointwise_norm(k, t, x).powf(p) } else { 0.0 })
        .powf(1.0 / p))
}

fn ball_grid(center: &[f64], radius: f64, points_per_axis: usize) -> Result<QuadratureGrid> {
    let order = if points_per_axis.is_multiple_of(4) { 4 } else { 1 };
    let rule = if order == 1 {
        Rule::Midpoint
    } else {
        Rule::GaussLegendre { order }
    };
    QuadratureGrid::cube(center, radius, points_per_axis, rule)
}

/// `‖b‖_{L^∞(B)}` estimated on the nodes of a cube grid covering the ball.
pub fn vector_sup_ball(b: &VectorField, t: f64, center: &[f64], radius: f64, points_per_axis: usize) -> Result<f64> {
    let grid = ball_grid(center, radius, points_per_axis)?;
    let r2 = radius * radius;
    Ok(grid.max_over_nodes(|x| {
        if x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() > r2 {
            return 0.0;
        }
        b.eval_vec(t, x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }))
}

/// `‖Db‖_{L^∞(B)}` (Frobenius) estimated on grid nodes.
pub fn jacobian_sup_ball(b: &VectorField, t: f64, center: &[f64], radius: f64, points_per_axis: usize) -> Result<f64> {
    let grid = ball_grid(center, radius, points_per_axis)?;
    let r2 = radius * radius;
    let n = b.n();
    Ok(grid.max_over_nodes(|x| {
        if x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() > r2 {
            return 0.0;
        }
        let mut jac = vec![0.0; n * n];
        b.eval_jacobian(t, x, &mut jac);
        jac.iter().map(|v| v * v).sum::<f64>().sqrt()
    }))
}

/// `∫_B |b| + |Db|_F`.
pub fn w11_norm_ball(b: &VectorField, t: f64, center: &[f64], radius: f64, points_per_axis: usize) -> Result<f64> {
    let grid = ball_grid(center, radius, points_per_axis)?;
    let r2 = radius * radius;
    let n = b.n();
    Ok(grid.integrate(|x| {
        if x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() > r2 {
            return 0.0;
        }
        let v = b.eval_vec(t, x);
        let mut jac = vec![0.0; n * n];
        b.eval_jacobian(t, x, &mut jac);
        v.iter().map(|a| a * a).sum::<f64>().sqrt() + jac.iter().map(|a| a * a).sum::<f64>().sqrt()
    }))
}

/// Anything that can be sampled as a vector of reals at `(t, x)`.
pub trait Sampled {
    fn sample(&self, t: f64, x: &[f64]) -> Vec<f64>;
}

impl Sampled for KFormField {
    fn sample(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.eval(t, x)
    }
}

impl Sampled for VectorField {
    fn sample(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.eval_vec(t, x)
    }
}

/// Lower bound on the α-Hölder seminorm: `max |K(x)−K(y)| / |x−y|^α` over the probe pairs.
pub fn holder_seminorm_estimate<F: Sampled + Sync + ?Sized>(field: &F, alpha: f64, t: f64, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidHolderExponent(alpha));
    }
    if let Some((x, _)) = probes.iter().find(|(x, y)| x == y) {
        return Err(Error::CoincidentProbes(x.clone()));
    }
    Ok(ordered_par_max(probes.len(), |i| {
        let (x, y) = &probes[i];
        let fx = field.sample(t, x);
        let fy = field.sample(t, y);
        let diff = fx.iter().zip(&fy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        diff / dist.powf(alpha)
    }))
}

/// `max_{θ, i} |⟨⟨S_i, θ⟩⟩ + ⟨⟨K, ∂_i θ⟩⟩|` for candidate weak derivatives `S_i`.
pub fn weak_derivative_check(k: &KFormField, s: &[KFormField], t: f64, grid: &QuadratureGrid, test_forms: &[TestForm]) -> Result<f64> {
    if s.len() != k.n() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} directional derivatives, got {}",
            k.n(),
            s.len()
        )));
    }
    let mut worst = 0.0f64;
    for theta in test_forms {
        for (i, si) in s.iter().enumerate() {
            let lhs = pair_with_test(si, theta, t, grid)?;
            let rhs = l2_pairing(k, &theta.form().partial(i), t, grid)?;
            worst = worst.max((lhs + rhs).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn unit_box(n: usize, pts: usize) -> QuadratureGrid {
        QuadratureGrid::new(&vec![0.0; n], &vec![1.0; n], pts, Rule::GaussLegendre { order: 4 }).unwrap()
    }

    #[test]
    fn basis_inner_products() {
        let e1 = KFormField::basis(2, &[0]).unwrap();
        let e2 = KFormField::basis(2, &[1]).unwrap();
        assert_eq!(inner_product_pointwise(&e1, &e1, 0.0, &[0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(inner_product_pointwise(&e1, &e2, 0.0, &[0.3, 0.1]).unwrap(), 0.0);
        assert!(inner_product_pointwise(&e1, &KFormField::zero(2, 2).unwrap(), 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_norms() {
        let c = KFormField::scalar(2, Expr::constant(-3.0)).unwrap();
        let g = unit_box(2, 8);
        assert!((lp_norm(&c, 2.0, 0.0, &g).unwrap() - 3.0).abs() < 1e-12);
        assert!((lp_norm(&c, f64::INFINITY, 0.0, &g).unwrap() - 3.0).abs() < 1e-12);
        let s = KFormField::new(2, 1, vec![Expr::one(), Expr::one()]).unwrap();
        assert!((lp_norm(&s, 2.0, 0.0, &g).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(lp_norm(&c, 0.5, 0.0, &g), Err(Error::InvalidExponent(0.5)));
    }

    #[test]
    fn norm_is_homogeneous() {
        let tf = TestForm::bump(2, 0, &[0.5, 0.5], 0.4, vec![Expr::one()]).unwrap();
        let g = unit_box(2, 16);
        let a = lp_norm(tf.form(), 3.0, 0.0, &g).unwrap();
        let b = lp_norm(&tf.form().scale(2.0), 3.0, 0.0, &g).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn ball_norm_of_constant() {
        let c = KFormField::scalar(2, Expr::constant(2.0)).unwrap();
        let v = lp_norm_ball(&c, 1.0, 0.0, &[0.0, 0.0], 1.0, 64).unwrap();
        assert!((v - 2.0 * std::f64::consts::PI).abs() < 0.05);
    }

    #[test]
    fn holder_estimates() {
        let lin = VectorField::new(vec![Expr::var(0).scale(2.5)]).unwrap();
        let probes = vec![(vec![0.0], vec![1.0]), (vec![-0.3], vec![0.2])];
        assert!((holder_seminorm_estimate(&lin, 1.0, 0.0, &probes).unwrap() - 2.5).abs() < 1e-14);

        // √|x| has 1/2-Hölder constant 1, attained on pairs (0, y)
        let root = KFormField::scalar(1, Expr::var(0).abs().sqrt()).unwrap();
        let probes: Vec<_> = (1..50)
            .flat_map(|i| {
                let y = i as f64 / 50.0;
                [(vec![-y], vec![y]), (vec![0.0], vec![y])]
            })
            .collect();
        let h = holder_seminorm_estimate(&root, 0.5, 0.0, &probes).unwrap();
        assert!((h - 1.0).abs() < 1e-12);

        assert!(holder_seminorm_estimate(&root, 0.0, 0.0, &probes).is_err());
        assert!(matches!(
            holder_seminorm_estimate(&root, 0.5, 0.0, &[(vec![0.1], vec![0.1])]),
            Err(Error::CoincidentProbes(_))
        ));
    }

    #[test]
    fn weak_derivatives() {
        let g = QuadratureGrid::new(&[-1.0], &[1.0], 512, Rule::GaussLegendre { order: 4 }).unwrap();
        let tests: Vec<TestForm> = [(-0.3, 0.5), (0.1, 0.6), (0.0, 0.9)]
            .iter()
            .map(|&(c, r)| TestForm::bump(1, 0, &[c], r, vec![Expr::one().add(&Expr::var(0))]).unwrap())
            .collect();

        let smooth = KFormField::scalar(1, Expr::var(0).sin()).unwrap();
        let ds = vec![smooth.partial(0)];
        assert!(weak_derivative_check(&smooth, &ds, 0.0, &g, &tests).unwrap() < 1e-7);

        let abs = KFormField::scalar(1, Expr::var(0).abs()).unwrap();
        let sign = vec![KFormField::scalar(1, Expr::var(0).sign()).unwrap()];
        assert!(weak_derivative_check(&abs, &sign, 0.0, &g, &tests).unwrap() < 1e-5);

        let wrong = vec![KFormField::scalar(1, Expr::one()).unwrap()];
        assert!(weak_derivative_check(&abs, &wrong, 0.0, &g, &tests).unwrap() > 1e-2);
    }
}
