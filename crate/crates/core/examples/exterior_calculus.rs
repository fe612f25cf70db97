//! Forms on R³: exterior derivative, wedge, Hodge star and the Lie derivative
//! through Cartan's formula, evaluated at a point. Ends with the randomised
//! identity suite.

use kform::calculus::identities::{identity_suite, IdentitySettings};
use kform::calculus::{contract, exterior_derivative, hodge_star, lie_derivative, wedge, KFormField, VectorField};
use kform::Expr;

fn main() -> kform::Result<()> {
    let (x, y, z) = (Expr::var(0), Expr::var(1), Expr::var(2));
    let p = [0.3, -0.7, 0.5];

    // α = sin(xy) dx + z² dy + e^x dz
    let alpha = KFormField::new(3, 1, vec![(&x * &y).sin(), &z * &z, x.exp()])?;
    let d_alpha = exterior_derivative(&alpha)?;
    let dd_alpha = exterior_derivative(&d_alpha)?;
    println!("dα(p)   = {:?}", d_alpha.eval(0.0, &p));
    println!("ddα(p)  = {:?}", dd_alpha.eval(0.0, &p));

    let beta = KFormField::new(3, 1, vec![Expr::one(), &x * 2.0, y.cos()])?;
    println!("α∧β(p)  = {:?}", wedge(&alpha, &beta)?.eval(0.0, &p));
    println!("⋆α(p)   = {:?}", hodge_star(&alpha).eval(0.0, &p));
    println!("⋆⋆α(p)  = {:?}", hodge_star(&hodge_star(&alpha)).eval(0.0, &p));

    // ℒ_b α against d ι_b α + ι_b dα.
    let b = VectorField::new(vec![y.clone(), x.neg(), (&x * &z).sin() * 0.5])?;
    let direct = lie_derivative(&b, &alpha)?.eval(0.0, &p);
    let cartan = exterior_derivative(&contract(&b, &alpha)?)?
        .add(&contract(&b, &d_alpha)?)?
        .eval(0.0, &p);
    let gap = direct.iter().zip(&cartan).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    println!("ℒ_b α(p) = {direct:?}, Cartan gap {gap:.1e}");

    let settings = IdentitySettings {
        cases: 8,
        ..Default::default()
    };
    for check in identity_suite(&settings)? {
        println!(
            "{:<22} cases {:>3}  max residual {:.2e}  tolerance {:.0e}  {}",
            check.name,
            check.cases,
            check.max_residual,
            check.tolerance,
            if check.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
