//! Integrals of a transported form over a transported chain do not change:
//! a 2-form over a rectangle under a rotation, then a 1-form along a broken
//! line under a noisy flow.

use kform::advection::{conservation_check, AffineSimplexSpec, Chain};
use kform::calculus::{KFormField, VectorField};
use kform::flow::{BrownianPaths, FlowSystem, Scheme, TimeGrid};
use kform::Expr;

fn main() -> kform::Result<()> {
    let (x, y) = (Expr::var(0), Expr::var(1));
    let rotation = VectorField::new(vec![y.neg(), x.clone()])?;
    let density = Expr::dist_sq(&[0.3, 0.3]).scale(-1.0 / 0.64).exp();
    let area = KFormField::top(2, density)?;
    let rect = Chain::rectangle([-0.5, -0.4], [0.6, 0.5], 5)?;
    let quiet = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 128)?, 1);
    let r = conservation_check(&area, &rect, &FlowSystem::deterministic(rotation.clone())?, &quiet, Scheme::Heun)?;
    println!(
        "rectangle: initial {:.8}, transported {:.8}, gap {:.1e}",
        r.initial, r.pushed[0], r.max_gap
    );

    let line = Chain::affine(
        2,
        &[
            AffineSimplexSpec {
                vertices: vec![vec![-0.5, 0.0], vec![0.4, 0.3]],
                sign: 1.0,
            },
            AffineSimplexSpec {
                vertices: vec![vec![0.4, 0.3], vec![0.1, 0.8]],
                sign: 1.0,
            },
        ],
        5,
    )?;
    let one_form = KFormField::new(2, 1, vec![x.cos(), &x * &y + 1.0])?;
    let noisy = FlowSystem::new(rotation, vec![VectorField::new(vec![Expr::constant(0.3), x.sin() * 0.2])?])?;
    for steps in [8, 16, 32, 64] {
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, steps)?, 3, 32)?;
        let r = conservation_check(&one_form, &line, &noisy, &paths, Scheme::Heun)?;
        println!("broken line, {steps:>3} steps: rms relative gap {:.2e}", r.rms_gap);
    }
    Ok(())
}
