//! The pushforward of a 1-form by a stochastic flow satisfies the weak form
//! of the advection equation: the residual against a bump test form shrinks
//! as the time step is refined.

use kform::advection::{solve_pushforward, weak_residual_sweep};
use kform::calculus::{KFormField, QuadratureGrid, Rule, TestForm, VectorField};
use kform::flow::{refinement_ladder, BrownianPaths, FlowSystem, Scheme, TimeGrid};
use kform::Expr;

fn main() -> kform::Result<()> {
    let (x, y) = (Expr::var(0), Expr::var(1));
    let g = Expr::dist_sq(&[0.1, 0.0]).neg().exp();
    let k0 = KFormField::new(2, 1, vec![g.clone(), &g * &x])?;
    let drift = VectorField::new(vec![&y * 0.8, x.sin() * -0.6])?;
    let noise = VectorField::new(vec![Expr::constant(0.4), x.cos() * 0.3])?;
    let system = FlowSystem::new(drift, vec![noise])?;

    let theta = TestForm::bump(2, 1, &[0.2, 0.1], 1.2, vec![Expr::one(), Expr::one()])?;
    let grid = QuadratureGrid::cube(theta.center(), 2.6, 12, Rule::GaussLegendre { order: 4 })?;

    let coarse = TimeGrid::uniform(0.5, 4)?;
    let ladder = refinement_ladder(&BrownianPaths::generate(1, &coarse, 11, 32)?, 4)?;
    let report = weak_residual_sweep(&k0, &system, &ladder, &theta, &grid, Scheme::Heun)?;
    print!("{}", report.to_csv_string());
    println!("rms residual slope in dt: {:.3}", report.slope.unwrap_or(f64::NAN));

    // The solution itself, on the first path of the finest level.
    let finest = &ladder[ladder.len() - 1];
    let sol = solve_pushforward(&k0, &system, finest, Scheme::Heun, 0.5)?;
    for p in [[0.0, 0.0], [0.5, -0.3]] {
        println!("K_t({p:?}) = {:?}", sol.eval(0, &p)?);
    }
    Ok(())
}
