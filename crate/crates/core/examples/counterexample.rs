//! Non-uniqueness for a Hölder drift without noise: two choices of the
//! solution inside the ball reached from the origin both solve the weak
//! equation, yet differ by an amount fixed by the choice.

use kform::calculus::TestForm;
use kform::counterexample::{counterexample_study, gaussian_datum, holder_probe_stability, GammaSelection, HolderDrift, PolarQuadrature};
use kform::Expr;

fn main() -> kform::Result<()> {
    let drift = HolderDrift::new(0.5, 10.0, 2)?;
    for t in [0.25, 0.5, 0.9] {
        println!("ball radius at t = {t}: {:.4}", drift.ball_radius(t));
    }
    let probe = holder_probe_stability(&drift, 4000, 1)?;
    println!("Hölder ratio {:.4} -> {:.4} under 4x probes", probe.coarse, probe.fine);

    let k0 = gaussian_datum(&[0.2, -0.1], 1.0)?;
    let theta = TestForm::bump(2, 0, &[0.3, 0.1], 1.2, vec![Expr::one()])?;
    let selections = [GammaSelection::Zero, GammaSelection::Constant { value: vec![0.8] }];
    let report = counterexample_study(&drift, &k0, &selections, &theta, (0.25, 0.9), &PolarQuadrature::default(), 2)?;
    for s in &report.selections {
        println!("{:<9} relative residual per level {:?}", s.selection, s.relative);
    }
    println!(
        "L2 distance {:.6}, analytic {:.6}",
        report.distance,
        report.analytic_distance.unwrap_or(f64::NAN)
    );
    Ok(())
}
