//! ε-sweep of the drift commutator and the double noise commutator for smooth
//! fields in the plane, with the translation-invariant controls.

use kform::calculus::{KFormField, TestForm, VectorField};
use kform::mollifier::{epsilon_sweep, CommutatorKind, CommutatorSettings};
use kform::Expr;

fn main() -> kform::Result<()> {
    let x = Expr::var(0);
    let y = Expr::var(1);
    let b = VectorField::new(vec![(&y * 1.3).sin() + &x * 0.4, (&x * &x).scale(0.5) - (&y * 0.7).cos()])?;
    let k = KFormField::new(2, 1, vec![(&x + &y * 0.5).sin(), (&x * &y).cos() + &y])?;
    let theta = TestForm::bump(2, 1, &[0.1, -0.2], 0.7, vec![Expr::one(), &x * 0.5 + 1.0])?;
    let eps = [0.2, 0.1, 0.05, 0.025];
    let settings = CommutatorSettings::default();

    let started = std::time::Instant::now();
    let sweep = epsilon_sweep(&CommutatorKind::Drift(b.clone()), &k, &theta, &settings, &eps, 1e-3)?;
    for e in &sweep.evaluations {
        println!(
            "drift  eps={:<6} value={:+.6e} split={:+.6e} err={:.1e}/{:.1e} rhs={:.3e}",
            e.epsilon,
            e.value,
            e.split_value.unwrap_or(f64::NAN),
            e.error_estimate,
            e.split_error_estimate.unwrap_or(f64::NAN),
            e.bound_rhs
        );
    }
    println!(
        "drift: slope {:.3}, last/first {:.3e}, bound holds {} ({:.1?})",
        sweep.report.slope.unwrap_or(f64::NAN),
        sweep.decay_ratio,
        sweep.bound_holds,
        started.elapsed()
    );

    let started = std::time::Instant::now();
    let xi = VectorField::new(vec![(&y * 0.8).sin() * 0.6, (&x * 1.1).cos() * 0.5 + &x * 0.2])?;
    let sweep = epsilon_sweep(&CommutatorKind::DoubleNoise(xi), &k, &theta, &settings, &eps, 1e-3)?;
    for e in &sweep.evaluations {
        println!(
            "double eps={:<6} value={:+.6e} err={:.1e} rhs={:.3e}",
            e.epsilon, e.value, e.error_estimate, e.bound_rhs
        );
    }
    println!(
        "double: slope {:.3}, last/first {:.3e}, bound holds {} ({:.1?})",
        sweep.report.slope.unwrap_or(f64::NAN),
        sweep.decay_ratio,
        sweep.bound_holds,
        started.elapsed()
    );

    let control = VectorField::constant(&[0.7, -0.4])?;
    let sweep = epsilon_sweep(&CommutatorKind::Drift(control.clone()), &k, &theta, &settings, &eps, 1e-8)?;
    println!(
        "constant drift control: max |value| = {:.2e}",
        sweep.report.abs_values().iter().cloned().fold(0.0, f64::max)
    );
    let sweep = epsilon_sweep(&CommutatorKind::DoubleNoise(control), &k, &theta, &settings, &eps, 1e-8)?;
    println!(
        "constant noise control: max |value| = {:.2e}",
        sweep.report.abs_values().iter().cloned().fold(0.0, f64::max)
    );
    print!("{}", sweep.report.to_csv_string());
    Ok(())
}
