//! Itô weak form of the advection equation, evaluated on the pushforward
//! solution:
//!
//! `⟨⟨K_t,θ⟩⟩ − ⟨⟨K_0,θ⟩⟩ + ∫⟨⟨K_s, ℒ_b^Tθ⟩⟩ds + Σ_k ∫⟨⟨K_s, ℒ_{ξ_k}^Tθ⟩⟩dW^k
//!   − ½ Σ_k ∫⟨⟨K_s, ℒ_{ξ_k}^T ℒ_{ξ_k}^Tθ⟩⟩ds`,
//!
//! with left-point (Itô) sums in time.

use rayon::prelude::*;
use serde::Serialize;

use super::solution::pushforward_pairings;
use crate::calculus::field::{KFormField, TestForm};
use crate::calculus::ops::lie_derivative_adjoint;
use crate::calculus::quadrature::QuadratureGrid;
use crate::error::{Error, Result};
use crate::flow::{BrownianPaths, FlowSystem, Scheme};
use crate::report::ConvergenceReport;

/// Terms of the weak form on one path at the final time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathResidual {
    pub path: usize,
    /// `⟨⟨K_t,θ⟩⟩ − ⟨⟨K_0,θ⟩⟩`.
    pub pairing_change: f64,
    pub drift: f64,
    pub martingale: f64,
    pub correction: f64,
    pub residual: f64,
    /// Residual at every grid time.
    pub series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakResidualReport {
    pub dt: f64,
    pub paths: Vec<PathResidual>,
    pub flagged: usize,
    /// Root mean square of the final residual over retained paths.
    pub rms: f64,
    /// `|rms(grid) − rms(refined grid)|` when requested, else 0.
    pub error_estimate: f64,
}

struct Tests {
    forms: Vec<KFormField>,
    noise: usize,
}

fn build_tests(system: &FlowSystem, theta: &KFormField) -> Result<Tests> {
    let mut forms = vec![theta.clone(), lie_derivative_adjoint(system.drift(), theta)?];
    for xi in system.noise() {
        forms.push(lie_derivative_adjoint(xi, theta)?);
    }
    for xi in system.noise() {
        let once = lie_derivative_adjoint(xi, theta)?;
        forms.push(lie_derivative_adjoint(xi, &once)?);
    }
    Ok(Tests {
        forms,
        noise: system.noise().len(),
    })
}

fn assemble(path: usize, pairings: &[f64], tests: &Tests, paths: &BrownianPaths) -> PathResidual {
    let m = tests.forms.len();
    let nk = tests.noise;
    let grid = paths.grid();
    let steps = grid.steps();
    let at = |node: usize, f: usize| pairings[node * m + f];
    let mut drift = 0.0;
    let mut martingale = 0.0;
    let mut correction = 0.0;
    let mut series = Vec::with_capacity(steps + 1);
    series.push(0.0);
    for j in 0..steps {
        let dt = grid.dt(j);
        drift += at(j, 1) * dt;
        for k in 0..nk {
            martingale += at(j, 2 + k) * paths.increment(path, j, k);
            correction -= 0.5 * at(j, 2 + nk + k) * dt;
        }
        series.push(at(j + 1, 0) - at(0, 0) + drift + martingale + correction);
    }
    let pairing_change = at(steps, 0) - at(0, 0);
    PathResidual {
        path,
        pairing_change,
        drift,
        martingale,
        correction,
        residual: *series.last().unwrap(),
        series,
    }
}

fn residual_on_grid(
    k0: &KFormField,
    system: &FlowSystem,
    paths: &BrownianPaths,
    tests: &Tests,
    grid: &QuadratureGrid,
    scheme: Scheme,
) -> Result<(Vec<PathResidual>, usize)> {
    let rows: Vec<Option<PathResidual>> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| -> Result<Option<PathResidual>> {
            Ok(pushforward_pairings(k0, system, scheme, paths, p, &tests.forms, grid)?.map(|pair| assemble(p, &pair, tests, paths)))
        })
        .collect::<Result<_>>()?;
    let flagged = rows.iter().filter(|r| r.is_none()).count();
    if flagged * 100 > rows.len() {
        return Err(Error::TooManyFlagged {
            flagged,
            total: rows.len(),
        });
    }
    Ok((rows.into_iter().flatten().collect(), flagged))
}

fn rms(rows: &[PathResidual]) -> f64 {
    (rows.iter().map(|r| r.residual * r.residual).sum::<f64>() / rows.len().max(1) as f64).sqrt()
}

/// Weak-form residual of the pushforward solution on every path.
///
/// `grid` is the Lagrangian quadrature grid (it must cover the support of
/// `K₀`, or the preimage of the test support when `K₀` is not compactly
/// supported); `estimate_error` repeats the computation on the refined grid.
pub fn weak_residual(
    k0: &KFormField,
    system: &FlowSystem,
    paths: &BrownianPaths,
    theta: &TestForm,
    grid: &QuadratureGrid,
    scheme: Scheme,
    estimate_error: bool,
) -> Result<WeakResidualReport> {
    if !grid.contains_ball(theta.center(), theta.radius()) {
        return Err(Error::SupportOutsideGrid);
    }
    let tests = build_tests(system, theta.form())?;
    let (rows, flagged) = residual_on_grid(k0, system, paths, &tests, grid, scheme)?;
    let r = rms(&rows);
    let error_estimate = if estimate_error {
        let (fine, _) = residual_on_grid(k0, system, paths, &tests, &grid.refined(), scheme)?;
        (rms(&fine) - r).abs()
    } else {
        0.0
    };
    Ok(WeakResidualReport {
        dt: paths.grid().dt(0),
        paths: rows,
        flagged,
        rms: r,
        error_estimate,
    })
}

/// RMS weak residual over a ladder of coupled time grids.
pub fn weak_residual_sweep(
    k0: &KFormField,
    system: &FlowSystem,
    ladder: &[BrownianPaths],
    theta: &TestForm,
    grid: &QuadratureGrid,
    scheme: Scheme,
) -> Result<ConvergenceReport> {
    let mut report = ConvergenceReport::new("weak-residual", "dt", &["paths"]);
    for paths in ladder {
        let r = weak_residual(k0, system, paths, theta, grid, scheme, false)?;
        report.push(r.dt, r.rms, r.error_estimate, vec![r.paths.len() as f64]);
    }
    report.fit();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::field::VectorField;
    use crate::calculus::quadrature::Rule;
    use crate::expr::Expr;
    use crate::flow::{refinement_ladder, TimeGrid};

    fn setup() -> (KFormField, TestForm, QuadratureGrid) {
        let g = Expr::dist_sq(&[0.1, 0.0]).scale(-2.0).exp();
        let k0 = KFormField::new(2, 1, vec![g.clone(), g.mul(&Expr::var(0))]).unwrap();
        let theta = TestForm::bump(2, 1, &[0.2, 0.1], 1.2, vec![Expr::one(), Expr::var(1).cos()]).unwrap();
        let grid = QuadratureGrid::cube(&[0.1, 0.0], 2.6, 12, Rule::GaussLegendre { order: 4 }).unwrap();
        (k0, theta, grid)
    }

    #[test]
    fn static_field_has_zero_residual() {
        let (k0, theta, grid) = setup();
        let sys = FlowSystem::deterministic(VectorField::zero(2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 4).unwrap(), 1);
        let r = weak_residual(&k0, &sys, &paths, &theta, &grid, Scheme::Heun, false).unwrap();
        assert!(r.rms < 1e-15);
    }

    #[test]
    fn deterministic_transport_residual_is_first_order() {
        let (k0, theta, grid) = setup();
        let b = VectorField::new(vec![Expr::var(1).scale(0.8), Expr::var(0).sin().scale(-0.6)]).unwrap();
        let sys = FlowSystem::deterministic(b).unwrap();
        let ladder = refinement_ladder(&BrownianPaths::zero(0, &TimeGrid::uniform(0.5, 4).unwrap(), 1), 3).unwrap();
        let rep = weak_residual_sweep(&k0, &sys, &ladder, &theta, &grid, Scheme::Heun).unwrap();
        assert!(rep.slope.unwrap() > 0.9, "{:?}", rep.values());
    }

    #[test]
    fn support_must_fit() {
        let (k0, _, grid) = setup();
        let far = TestForm::bump(2, 1, &[2.5, 0.0], 1.0, vec![Expr::one(), Expr::one()]).unwrap();
        let sys = FlowSystem::deterministic(VectorField::zero(2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 2).unwrap(), 1);
        assert_eq!(
            weak_residual(&k0, &sys, &paths, &far, &grid, Scheme::Heun, false).unwrap_err(),
            Error::SupportOutsideGrid
        );
    }
}
