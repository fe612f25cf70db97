//! The pushforward solution `K(t) = (φ_t)_* K₀` and the flow-following
//! quadratures used by the residual checks.
//!
//! Pairings of the solution with test forms are computed in Lagrangian
//! coordinates: with `x = φ_t(y)`,
//! `⟨⟨(φ_t)_*K₀, T⟩⟩ = ∫ ⟨(Dφ_t(y)^{-1})^* K₀(y), T(φ_t(y))⟩ det Dφ_t(y) dy`,
//! so one forward trajectory per quadrature node serves every time level.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::calculus::field::KFormField;
use crate::calculus::maps::pull_coefficients;
use crate::calculus::quadrature::QuadratureGrid;
use crate::error::{Error, Result};
use crate::flow::{flow_endpoint, integrate_path, BrownianPaths, Direction, FlowEnsemble, FlowState, FlowSystem, PathOutcome, Scheme};

/// Inverse of a small row-major matrix (`None` if singular).
pub fn invert(m: &[f64], n: usize) -> Option<Vec<f64>> {
    match n {
        1 => (m[0] != 0.0).then(|| vec![1.0 / m[0]]),
        2 => {
            let d = m[0] * m[3] - m[1] * m[2];
            (d != 0.0).then(|| vec![m[3] / d, -m[1] / d, -m[2] / d, m[0] / d])
        }
        _ => DMatrix::from_row_slice(n, n, m)
            .try_inverse()
            .map(|inv| inv.transpose().as_slice().to_vec()),
    }
}

/// Coefficients of `(φ_* K₀)` at `φ(y)` from `K₀(y)` and `Dφ(y)`.
pub fn push_coefficients(n: usize, k: usize, k0_at_y: &[f64], jac: &[f64]) -> Result<Vec<f64>> {
    let inv = invert(jac, n).ok_or_else(|| Error::InvalidParameter("singular flow Jacobian".into()))?;
    Ok(pull_coefficients(n, k, k0_at_y, &inv))
}

/// `(φ_t)_* K₀` along every path of `paths`, evaluated pointwise through the
/// backward flow `ψ_t = φ_t^{-1}` started at the evaluation point.
#[derive(Clone)]
pub struct PushforwardSolution {
    k0: KFormField,
    system: FlowSystem,
    scheme: Scheme,
    paths: BrownianPaths,
    node: usize,
}

/// Solution at grid time `t`; [`Error::TimeOffGrid`] otherwise.
pub fn solve_pushforward(
    k0: &KFormField,
    system: &FlowSystem,
    paths: &BrownianPaths,
    scheme: Scheme,
    t: f64,
) -> Result<PushforwardSolution> {
    if k0.n() != system.n() {
        return Err(Error::DimensionMismatch {
            left: k0.n(),
            right: system.n(),
        });
    }
    let node = paths.grid().index_of(t)?;
    Ok(PushforwardSolution {
        k0: k0.clone(),
        system: system.clone(),
        scheme,
        paths: paths.clone(),
        node,
    })
}

impl PushforwardSolution {
    pub fn time(&self) -> f64 {
        self.paths.grid().times()[self.node]
    }

    pub fn n_paths(&self) -> usize {
        self.paths.n_paths()
    }

    /// `ψ_t(x)` and `Dψ_t(x)` along `path` (`None` if the trajectory was flagged).
    pub fn inverse_flow(&self, path: usize, x: &[f64]) -> Result<Option<FlowState>> {
        let mut last = None;
        let out = integrate_path(
            &self.system,
            self.scheme,
            Direction::Backward,
            self.paths.grid(),
            self.paths.path(path),
            self.paths.drivers(),
            x,
            (0, self.node),
            |_, s| last = Some(s.clone()),
        )?;
        Ok(match out {
            PathOutcome::Completed => last,
            PathOutcome::Flagged(_) => None,
        })
    }

    /// `K(t, x)` on `path`: `K₀(ψ(x))` pulled back through `Dψ(x)`.
    pub fn eval(&self, path: usize, x: &[f64]) -> Result<Vec<f64>> {
        let psi = self
            .inverse_flow(path, x)?
            .ok_or_else(|| Error::InvalidParameter(format!("backward trajectory from {x:?} was flagged")))?;
        let c = self.k0.eval(0.0, &psi.x);
        Ok(pull_coefficients(self.k0.n(), self.k0.degree(), &c, &psi.jac))
    }

    /// The solution on one path as a field (non-finite where the backward
    /// trajectory fails). The field ignores its time argument.
    pub fn field(&self, path: usize) -> Result<KFormField> {
        let me = self.clone();
        let f = Arc::new(move |_t: f64, x: &[f64], out: &mut [f64]| match me.eval(path, x) {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        });
        KFormField::from_fn(self.k0.n(), self.k0.degree(), "pushforward", f)
    }
}

/// Solution values at the starting points of a backward ensemble (which
/// start at the final time and hold `ψ_T`, `Dψ_T` in their last slot).
/// Returns `[path][point]` channel vectors, `None` for flagged paths.
pub fn pushforward_from_backward(k0: &KFormField, ens: &FlowEnsemble) -> Result<Vec<Option<Vec<Vec<f64>>>>> {
    if ens.direction() != Direction::Backward {
        return Err(Error::InvalidParameter("ensemble must be a backward flow".into()));
    }
    let (n, k) = (k0.n(), k0.degree());
    Ok((0..ens.n_paths())
        .map(|p| {
            if ens.is_flagged(p) {
                return None;
            }
            Some(
                (0..ens.initial_points().len())
                    .map(|i| {
                        let s = ens.final_state(p, i).expect("retained path");
                        pull_coefficients(n, k, &k0.eval(0.0, &s.x), &s.jac)
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Runs every quadrature node of `grid` forward along `path` and accumulates
/// `visit(y, weight, node, state, acc)` into `acc[node * m .. (node + 1) * m]`.
/// Returns `None` if any trajectory is flagged.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_along_flow<F>(
    system: &FlowSystem,
    scheme: Scheme,
    paths: &BrownianPaths,
    path: usize,
    grid: &QuadratureGrid,
    m: usize,
    visit: F,
) -> Result<Option<Vec<f64>>>
where
    F: Fn(&[f64], f64, usize, &FlowState, &mut [f64]),
{
    let g = paths.grid();
    let steps = g.steps();
    let mut acc = vec![0.0; (steps + 1) * m];
    for i in 0..grid.len() {
        let y = grid.node(i);
        let w = grid.weight(i);
        let out = integrate_path(
            system,
            scheme,
            Direction::Forward,
            g,
            paths.path(path),
            paths.drivers(),
            y,
            (0, steps),
            |node, state| visit(y, w, node, state, &mut acc[node * m..(node + 1) * m]),
        )?;
        if let PathOutcome::Flagged(_) = out {
            return Ok(None);
        }
    }
    Ok(Some(acc))
}

/// `⟨⟨K(t_j), T_m(t_j)⟩⟩` for every grid time and test form, on one path.
/// Layout `[node][m]`; `None` if the path is flagged.
pub fn pushforward_pairings(
    k0: &KFormField,
    system: &FlowSystem,
    scheme: Scheme,
    paths: &BrownianPaths,
    path: usize,
    tests: &[KFormField],
    grid: &QuadratureGrid,
) -> Result<Option<Vec<f64>>> {
    let (n, k) = (k0.n(), k0.degree());
    for t in tests {
        k0.check_same_shape(t)?;
    }
    let times = paths.grid().times().to_vec();
    let m = tests.len();
    let failed = std::sync::atomic::AtomicBool::new(false);
    let res = accumulate_along_flow(system, scheme, paths, path, grid, m, |y, w, node, state, acc| {
        let c = k0.eval(0.0, y);
        if c.iter().all(|v| *v == 0.0) {
            return;
        }
        let Ok(pushed) = push_coefficients(n, k, &c, &state.jac) else {
            failed.store(true, std::sync::atomic::Ordering::Relaxed);
            return;
        };
        let jw = state.det() * w;
        for (a, t) in acc.iter_mut().zip(tests) {
            let tv = t.eval(times[node], &state.x);
            *a += jw * tv.iter().zip(&pushed).map(|(u, v)| u * v).sum::<f64>();
        }
    })?;
    if failed.into_inner() {
        return Ok(None);
    }
    Ok(res)
}

/// `⟨⟨φ_{t_j}^* F_m(t_j), θ⟩⟩` for every grid time and form, on one path.
pub fn pullback_pairings(
    forms: &[KFormField],
    theta: &KFormField,
    system: &FlowSystem,
    scheme: Scheme,
    paths: &BrownianPaths,
    path: usize,
    grid: &QuadratureGrid,
) -> Result<Option<Vec<f64>>> {
    let (n, k) = (theta.n(), theta.degree());
    for f in forms {
        theta.check_same_shape(f)?;
    }
    let times = paths.grid().times().to_vec();
    accumulate_along_flow(system, scheme, paths, path, grid, forms.len(), |y, w, node, state, acc| {
        let th = theta.eval(0.0, y);
        if th.iter().all(|v| *v == 0.0) {
            return;
        }
        for (a, f) in acc.iter_mut().zip(forms) {
            let pulled = pull_coefficients(n, k, &f.eval(times[node], &state.x), &state.jac);
            *a += w * th.iter().zip(&pulled).map(|(u, v)| u * v).sum::<f64>();
        }
    })
}

/// Pointwise linearity check of the solution map at the given points:
/// `max |S(aK + bK')(x) − a S(K)(x) − b S(K')(x)|`.
#[allow(clippy::too_many_arguments)]
pub fn linearity_defect(
    k: &KFormField,
    k_prime: &KFormField,
    a: f64,
    b: f64,
    system: &FlowSystem,
    paths: &BrownianPaths,
    scheme: Scheme,
    points: &[Vec<f64>],
) -> Result<f64> {
    let combo = k.scale(a).add(&k_prime.scale(b))?;
    let t = paths.grid().end();
    let s = solve_pushforward(&combo, system, paths, scheme, t)?;
    let s1 = solve_pushforward(k, system, paths, scheme, t)?;
    let s2 = solve_pushforward(k_prime, system, paths, scheme, t)?;
    let worst: Vec<f64> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut w = 0.0f64;
            for x in points {
                let (u, u1, u2) = (s.eval(p, x)?, s1.eval(p, x)?, s2.eval(p, x)?);
                for i in 0..u.len() {
                    w = w.max((u[i] - a * u1[i] - b * u2[i]).abs());
                }
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// `max |φ_t^*((φ_t)_* K₀)(y) − K₀(y)|` at the given points, where the
/// pushforward is evaluated at `φ_t(y)` through the backward flow.
pub fn pullback_of_solution_defect(
    k0: &KFormField,
    system: &FlowSystem,
    paths: &BrownianPaths,
    scheme: Scheme,
    points: &[Vec<f64>],
) -> Result<f64> {
    let t = paths.grid().end();
    let sol = solve_pushforward(k0, system, paths, scheme, t)?;
    let (n, k) = (k0.n(), k0.degree());
    let worst: Vec<f64> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut w = 0.0f64;
            for y in points {
                let fwd = flow_endpoint(system, scheme, Direction::Forward, paths.grid(), paths.path(p), paths.drivers(), y)?
                    .ok_or_else(|| Error::InvalidParameter("forward trajectory flagged".into()))?;
                let kt = sol.eval(p, &fwd.x)?;
                let back = pull_coefficients(n, k, &kt, &fwd.jac);
                let k0y = k0.eval(0.0, y);
                for i in 0..back.len() {
                    w = w.max((back[i] - k0y[i]).abs());
                }
            }
            Ok(w)
        })
        .collect::<Result<_>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::field::VectorField;
    use crate::calculus::quadrature::Rule;
    use crate::expr::Expr;
    use crate::flow::TimeGrid;

    fn gaussian(n: usize) -> Expr {
        Expr::dist_sq(&vec![0.0; n]).neg().exp()
    }

    #[test]
    fn time_zero_returns_initial_form() {
        let k0 = KFormField::new(2, 1, vec![gaussian(2), Expr::var(0)]).unwrap();
        let sys = FlowSystem::new(
            VectorField::constant(&[1.0, 0.0]).unwrap(),
            vec![VectorField::constant(&[0.0, 1.0]).unwrap()],
        )
        .unwrap();
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 8).unwrap(), 3, 2).unwrap();
        let sol = solve_pushforward(&k0, &sys, &paths, Scheme::Heun, 0.0).unwrap();
        let x = [0.3, -0.4];
        assert_eq!(sol.eval(1, &x).unwrap(), k0.eval(0.0, &x));
        assert_eq!(
            solve_pushforward(&k0, &sys, &paths, Scheme::Heun, 0.3).err(),
            Some(Error::TimeOffGrid(0.3))
        );
    }

    #[test]
    fn constant_drift_translates_scalars() {
        let f = KFormField::scalar(1, gaussian(1)).unwrap();
        let sys = FlowSystem::deterministic(VectorField::constant(&[0.5]).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(2.0, 10).unwrap(), 1);
        let sol = solve_pushforward(&f, &sys, &paths, Scheme::Heun, 2.0).unwrap();
        for x in [-1.0, 0.2, 1.7] {
            let v = sol.eval(0, &[x]).unwrap()[0];
            assert!((v - (-(x - 1.0f64).powi(2)).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_drift_volume_form_scales_by_inverse_determinant() {
        let a = [0.3, 1.0, 0.0, -0.1];
        let sys = FlowSystem::deterministic(VectorField::linear(&a, 2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 200).unwrap(), 1);
        let vol = KFormField::top(2, Expr::one()).unwrap();
        let sol = solve_pushforward(&vol, &sys, &paths, Scheme::Heun, 1.0).unwrap();
        // det(e^{-A}) = e^{-tr A}
        let v = sol.eval(0, &[0.4, 0.9]).unwrap()[0];
        assert!((v - (-0.2f64).exp()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn lagrangian_pairing_matches_eulerian_quadrature() {
        let k0 = KFormField::new(2, 1, vec![gaussian(2), gaussian(2).scale(0.5)]).unwrap();
        let b = VectorField::new(vec![Expr::var(1).sin(), Expr::var(0).cos().scale(0.5)]).unwrap();
        let sys = FlowSystem::deterministic(b).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(0.5, 64).unwrap(), 1);
        let theta = KFormField::new(2, 1, vec![gaussian(2), Expr::var(0)])
            .unwrap()
            .mul_scalar(&gaussian(2));
        let grid = QuadratureGrid::cube(&[0.0, 0.0], 4.0, 96, Rule::GaussLegendre { order: 6 }).unwrap();
        let lag = pushforward_pairings(&k0, &sys, Scheme::Heun, &paths, 0, std::slice::from_ref(&theta), &grid)
            .unwrap()
            .unwrap();
        let sol = solve_pushforward(&k0, &sys, &paths, Scheme::Heun, 0.5).unwrap();
        let eul = grid.integrate(|x| {
            let u = sol.eval(0, x).unwrap();
            theta.eval(0.5, x).iter().zip(&u).map(|(a, b)| a * b).sum()
        });
        let last = lag[lag.len() - 1];
        assert!((last - eul).abs() < 1e-6, "{last} {eul}");
    }

    #[test]
    fn solution_is_linear_and_pulls_back_to_initial_data() {
        let k = KFormField::new(2, 1, vec![gaussian(2), Expr::var(1)]).unwrap();
        let kp = KFormField::new(2, 1, vec![Expr::var(0).sin(), Expr::one()]).unwrap();
        let sys = FlowSystem::new(
            VectorField::new(vec![Expr::var(1), Expr::var(0).sin()]).unwrap(),
            vec![VectorField::new(vec![Expr::var(1).cos().scale(0.3), Expr::zero()]).unwrap()],
        )
        .unwrap();
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(0.5, 32).unwrap(), 8, 3).unwrap();
        let pts = vec![vec![0.1, 0.2], vec![-0.5, 0.4]];
        assert!(linearity_defect(&k, &kp, 2.0, -0.7, &sys, &paths, Scheme::Heun, &pts).unwrap() < 1e-12);
        assert!(pullback_of_solution_defect(&k, &sys, &paths, Scheme::Heun, &pts).unwrap() < 1e-2);
    }
}
