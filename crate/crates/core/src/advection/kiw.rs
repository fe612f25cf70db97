//! Kunita–Itô–Wentzell formula for k-forms, checked by pairing both sides
//! with a test form in Lagrangian coordinates.
//!
//! The form-valued semimartingale is taken in separated form
//! `K(t) = K₀ + a(t) G₀ + Σ_i c_i(t) H_{i,0}` with `a(t) = ∫g ds` and
//! `c_i(t) = ∫h_i dW^i`, i.e. `G(t,x) = g(t) G₀(x)` and `H_i(t,x) = h_i(t) H_{i,0}(x)`.
//! By linearity every Lie derivative of `K(s)` is then a combination of
//! Lie derivatives of the fixed channels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solution::{pullback_pairings, solve_pushforward};
use crate::calculus::field::{KFormField, TestForm};
use crate::calculus::maps::pull_coefficients;
use crate::calculus::ops::lie_derivative;
use crate::calculus::quadrature::QuadratureGrid;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flow::ensemble::mean_and_se;
use crate::flow::{flow_endpoint, BrownianPaths, Direction, FlowSystem, Scheme};

/// How the drivers `W^i` of `K` relate to the drivers `B^j` of the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// `W^i = B^i`, so `d[W^i, B^j] = δ_ij dt`.
    Same,
    /// `W ⊥ B`, so the cross variation vanishes.
    Independent,
}

/// Separated semimartingale `K₀ + (∫g ds) G₀ + Σ_i (∫h_i dW^i) H_{i,0}`.
#[derive(Clone, Debug)]
pub struct KiwProcess {
    pub k0: KFormField,
    pub drift: Option<(Expr, KFormField)>,
    pub noise: Vec<(Expr, KFormField)>,
}

impl KiwProcess {
    pub fn constant(k0: KFormField) -> Self {
        KiwProcess {
            k0,
            drift: None,
            noise: Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        for f in self.drift.iter().map(|d| &d.1).chain(self.noise.iter().map(|h| &h.1)) {
            self.k0
                .check_same_shape(f)
                .map_err(|e| Error::ShapeMismatch(format!("process channel: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KiwPath {
    pub path: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Realised `Σ_j ⟨⟨φ^*ℒ_{ξ_j}H_i, θ⟩⟩ ΔW^i ΔB^j` (its expectation is the
    /// cross-variation term; zero for independent drivers).
    pub realised_cross: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KiwReport {
    pub dt: f64,
    pub coupling: Coupling,
    pub paths: Vec<KiwPath>,
    pub flagged: usize,
    pub rms_gap: f64,
    /// Mean and standard error of the realised cross term over paths.
    pub cross_mean: f64,
    pub cross_se: f64,
}

impl KiwReport {
    /// Whether the realised cross term is within `z` standard errors of 0.
    pub fn cross_term_negligible(&self, z: f64) -> bool {
        self.cross_mean.abs() <= z * self.cross_se
    }
}

/// Both sides of the formula at the final time on every path.
///
/// `flow_paths` drive the flow; `process_paths` drive `K` and must share the
/// time grid (for [`Coupling::Same`] pass the same paths).
#[allow(clippy::too_many_arguments)]
pub fn kiw_residual(
    process: &KiwProcess,
    system: &FlowSystem,
    flow_paths: &BrownianPaths,
    process_paths: &BrownianPaths,
    coupling: Coupling,
    theta: &TestForm,
    grid: &QuadratureGrid,
    scheme: Scheme,
) -> Result<KiwReport> {
    process.check()?;
    if flow_paths.grid() != process_paths.grid() || flow_paths.n_paths() != process_paths.n_paths() {
        return Err(Error::ShapeMismatch("flow and process paths must share grid and count".into()));
    }
    if process.noise.len() > process_paths.drivers() {
        return Err(Error::ShapeMismatch("more noise channels than process drivers".into()));
    }
    if coupling == Coupling::Same && process.noise.len() > system.noise().len() {
        return Err(Error::ShapeMismatch(
            "shared drivers need one flow noise field per process channel".into(),
        ));
    }
    if !grid.contains_ball(theta.center(), theta.radius()) {
        return Err(Error::SupportOutsideGrid);
    }
    // Channel list: index 0 = K₀, 1 = G₀ (zero if absent), 2.. = H_i.
    let mut channels = vec![process.k0.clone()];
    channels.push(match &process.drift {
        Some((_, g0)) => g0.clone(),
        None => KFormField::zero(process.k0.n(), process.k0.degree())?,
    });
    channels.extend(process.noise.iter().map(|(_, h)| h.clone()));
    let nc = channels.len();
    let nk = system.noise().len();
    // Forms: channels, ℒ_b ch, ℒ_ξj ch, ℒ_ξj ℒ_ξj ch.
    let mut forms = channels.clone();
    for c in &channels {
        forms.push(lie_derivative(system.drift(), c)?);
    }
    for xi in system.noise() {
        for c in &channels {
            forms.push(lie_derivative(xi, c)?);
        }
    }
    for xi in system.noise() {
        for c in &channels {
            forms.push(lie_derivative(xi, &lie_derivative(xi, c)?)?);
        }
    }
    let m = forms.len();
    let idx_ch = |c: usize| c;
    let idx_b = |c: usize| nc + c;
    let idx_xi = |j: usize, c: usize| 2 * nc + j * nc + c;
    let idx_xixi = |j: usize, c: usize| 2 * nc + nk * nc + j * nc + c;

    let tgrid = flow_paths.grid().clone();
    let times = tgrid.times().to_vec();
    let steps = tgrid.steps();
    let g_fn = process.drift.as_ref().map(|(g, _)| g.clone()).unwrap_or_else(Expr::zero);
    let h_fns: Vec<Expr> = process.noise.iter().map(|(h, _)| h.clone()).collect();
    // g and h_i are functions of time; they are evaluated at the origin.
    let origin = vec![0.0; process.k0.n()];

    let rows: Vec<Option<KiwPath>> = (0..flow_paths.n_paths())
        .into_par_iter()
        .map(|p| -> Result<Option<KiwPath>> {
            let Some(q) = pullback_pairings(&forms, theta.form(), system, scheme, flow_paths, p, grid)? else {
                return Ok(None);
            };
            let at = |node: usize, f: usize| q[node * m + f];
            // Scalar coefficients of the channels at each node.
            let mut coef = vec![vec![0.0; nc]; steps + 1];
            coef[0][0] = 1.0;
            for j in 0..steps {
                let dt = tgrid.dt(j);
                coef[j + 1] = coef[j].clone();
                coef[j + 1][1] += 0.5 * (g_fn.eval(times[j], &origin) + g_fn.eval(times[j + 1], &origin)) * dt;
                for (i, h) in h_fns.iter().enumerate() {
                    coef[j + 1][2 + i] += h.eval(times[j], &origin) * process_paths.increment(p, j, i);
                }
            }
            let combo = |node: usize, idx: &dyn Fn(usize) -> usize| -> f64 { (0..nc).map(|c| coef[node][c] * at(node, idx(c))).sum() };
            let lhs = combo(steps, &idx_ch);
            let mut rhs = at(0, idx_ch(0));
            let mut cross = 0.0;
            for j in 0..steps {
                let dt = tgrid.dt(j);
                let (t0, t1) = (times[j], times[j + 1]);
                // ∫ φ^*G ds and ∫ φ^*ℒ_b K ds (trapezoid)
                rhs += 0.5 * dt * (g_fn.eval(t0, &origin) * at(j, idx_ch(1)) + g_fn.eval(t1, &origin) * at(j + 1, idx_ch(1)));
                rhs += 0.5 * dt * (combo(j, &idx_b) + combo(j + 1, &idx_b));
                // Σ ∫ φ^*H_i dW^i (Itô)
                for (i, h) in h_fns.iter().enumerate() {
                    rhs += h.eval(t0, &origin) * at(j, idx_ch(2 + i)) * process_paths.increment(p, j, i);
                }
                for jj in 0..nk {
                    let db = flow_paths.increment(p, j, jj);
                    rhs += combo(j, &|c| idx_xi(jj, c)) * db;
                    rhs += 0.25 * dt * (combo(j, &|c| idx_xixi(jj, c)) + combo(j + 1, &|c| idx_xixi(jj, c)));
                    for (i, h) in h_fns.iter().enumerate() {
                        let term0 = h.eval(t0, &origin) * at(j, idx_xi(jj, 2 + i));
                        cross += term0 * process_paths.increment(p, j, i) * db;
                        if coupling == Coupling::Same && i == jj {
                            let term1 = h.eval(t1, &origin) * at(j + 1, idx_xi(jj, 2 + i));
                            rhs += 0.5 * dt * (term0 + term1);
                        }
                    }
                }
            }
            Ok(Some(KiwPath {
                path: p,
                lhs,
                rhs,
                gap: lhs - rhs,
                realised_cross: cross,
            }))
        })
        .collect::<Result<_>>()?;
    let flagged = rows.iter().filter(|r| r.is_none()).count();
    if flagged * 100 > rows.len() {
        return Err(Error::TooManyFlagged {
            flagged,
            total: rows.len(),
        });
    }
    let paths: Vec<KiwPath> = rows.into_iter().flatten().collect();
    let rms_gap = (paths.iter().map(|r| r.gap * r.gap).sum::<f64>() / paths.len().max(1) as f64).sqrt();
    let (cross_mean, cross_se) = mean_and_se(&paths.iter().map(|r| r.realised_cross).collect::<Vec<_>>());
    Ok(KiwReport {
        dt: tgrid.dt(0),
        coupling,
        paths,
        flagged,
        rms_gap,
        cross_mean,
        cross_se,
    })
}

/// For the transport solution `K(t) = (φ_t)_*K₀` the formula reduces to
/// `φ_t^*K(t) = K₀`. Returns the RMS over paths of
/// `⟨⟨φ_T^*K(T), θ⟩⟩ − ⟨⟨K₀, θ⟩⟩`, with `K(T)` evaluated independently
/// through the backward flow.
pub fn kiw_transport_gap(
    k0: &KFormField,
    system: &FlowSystem,
    paths: &BrownianPaths,
    theta: &TestForm,
    grid: &QuadratureGrid,
    scheme: Scheme,
) -> Result<f64> {
    if !grid.contains_ball(theta.center(), theta.radius()) {
        return Err(Error::SupportOutsideGrid);
    }
    let t = paths.grid().end();
    let sol = solve_pushforward(k0, system, paths, scheme, t)?;
    let (n, k) = (k0.n(), k0.degree());
    let base = grid.integrate(|y| theta.form().eval(0.0, y).iter().zip(k0.eval(0.0, y)).map(|(a, b)| a * b).sum());
    let gaps: Vec<f64> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut acc = 0.0;
            for i in 0..grid.len() {
                let y = grid.node(i);
                let th = theta.form().eval(0.0, y);
                if th.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let fwd = flow_endpoint(system, scheme, Direction::Forward, paths.grid(), paths.path(p), paths.drivers(), y)?
                    .ok_or_else(|| Error::InvalidParameter("forward trajectory flagged".into()))?;
                let kt = sol.eval(p, &fwd.x)?;
                let pulled = pull_coefficients(n, k, &kt, &fwd.jac);
                acc += grid.weight(i) * th.iter().zip(&pulled).map(|(a, b)| a * b).sum::<f64>();
            }
            Ok(acc - base)
        })
        .collect::<Result<_>>()?;
    Ok((gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len().max(1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::field::VectorField;
    use crate::calculus::quadrature::Rule;
    use crate::flow::{refinement_ladder, TimeGrid};

    fn theta() -> TestForm {
        TestForm::bump(2, 1, &[0.0, 0.1], 1.0, vec![Expr::one(), Expr::var(0)]).unwrap()
    }

    fn grid() -> QuadratureGrid {
        QuadratureGrid::cube(&[0.0, 0.1], 1.0, 8, Rule::GaussLegendre { order: 4 }).unwrap()
    }

    fn smooth_k0() -> KFormField {
        KFormField::new(2, 1, vec![Expr::var(1).sin(), Expr::var(0).cos().mul(&Expr::var(1))]).unwrap()
    }

    #[test]
    fn static_case_has_zero_gap() {
        let sys = FlowSystem::deterministic(VectorField::zero(2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 4).unwrap(), 1);
        let r = kiw_residual(
            &KiwProcess::constant(smooth_k0()),
            &sys,
            &paths,
            &paths,
            Coupling::Same,
            &theta(),
            &grid(),
            Scheme::Heun,
        )
        .unwrap();
        assert!(r.rms_gap < 1e-15);
    }

    #[test]
    fn same_driver_gap_decays() {
        let b = VectorField::new(vec![Expr::var(1).scale(0.5), Expr::var(0).sin().scale(-0.5)]).unwrap();
        let xi = VectorField::new(vec![Expr::constant(0.4), Expr::var(0).cos().scale(0.3)]).unwrap();
        let sys = FlowSystem::new(b, vec![xi]).unwrap();
        let process = KiwProcess {
            k0: smooth_k0(),
            drift: Some((Expr::time().cos(), KFormField::new(2, 1, vec![Expr::var(0), Expr::one()]).unwrap())),
            noise: vec![(
                Expr::one(),
                KFormField::new(2, 1, vec![Expr::var(1).cos(), Expr::var(0).scale(0.5)]).unwrap(),
            )],
        };
        let coarse = BrownianPaths::generate(1, &TimeGrid::uniform(0.5, 8).unwrap(), 21, 32).unwrap();
        let mut gaps = Vec::new();
        for paths in refinement_ladder(&coarse, 5).unwrap() {
            let r = kiw_residual(&process, &sys, &paths, &paths, Coupling::Same, &theta(), &grid(), Scheme::Heun).unwrap();
            gaps.push(r.rms_gap);
        }
        // Itô sums converge strongly at rate 1/2 in dt.
        let slope = (gaps[0] / gaps[4]).log2() / 4.0;
        assert!(slope > 0.35, "{gaps:?}");
    }

    #[test]
    fn transport_solution_pulls_back_to_initial_pairing() {
        let b = VectorField::new(vec![Expr::var(1).scale(0.5), Expr::var(0).sin().scale(-0.5)]).unwrap();
        let sys = FlowSystem::deterministic(b).unwrap();
        let coarse = BrownianPaths::zero(0, &TimeGrid::uniform(0.5, 4).unwrap(), 1);
        let ladder = refinement_ladder(&coarse, 3).unwrap();
        let gaps: Vec<f64> = ladder
            .iter()
            .map(|p| kiw_transport_gap(&smooth_k0(), &sys, p, &theta(), &grid(), Scheme::Heun).unwrap())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
