//! One-step schemes for the characteristic SDE
//! `dφ = b(t, φ) dt + Σ_k ξ_k(t, φ) ∘ dW^k` together with its variational
//! equation `dDφ = Db Dφ dt + Σ_k Dξ_k Dφ ∘ dW^k`.

use serde::{Deserialize, Serialize};

use super::brownian::TimeGrid;
use crate::calculus::field::VectorField;
use crate::calculus::maps::det;
use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Stratonovich Heun (predictor-corrector).
    #[default]
    Heun,
    /// Euler–Maruyama on the Itô form with drift `b + ½ Σ (Dξ_k) ξ_k`.
    ItoEuler,
    /// Milstein on the Itô form; iterated integrals use the commutative
    /// approximation `I_{lk} ≈ ½(ΔW^l ΔW^k − δ_{lk} Δt)`.
    ItoMilstein,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

/// Drift, noise fields and the derived quantities the schemes need.
#[derive(Clone, Debug)]
pub struct FlowSystem {
    n: usize,
    b: VectorField,
    xis: Vec<VectorField>,
    correction: Option<VectorField>,
    /// `∂_m ∂_j ξ_k^i` at `[k][(i * n + j) * n + m]`.
    hessians: Vec<Vec<Expr>>,
}

impl FlowSystem {
    pub fn new(b: VectorField, xis: Vec<VectorField>) -> Result<Self> {
        let n = b.n();
        for xi in &xis {
            if xi.n() != n {
                return Err(Error::DimensionMismatch { left: n, right: xi.n() });
            }
        }
        let correction = VectorField::ito_correction(&xis)?;
        let hessians = xis
            .iter()
            .map(|xi| {
                let mode = xi.mode();
                let mut h = Vec::with_capacity(n * n * n);
                for i in 0..n {
                    for j in 0..n {
                        for m in 0..n {
                            h.push(mode.differentiate(xi.jacobian_entry(i, j), m));
                        }
                    }
                }
                h
            })
            .collect();
        Ok(FlowSystem {
            n,
            b,
            xis,
            correction,
            hessians,
        })
    }

    /// Deterministic system (no noise).
    pub fn deterministic(b: VectorField) -> Result<Self> {
        Self::new(b, Vec::new())
    }

    /// The system with `b` and every `ξ_k` negated (used for backward flows).
    pub fn negated(&self) -> Result<Self> {
        Self::new(self.b.scale(-1.0), self.xis.iter().map(|x| x.scale(-1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn drift(&self) -> &VectorField {
        &self.b
    }

    pub fn noise(&self) -> &[VectorField] {
        &self.xis
    }

    pub fn ito_correction(&self) -> Option<&VectorField> {
        self.correction.as_ref()
    }
}

/// Position and Jacobian of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub x: Vec<f64>,
    /// Row-major `∂φ^i/∂x^j`.
    pub jac: Vec<f64>,
}

impl FlowState {
    pub fn identity(x0: &[f64]) -> Self {
        let n = x0.len();
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            jac[i * n + i] = 1.0;
        }
        FlowState { x: x0.to_vec(), jac }
    }

    pub fn det(&self) -> f64 {
        det(&self.jac, self.x.len())
    }

    fn is_valid(&self) -> bool {
        self.x.iter().chain(&self.jac).all(|v| v.is_finite() && v.abs() < 1e150) && self.det() > 0.0
    }
}

/// Value and Jacobian of a vector field at a point.
struct Sample {
    v: Vec<f64>,
    dv: Vec<f64>,
}

fn sample(f: &VectorField, t: f64, x: &[f64]) -> Sample {
    let n = f.n();
    let mut v = vec![0.0; n];
    let mut dv = vec![0.0; n * n];
    f.eval(t, x, &mut v);
    f.eval_jacobian(t, x, &mut dv);
    Sample { v, dv }
}

/// `out += s * (A J)` for `n×n` row-major matrices.
fn add_mat_mul(out: &mut [f64], a: &[f64], j: &[f64], n: usize, s: f64) {
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for m in 0..n {
                acc += a[r * n + m] * j[m * n + c];
            }
            out[r * n + c] += s * acc;
        }
    }
}

fn add_scaled(out: &mut [f64], v: &[f64], s: f64) {
    for (o, a) in out.iter_mut().zip(v) {
        *o += s * a;
    }
}

/// Increment of `(x, J)` driven by field samples `f` with weight `s`.
fn add_field(state: &mut FlowState, f: &Sample, jac: &[f64], n: usize, s: f64) {
    add_scaled(&mut state.x, &f.v, s);
    add_mat_mul(&mut state.jac, &f.dv, jac, n, s);
}

impl FlowSystem {
    /// One step from time `ta` to `tb` with step length `dt > 0` and driver
    /// increments `dw` (only the first `xis.len()` entries are used).
    pub fn step(&self, scheme: Scheme, state: &FlowState, ta: f64, tb: f64, dt: f64, dw: &[f64]) -> FlowState {
        let n = self.n;
        let nk = self.xis.len();
        match scheme {
            Scheme::Heun => {
                let fb = sample(&self.b, ta, &state.x);
                let gs: Vec<Sample> = self.xis.iter().map(|xi| sample(xi, ta, &state.x)).collect();
                let mut pred = state.clone();
                add_field(&mut pred, &fb, &state.jac, n, dt);
                for (g, &w) in gs.iter().zip(dw) {
                    add_field(&mut pred, g, &state.jac, n, w);
                }
                let fb2 = sample(&self.b, tb, &pred.x);
                let mut next = state.clone();
                add_field(&mut next, &fb, &state.jac, n, 0.5 * dt);
                add_field(&mut next, &fb2, &pred.jac, n, 0.5 * dt);
                for (k, (g, &w)) in gs.iter().zip(dw).enumerate() {
                    let g2 = sample(&self.xis[k], tb, &pred.x);
                    add_field(&mut next, g, &state.jac, n, 0.5 * w);
                    add_field(&mut next, &g2, &pred.jac, n, 0.5 * w);
                }
                next
            }
            Scheme::ItoEuler | Scheme::ItoMilstein => {
                let mut next = state.clone();
                let fb = sample(&self.b, ta, &state.x);
                add_field(&mut next, &fb, &state.jac, n, dt);
                if let Some(c) = &self.correction {
                    add_field(&mut next, &sample(c, ta, &state.x), &state.jac, n, dt);
                }
                let gs: Vec<Sample> = self.xis.iter().map(|xi| sample(xi, ta, &state.x)).collect();
                for (g, &w) in gs.iter().zip(dw) {
                    add_field(&mut next, g, &state.jac, n, w);
                }
                if scheme == Scheme::ItoMilstein {
                    for k in 0..nk {
                        for l in 0..nk {
                            let iter = 0.5 * (dw[l] * dw[k] - if l == k { dt } else { 0.0 });
                            if iter != 0.0 {
                                self.add_milstein_term(&mut next, state, &gs, k, l, ta, iter);
                            }
                        }
                    }
                }
                next
            }
        }
    }

    /// `L^l g_k` applied to `(x, J)`: `(Dξ_k ξ_l, (∂_m Dξ_k) ξ_l^m J + Dξ_k Dξ_l J)`.
    #[allow(clippy::too_many_arguments)]
    fn add_milstein_term(&self, next: &mut FlowState, state: &FlowState, gs: &[Sample], k: usize, l: usize, t: f64, s: f64) {
        let n = self.n;
        let (gk, gl) = (&gs[k], &gs[l]);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += gk.dv[i * n + j] * gl.v[j];
            }
            next.x[i] += s * acc;
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += self.hessians[k][(i * n + j) * n + m].eval(t, &state.x) * gl.v[m];
                    acc += gk.dv[i * n + m] * gl.dv[m * n + j];
                }
                a[i * n + j] = acc;
            }
        }
        add_mat_mul(&mut next.jac, &a, &state.jac, n, s);
    }

    fn check_drivers(&self, drivers: usize) -> Result<()> {
        if self.xis.len() > drivers {
            return Err(Error::ShapeMismatch(format!(
                "{} noise fields but only {drivers} Brownian drivers",
                self.xis.len()
            )));
        }
        Ok(())
    }
}

/// How one trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOutcome {
    Completed,
    /// Non-finite state, overflow or `det Dφ ≤ 0` produced at this grid step.
    Flagged(usize),
}

/// Integrates one trajectory over grid nodes `[start, end]` and calls
/// `visit(node, state)` at every node passed, starting node included.
///
/// Forward runs go `start → end`. Backward runs start at node `end`, use the
/// negated fields and consume the increments in reverse order, producing
/// `φ_{t_start, t_end}^{-1}` approximations.
#[allow(clippy::too_many_arguments)]
pub fn integrate_path<V>(
    system: &FlowSystem,
    scheme: Scheme,
    direction: Direction,
    grid: &TimeGrid,
    increments: &[f64],
    drivers: usize,
    x0: &[f64],
    window: (usize, usize),
    mut visit: V,
) -> Result<PathOutcome>
where
    V: FnMut(usize, &FlowState),
{
    if x0.len() != system.n {
        return Err(Error::DimensionMismatch {
            left: system.n,
            right: x0.len(),
        });
    }
    system.check_drivers(drivers)?;
    let (start, end) = window;
    if start > end || end > grid.steps() {
        return Err(Error::InvalidTimeGrid);
    }
    let times = grid.times();
    let mut state = FlowState::identity(x0);
    let mut dw = vec![0.0; system.xis.len()];
    let load = |dw: &mut [f64], s: usize| {
        for (d, w) in dw.iter_mut().enumerate() {
            *w = increments[s * drivers + d];
        }
    };
    match direction {
        Direction::Forward => {
            visit(start, &state);
            for s in start..end {
                load(&mut dw, s);
                state = system.step(scheme, &state, times[s], times[s + 1], grid.dt(s), &dw);
                if !state.is_valid() {
                    return Ok(PathOutcome::Flagged(s + 1));
                }
                visit(s + 1, &state);
            }
        }
        Direction::Backward => {
            let rev = system.negated()?;
            visit(end, &state);
            for s in (start..end).rev() {
                load(&mut dw, s);
                state = rev.step(scheme, &state, times[s + 1], times[s], grid.dt(s), &dw);
                if !state.is_valid() {
                    return Ok(PathOutcome::Flagged(s));
                }
                visit(s, &state);
            }
        }
    }
    Ok(PathOutcome::Completed)
}

/// Endpoint of one trajectory over the whole grid, or `None` if flagged.
pub fn flow_endpoint(
    system: &FlowSystem,
    scheme: Scheme,
    direction: Direction,
    grid: &TimeGrid,
    increments: &[f64],
    drivers: usize,
    x0: &[f64],
) -> Result<Option<FlowState>> {
    let mut last = None;
    let outcome = integrate_path(
        system,
        scheme,
        direction,
        grid,
        increments,
        drivers,
        x0,
        (0, grid.steps()),
        |_, s| last = Some(s.clone()),
    )?;
    Ok(match outcome {
        PathOutcome::Completed => last,
        PathOutcome::Flagged(_) => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::brownian::BrownianPaths;

    fn endpoint(sys: &FlowSystem, scheme: Scheme, paths: &BrownianPaths, p: usize, x0: &[f64]) -> FlowState {
        flow_endpoint(sys, scheme, Direction::Forward, paths.grid(), paths.path(p), paths.drivers(), x0)
            .unwrap()
            .unwrap()
    }

    #[test]
    fn constant_drift_is_exact() {
        let sys = FlowSystem::deterministic(VectorField::constant(&[1.5, -0.5]).unwrap()).unwrap();
        let g = TimeGrid::uniform(2.0, 7).unwrap();
        let paths = BrownianPaths::zero(0, &g, 1);
        for scheme in [Scheme::Heun, Scheme::ItoEuler, Scheme::ItoMilstein] {
            let s = endpoint(&sys, scheme, &paths, 0, &[0.1, 0.2]);
            assert!((s.x[0] - 3.1).abs() < 1e-14 && (s.x[1] + 0.8).abs() < 1e-14);
            assert_eq!(s.jac, vec![1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn additive_noise_is_exact() {
        let sys = FlowSystem::new(VectorField::zero(2).unwrap(), vec![VectorField::constant(&[1.0, 0.0]).unwrap()]).unwrap();
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        let paths = BrownianPaths::generate(1, &g, 3, 4).unwrap();
        for p in 0..4 {
            let w = *paths.brownian_values(p, 0).last().unwrap();
            let s = endpoint(&sys, Scheme::Heun, &paths, p, &[0.3, -0.2]);
            assert!((s.x[0] - 0.3 - w).abs() < 1e-13);
            assert_eq!(s.x[1], -0.2);
            assert_eq!(s.jac, vec![1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn linear_drift_jacobian_matches_exponential() {
        let a = [0.0, 1.0, -1.0, 0.0];
        let sys = FlowSystem::deterministic(VectorField::linear(&a, 2).unwrap()).unwrap();
        let g = TimeGrid::uniform(1.0, 400).unwrap();
        let paths = BrownianPaths::zero(0, &g, 1);
        let s = endpoint(&sys, Scheme::Heun, &paths, 0, &[1.0, 0.0]);
        let (c, sn) = (1f64.cos(), 1f64.sin());
        assert!((s.x[0] - c).abs() < 1e-5 && (s.x[1] + sn).abs() < 1e-5);
        assert!((s.jac[0] - c).abs() < 1e-5 && (s.jac[1] - sn).abs() < 1e-5);
        assert!((s.det() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn backward_inverts_forward() {
        let x = Expr::var(0);
        let b = VectorField::new(vec![x.sin()]).unwrap();
        let xi = VectorField::new(vec![x.cos().scale(0.3)]).unwrap();
        let sys = FlowSystem::new(b, vec![xi]).unwrap();
        let mut prev = f64::INFINITY;
        let mut paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 16).unwrap(), 9, 1).unwrap();
        for _ in 0..4 {
            let f = endpoint(&sys, Scheme::Heun, &paths, 0, &[0.4]);
            let back = flow_endpoint(&sys, Scheme::Heun, Direction::Backward, paths.grid(), paths.path(0), 1, &f.x)
                .unwrap()
                .unwrap();
            let err = (back.x[0] - 0.4).abs();
            assert!(err < prev);
            prev = err;
            paths = paths.refined().unwrap();
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn milstein_uses_second_derivatives() {
        // ξ(x) = x: the Jacobian obeys the same geometric SDE as the position.
        let sys = FlowSystem::new(VectorField::zero(1).unwrap(), vec![VectorField::new(vec![Expr::var(0)]).unwrap()]).unwrap();
        let paths = BrownianPaths::generate(1, &TimeGrid::uniform(1.0, 64).unwrap(), 1, 1).unwrap();
        let s = endpoint(&sys, Scheme::ItoMilstein, &paths, 0, &[1.0]);
        assert!((s.x[0] - s.jac[0]).abs() < 1e-12);
    }

    #[test]
    fn driver_count_checked() {
        let sys = FlowSystem::new(VectorField::zero(1).unwrap(), vec![VectorField::constant(&[1.0]).unwrap(); 2]).unwrap();
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let paths = BrownianPaths::zero(1, &g, 1);
        assert!(flow_endpoint(&sys, Scheme::Heun, Direction::Forward, &g, paths.path(0), 1, &[0.0]).is_err());
    }
}
