//! Classical special cases of the Lie-derivative operator checked against
//! independent finite-difference formulas: continuity (top forms), transport
//! (0-forms) and the magnetic induction identity in R³, plus residuals of the
//! corresponding PDEs evaluated on pushforward solutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::solution::solve_pushforward;
use crate::calculus::field::{KFormField, VectorField};
pub use crate::calculus::identities::IdentityCheck;
use crate::calculus::identities::{random_trig, random_trig_field};
use crate::calculus::ops::lie_derivative;
use crate::error::Result;
use crate::expr::Expr;
use crate::flow::{BrownianPaths, FlowSystem, Scheme, TimeGrid};

fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], dir: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[dir] += h;
    m[dir] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecializationSettings {
    pub seed: u64,
    pub cases: usize,
    pub probes: usize,
    /// Finite-difference step for the operator identities.
    pub h: f64,
    pub tolerance: f64,
    /// Time step of the flows behind the solution-level residuals.
    pub steps: usize,
    pub solution_tolerance: f64,
}

impl Default for SpecializationSettings {
    fn default() -> Self {
        SpecializationSettings {
            seed: 7,
            cases: 10,
            probes: 6,
            h: 1e-4,
            tolerance: 1e-6,
            steps: 64,
            solution_tolerance: 1e-3,
        }
    }
}

fn probes(n: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// `ℒ_v(ρ dⁿx) = div(ρv) dⁿx`.
pub fn volume_form_identity(s: &SpecializationSettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut worst = 0.0f64;
    for case in 0..s.cases {
        let n = 2 + case % 2;
        let v = random_trig_field(n, 2, &mut rng)?;
        let rho = random_trig(n, 2, &mut rng);
        let lhs = lie_derivative(&v, &KFormField::top(n, rho.clone())?)?;
        for x in probes(n, s.probes, &mut rng) {
            let fd: f64 = (0..n)
                .map(|i| central(|y| rho.eval(0.0, y) * v.eval_vec(0.0, y)[i], &x, i, s.h))
                .sum();
            worst = worst.max((lhs.eval(0.0, &x)[0] - fd).abs());
        }
    }
    Ok(IdentityCheck::new("volume-form", s.cases, worst, s.tolerance))
}

/// `ℒ_b f = b·∇f`.
pub fn scalar_identity(s: &SpecializationSettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 1);
    let mut worst = 0.0f64;
    for case in 0..s.cases {
        let n = 1 + case % 3;
        let b = random_trig_field(n, 2, &mut rng)?;
        let f = random_trig(n, 2, &mut rng);
        let lhs = lie_derivative(&b, &KFormField::scalar(n, f.clone())?)?;
        for x in probes(n, s.probes, &mut rng) {
            let bx = b.eval_vec(0.0, &x);
            let fd: f64 = (0..n).map(|i| bx[i] * central(|y| f.eval(0.0, y), &x, i, s.h)).sum();
            worst = worst.max((lhs.eval(0.0, &x)[0] - fd).abs());
        }
    }
    Ok(IdentityCheck::new("scalar-transport", s.cases, worst, s.tolerance))
}

/// `β = ι_B vol` as a 2-form in R³, channels ordered (01, 02, 12).
pub fn flux_form(b: &VectorField) -> Result<KFormField> {
    let c = b.components();
    KFormField::new(3, 2, vec![c[2].clone(), c[1].neg(), c[0].clone()])
}

/// Inverse of [`flux_form`] on coefficient vectors.
pub fn flux_vector(beta: &[f64]) -> [f64; 3] {
    [beta[2], -beta[1], beta[0]]
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `ℒ_v(ι_B vol) = ι_{−curl(v×B) + v div B} vol`.
pub fn induction_identity(s: &SpecializationSettings) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 2);
    let mut worst = 0.0f64;
    for _ in 0..s.cases {
        let v = random_trig_field(3, 2, &mut rng)?;
        let bf = random_trig_field(3, 2, &mut rng)?;
        let lhs = lie_derivative(&v, &flux_form(&bf)?)?;
        for x in probes(3, s.probes, &mut rng) {
            let vxb = |y: &[f64], i: usize| cross(&v.eval_vec(0.0, y), &bf.eval_vec(0.0, y))[i];
            let d = |i: usize, j: usize| central(|y| vxb(y, i), &x, j, s.h);
            let curl = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
            let div_b: f64 = (0..3).map(|i| central(|y| bf.eval_vec(0.0, y)[i], &x, i, s.h)).sum();
            let vx = v.eval_vec(0.0, &x);
            let got = flux_vector(&lhs.eval(0.0, &x));
            for i in 0..3 {
                worst = worst.max((got[i] - (-curl[i] + vx[i] * div_b)).abs());
            }
        }
    }
    Ok(IdentityCheck::new("induction", s.cases, worst, s.tolerance))
}

/// Residuals of `∂_tρ + div(ρv) = 0` (top forms) and `∂_t f + v·∇f = 0`
/// (0-forms) on deterministic pushforward solutions, by central differences
/// in space and time around `t = 1/2`.
pub fn solution_residuals(s: &SpecializationSettings) -> Result<(IdentityCheck, IdentityCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 3);
    let n = 2;
    let v = random_trig_field(n, 2, &mut rng)?.scale(0.5);
    let sys = FlowSystem::deterministic(v.clone())?;
    let grid = TimeGrid::uniform(1.0, s.steps)?;
    let paths = BrownianPaths::zero(0, &grid, 1);
    let dt = grid.dt(0);
    let mid = s.steps / 2;
    let (t0, t1) = (grid.times()[mid - 1], grid.times()[mid + 1]);
    let t = grid.times()[mid];
    let h = 1e-3;
    let mut worst = [0.0f64; 2];
    for (slot, k) in [(0usize, n), (1, 0)] {
        let k0 = KFormField::new(n, k, vec![Expr::dist_sq(&[0.1, -0.2]).neg().exp()])?;
        let before = solve_pushforward(&k0, &sys, &paths, Scheme::Heun, t0)?;
        let now = solve_pushforward(&k0, &sys, &paths, Scheme::Heun, t)?;
        let after = solve_pushforward(&k0, &sys, &paths, Scheme::Heun, t1)?;
        let val = |y: &[f64]| now.eval(0, y).map(|c| c[0]).unwrap_or(f64::NAN);
        for x in probes(n, s.probes, &mut rng) {
            let dtv = (after.eval(0, &x)?[0] - before.eval(0, &x)?[0]) / (2.0 * dt);
            let vx = v.eval_vec(0.0, &x);
            let space: f64 = if k == n {
                (0..n).map(|i| central(|y| val(y) * v.eval_vec(0.0, y)[i], &x, i, h)).sum()
            } else {
                (0..n).map(|i| vx[i] * central(val, &x, i, h)).sum()
            };
            worst[slot] = worst[slot].max((dtv + space).abs());
        }
    }
    Ok((
        IdentityCheck::new("continuity-solution", s.probes, worst[0], s.solution_tolerance),
        IdentityCheck::new("transport-solution", s.probes, worst[1], s.solution_tolerance),
    ))
}

/// All identity and solution-level checks.
pub fn specialization_suite(s: &SpecializationSettings) -> Result<Vec<IdentityCheck>> {
    let (cont, transport) = solution_residuals(s)?;
    Ok(vec![
        volume_form_identity(s)?,
        scalar_identity(s)?,
        induction_identity(s)?,
        cont,
        transport,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_special_cases_hold() {
        let checks = specialization_suite(&SpecializationSettings::default()).unwrap();
        for c in &checks {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn flux_round_trip() {
        let b = VectorField::constant(&[1.0, 2.0, 3.0]).unwrap();
        let beta = flux_form(&b).unwrap().eval(0.0, &[0.0; 3]);
        assert_eq!(flux_vector(&beta), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_sign_induction_is_detected() {
        // The identity with +curl must fail for a generic field.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_trig_field(3, 2, &mut rng).unwrap();
        let bf = random_trig_field(3, 2, &mut rng).unwrap();
        let lhs = lie_derivative(&v, &flux_form(&bf).unwrap()).unwrap();
        let x = [0.2, -0.1, 0.3];
        let h = 1e-4;
        let vxb = |y: &[f64], i: usize| cross(&v.eval_vec(0.0, y), &bf.eval_vec(0.0, y))[i];
        let d = |i: usize, j: usize| central(|y| vxb(y, i), &x, j, h);
        let curl = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
        let got = flux_vector(&lhs.eval(0.0, &x));
        let div_b: f64 = (0..3).map(|i| central(|y| bf.eval_vec(0.0, y)[i], &x, i, h)).sum();
        let vx = v.eval_vec(0.0, &x);
        let wrong: f64 = (0..3).map(|i| (got[i] - (curl[i] + vx[i] * div_b)).abs()).fold(0.0, f64::max);
        assert!(wrong > 1e-3);
    }
}
