//! Hölder drift with non-unique characteristics and the family of
//! deterministic weak solutions it admits.
//!
//! `b(x) = (1/(1−α)) (x/|x|) (|x| ∧ R)^α`, `b(0) = 0`. Every ray
//! `x_v(t − t₀) = v (t − t₀)^{1/(1−α)}` leaving the origin at `t₀ ≥ 0` solves
//! `ẋ = b(x)`, so inside the ball swept out since `t = 0` the transported
//! value can be chosen freely along each ray (a selection `γ_v(t₀)`).
//! Outside that ball the flow is unique and integrated in closed form.
//!
//! The free interior values give weak solutions of the transport equation
//! for 0-forms; for `k > 0` an interior constant along rays is not a
//! transported form and only the exterior part is meaningful.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::field::{FieldMeta, KFormField, TestForm, VectorField};
use crate::calculus::maps::pull_coefficients;
use crate::calculus::norms::holder_seminorm_estimate;
use crate::calculus::ops::lie_derivative_adjoint;
use crate::calculus::quadrature::gauss_legendre;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flow::{coupled_distance, integrate_flow, BrownianPaths, EnsembleOptions, FlowSystem, Record, TimeGrid};
use crate::mollifier::{mollify_vector, Mollifier, MollifyRoute};
use crate::report::{decreasing_in_trend, ConvergenceReport};

/// Parameters of the radial Hölder drift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderDrift {
    pub alpha: f64,
    pub r_cut: f64,
    pub n: usize,
}

impl HolderDrift {
    pub fn new(alpha: f64, r_cut: f64, n: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidHolderExponent(alpha));
        }
        if !(r_cut > 0.0) || n == 0 {
            return Err(Error::InvalidParameter(format!("need R > 0 and n ≥ 1, got R = {r_cut}, n = {n}")));
        }
        Ok(HolderDrift { alpha, r_cut, n })
    }

    fn c(&self) -> f64 {
        1.0 / (1.0 - self.alpha)
    }

    /// `R^α/(1−α)`.
    pub fn bound(&self) -> f64 {
        self.c() * self.r_cut.powf(self.alpha)
    }

    /// Radial speed `|b|` at radius `r`.
    pub fn speed(&self, r: f64) -> f64 {
        self.c() * r.min(self.r_cut).powf(self.alpha)
    }

    /// Time for the radial flow to reach radius `r` from the origin.
    pub fn clock(&self, r: f64) -> f64 {
        let e = 1.0 - self.alpha;
        if r <= self.r_cut {
            r.powf(e)
        } else {
            self.r_cut.powf(e) + (r - self.r_cut) / self.bound()
        }
    }

    /// Inverse of [`clock`](Self::clock).
    pub fn radius_at(&self, s: f64) -> f64 {
        let e = 1.0 - self.alpha;
        let knee = self.r_cut.powf(e);
        if s <= knee {
            s.max(0.0).powf(1.0 / e)
        } else {
            self.r_cut + (s - knee) * self.bound()
        }
    }

    /// Radius of the region reached from the origin by time `t`.
    pub fn ball_radius(&self, t: f64) -> f64 {
        self.radius_at(t)
    }

    /// `b(x + offset)` with analytic Jacobian away from 0 and the cutoff sphere.
    pub fn shifted_field(&self, offset: &[f64]) -> Result<VectorField> {
        if offset.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: offset.len(),
            });
        }
        let n = self.n;
        let (a, c, rc) = (self.alpha, self.c(), self.r_cut);
        let y: Vec<Expr> = (0..n).map(|i| Expr::var(i).add(&Expr::constant(offset[i]))).collect();
        let r = Expr::sum(&y.iter().map(|v| v.mul(v)).collect::<Vec<_>>()).sqrt();
        let tiny = Expr::constant(f64::MIN_POSITIVE);
        let cut = Expr::constant(rc);
        // Radial factor f(r): b = f(r) y.
        let inner = r.powf(a - 1.0).scale(c);
        let outer = r.powf(-1.0).scale(c * rc.powf(a));
        let f = r.less_than(&tiny, &Expr::zero(), &r.less_than(&cut, &inner, &outer));
        // Db = f I + (f'(r)/r) y yᵀ with f'/r = c(α−1) r^{α−3} inside, −c R^α r^{−3} outside.
        let g_in = r.powf(a - 3.0).scale(c * (a - 1.0));
        let g_out = r.powf(-3.0).scale(-c * rc.powf(a));
        let g = r.less_than(&tiny, &Expr::zero(), &r.less_than(&cut, &g_in, &g_out));
        let comps: Vec<Expr> = y.iter().map(|v| f.mul(v)).collect();
        let mut jac = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let yy = g.mul(&y[i].mul(&y[j]));
                jac.push(if i == j { f.add(&yy) } else { yy });
            }
        }
        Ok(VectorField::new(comps)?.with_jacobian(jac)?.with_meta(FieldMeta {
            holder_alpha: Some(a),
            cutoff_radius: Some(rc),
            label: format!("radial-holder(alpha = {a}, R = {rc})"),
        }))
    }

    pub fn field(&self) -> Result<VectorField> {
        self.shifted_field(&vec![0.0; self.n])
    }

    /// `x_v(t − t₀)`: the ray in direction `v` leaving the origin at `t₀`.
    pub fn explicit_characteristics(&self, v: &[f64], t: f64, t0: f64) -> Result<Vec<f64>> {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if v.len() != self.n || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("direction must be a unit vector in R^n".into()));
        }
        if !(t >= t0 && t0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("need t ≥ t0 ≥ 0, got t = {t}, t0 = {t0}")));
        }
        let r = self.radius_at(t - t0);
        Ok(v.iter().map(|a| a * r).collect())
    }

    /// Departure time and direction of the ray through `x` at time `t`.
    pub fn t0_map(&self, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(Error::AtOrigin);
        }
        let t0 = t - self.clock(r);
        // Allow the boundary up to rounding.
        if t0 < -1e-12 * t.max(1.0) {
            return Err(Error::OutsideBall { t, x: x.to_vec() });
        }
        Ok((t0.max(0.0), x.iter().map(|a| a / r).collect()))
    }

    /// Closed-form `φ_t^{-1}(x)` and its Jacobian outside the ball; `None`
    /// inside or on it.
    pub fn inverse_flow(&self, t: f64, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let s = self.clock(r) - t;
        if !(s > 0.0) {
            return None;
        }
        let r0 = self.radius_at(s);
        let dr0 = self.speed(r0) / self.speed(r);
        let g = r0 / r;
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                jac[i * n + j] = (dr0 - g) * x[i] * x[j] / (r * r) + if i == j { g } else { 0.0 };
            }
        }
        Some((x.iter().map(|a| a * g).collect(), jac))
    }

    /// Lower estimate of the α-Hölder constant from `pairs` random pairs in `B(0, 2R)`.
    pub fn holder_ratio(&self, pairs: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
            .map(|_| {
                (
                    ball_point(self.n, 2.0 * self.r_cut, &mut rng),
                    ball_point(self.n, 2.0 * self.r_cut, &mut rng),
                )
            })
            .collect();
        holder_seminorm_estimate(&self.field()?, self.alpha, 0.0, &probes)
    }

    /// Value `2^{1−α}/(1−α)` attained by antipodal pairs inside the cutoff.
    pub fn antipodal_ratio(&self) -> f64 {
        self.c() * 2f64.powf(1.0 - self.alpha)
    }
}

fn ball_point(n: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if p.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return p.into_iter().map(|a| a * radius).collect();
        }
    }
}

/// `b` of the given exponent.
pub fn holder_drift(alpha: f64, r_cut: f64, n: usize) -> Result<VectorField> {
    HolderDrift::new(alpha, r_cut, n)?.field()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderProbe {
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    pub antipodal: f64,
}

/// Hölder ratio with `pairs` probes and with `4 × pairs` (a superset).
pub fn holder_probe_stability(drift: &HolderDrift, pairs: usize, seed: u64) -> Result<HolderProbe> {
    let coarse = drift.holder_ratio(pairs, seed)?;
    let fine = drift.holder_ratio(4 * pairs, seed)?;
    Ok(HolderProbe {
        coarse,
        fine,
        relative_change: (fine - coarse) / coarse,
        antipodal: drift.antipodal_ratio(),
    })
}

/// Central-difference residual `|(x(t+h) − x(t−h))/2h − b(x(t))|` of a ray
/// for each step `h`.
pub fn characteristic_residual_sweep(drift: &HolderDrift, v: &[f64], t0: f64, t: f64, steps: &[f64]) -> Result<ConvergenceReport> {
    let b = drift.field()?;
    let x = drift.explicit_characteristics(v, t, t0)?;
    let bx = b.eval_vec(0.0, &x);
    let mut report = ConvergenceReport::new("characteristic-residual", "h", &[]);
    for &h in steps {
        if !(h > 0.0 && t - h >= t0) {
            return Err(Error::InvalidParameter(format!("step {h} leaves the ray")));
        }
        let p = drift.explicit_characteristics(v, t + h, t0)?;
        let m = drift.explicit_characteristics(v, t - h, t0)?;
        let res = (0..drift.n)
            .map(|i| ((p[i] - m[i]) / (2.0 * h) - bx[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        report.push(h, res, 0.0, vec![]);
    }
    report.fit();
    Ok(report)
}

/// Interior values `γ_v(t₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaSelection {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `K₀(0)`: the limit of the exterior solution at the ball boundary.
    Matched,
    /// `amplitude · cos(frequency · v₀) · cos(t₀)` in every channel.
    Oscillating {
        amplitude: f64,
        frequency: f64,
    },
}

impl GammaSelection {
    pub fn label(&self) -> String {
        match self {
            GammaSelection::Zero => "zero".into(),
            GammaSelection::Constant { .. } => "constant".into(),
            GammaSelection::Matched => "matched".into(),
            GammaSelection::Oscillating { .. } => "oscillating".into(),
        }
    }

    fn eval(&self, k0: &KFormField, v: &[f64], t0: f64) -> Vec<f64> {
        let m = k0.num_channels();
        match self {
            GammaSelection::Zero => vec![0.0; m],
            GammaSelection::Constant { value } => value.clone(),
            GammaSelection::Matched => k0.eval(0.0, &vec![0.0; k0.n()]),
            GammaSelection::Oscillating { amplitude, frequency } => vec![amplitude * (frequency * v[0]).cos() * t0.cos(); m],
        }
    }

    /// Declared bound on the fibre norm of the values.
    pub fn bound(&self, k0: &KFormField) -> f64 {
        let norm = |c: &[f64]| c.iter().map(|a| a * a).sum::<f64>().sqrt();
        match self {
            GammaSelection::Zero => 0.0,
            GammaSelection::Constant { value } => norm(value),
            GammaSelection::Matched => norm(&k0.eval(0.0, &vec![0.0; k0.n()])),
            GammaSelection::Oscillating { amplitude, .. } => amplitude.abs() * (k0.num_channels() as f64).sqrt(),
        }
    }
}

/// `u_γ`: pushforward of `K₀` outside the ball, `γ` inside.
#[derive(Clone, Debug)]
pub struct NonuniqueSolution {
    pub drift: HolderDrift,
    pub gamma: GammaSelection,
    pub k0: KFormField,
}

impl NonuniqueSolution {
    pub fn new(drift: HolderDrift, gamma: GammaSelection, k0: KFormField) -> Result<Self> {
        if k0.n() != drift.n {
            return Err(Error::DimensionMismatch {
                left: drift.n,
                right: k0.n(),
            });
        }
        if let GammaSelection::Constant { value } = &gamma {
            if value.len() != k0.num_channels() {
                return Err(Error::ChannelCount {
                    n: k0.n(),
                    k: k0.degree(),
                    expected: k0.num_channels(),
                    got: value.len(),
                });
            }
        }
        Ok(NonuniqueSolution { drift, gamma, k0 })
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if t <= 0.0 {
            return Ok(self.k0.eval(0.0, x));
        }
        match self.drift.inverse_flow(t, x) {
            Some((y, jac)) => Ok(pull_coefficients(self.drift.n, self.k0.degree(), &self.k0.eval(0.0, &y), &jac)),
            None => {
                let (t0, v) = self.drift.t0_map(t, x)?;
                Ok(self.gamma.eval(&self.k0, &v, t0))
            }
        }
    }
}

/// Tensor quadrature on the disc `B(0, radius)` in R²: Gauss–Legendre in
/// `r` (with `r = s u²` on an inner disc of radius `s` to absorb `|x|^{α−1}`
/// singularities and jumps at `|x| = s`), trapezoid in angle, composite
/// Gauss–Legendre in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarQuadrature {
    pub radius: f64,
    pub radial_panels: usize,
    pub order: usize,
    pub angular: usize,
    pub time_panels: usize,
}

impl Default for PolarQuadrature {
    fn default() -> Self {
        PolarQuadrature {
            radius: 2.0,
            radial_panels: 2,
            order: 8,
            angular: 64,
            time_panels: 2,
        }
    }
}

impl PolarQuadrature {
    pub fn refined(&self) -> Self {
        PolarQuadrature {
            radial_panels: 2 * self.radial_panels,
            angular: 2 * self.angular,
            time_panels: 2 * self.time_panels,
            ..*self
        }
    }

    fn panel_nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let (gn, gw) = gauss_legendre(self.order);
        let h = (b - a) / self.radial_panels as f64;
        let mut out = Vec::with_capacity(self.radial_panels * self.order);
        for p in 0..self.radial_panels {
            let lo = a + p as f64 * h;
            for (z, w) in gn.iter().zip(&gw) {
                out.push((lo + 0.5 * h * (z + 1.0), 0.5 * h * w));
            }
        }
        out
    }

    /// Radial nodes `(r, w·r)` for `∫ f r dr`, split at `split`.
    fn radial(&self, split: Option<f64>) -> Vec<(f64, f64)> {
        let s = split.filter(|s| *s > 0.0 && *s < self.radius).unwrap_or(0.25 * self.radius);
        let mut out: Vec<(f64, f64)> = self
            .panel_nodes(0.0, 1.0)
            .into_iter()
            .map(|(u, w)| {
                let r = s * u * u;
                (r, w * 2.0 * s * u * r)
            })
            .collect();
        out.extend(self.panel_nodes(s, self.radius).into_iter().map(|(r, w)| (r, w * r)));
        out
    }

    /// `∫_{B(0,radius)} f`.
    pub fn integrate_disc(&self, split: Option<f64>, f: impl Fn(&[f64]) -> f64) -> f64 {
        let dphi = 2.0 * PI / self.angular as f64;
        let mut total = 0.0;
        for (r, w) in self.radial(split) {
            let mut ring = 0.0;
            for j in 0..self.angular {
                let phi = (j as f64 + 0.5) * dphi;
                ring += f(&[r * phi.cos(), r * phi.sin()]);
            }
            total += w * dphi * ring;
        }
        total
    }

    fn time_nodes(&self, t1: f64, t2: f64) -> Vec<(f64, f64)> {
        let (gn, gw) = gauss_legendre(self.order);
        let h = (t2 - t1) / self.time_panels as f64;
        let mut out = Vec::new();
        for p in 0..self.time_panels {
            let lo = t1 + p as f64 * h;
            for (z, w) in gn.iter().zip(&gw) {
                out.push((lo + 0.5 * h * (z + 1.0), 0.5 * h * w));
            }
        }
        out
    }
}

/// Form-valued function of `(t, x)`.
pub type Solution<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + Sync + 'a;
/// Radius of a moving interface to split the radial quadrature at.
pub type Interface<'a> = dyn Fn(f64) -> f64 + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeterministicResidual {
    /// `⟨⟨u(t₂),θ⟩⟩ − ⟨⟨u(t₁),θ⟩⟩ + ∫⟨⟨u, ℒ_b^Tθ⟩⟩ ds`.
    pub residual: f64,
    /// Largest of the three terms in absolute value.
    pub scale: f64,
    pub relative: f64,
}

/// Weak form of `∂_t u + ℒ_b u = 0` on `[t₁, t₂]` against `θ`, on the disc.
pub fn deterministic_weak_residual(
    u: &Solution<'_>,
    b: &VectorField,
    theta: &TestForm,
    window: (f64, f64),
    quad: &PolarQuadrature,
    interface: Option<&Interface<'_>>,
) -> Result<DeterministicResidual> {
    let form = theta.form();
    if form.n() != 2 || b.n() != 2 {
        return Err(Error::InvalidParameter("the disc quadrature is two-dimensional".into()));
    }
    let c = theta.center();
    if (c[0] * c[0] + c[1] * c[1]).sqrt() + theta.radius() > quad.radius {
        return Err(Error::SupportOutsideGrid);
    }
    let (t1, t2) = window;
    let step = (t2 - t1) / (quad.time_panels * quad.order) as f64;
    if !(t2 > t1) || t1 < step {
        return Err(Error::InvalidParameter(format!(
            "window [{t1}, {t2}] reaches the singular layer at t = 0 (time step {step})"
        )));
    }
    let adj = lie_derivative_adjoint(b, form)?;
    let pairing = |t: f64, test: &KFormField| -> Result<f64> {
        let split = interface.map(|f| f(t));
        let err = std::sync::Mutex::new(None);
        let v = quad.integrate_disc(split, |x| match u(t, x) {
            Ok(val) => test.eval(t, x).iter().zip(&val).map(|(a, b)| a * b).sum(),
            Err(e) => {
                err.lock().unwrap().get_or_insert(e);
                0.0
            }
        });
        match err.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let p1 = pairing(t1, form)?;
    let p2 = pairing(t2, form)?;
    let terms: Vec<f64> = quad
        .time_nodes(t1, t2)
        .par_iter()
        .map(|&(s, w)| pairing(s, &adj).map(|v| (w * v, w * v.abs())))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(a, b)| [a, b])
        .collect();
    let flux: f64 = terms.iter().step_by(2).sum();
    let flux_abs: f64 = terms.iter().skip(1).step_by(2).sum();
    let residual = p2 - p1 + flux;
    let scale = p1.abs().max(p2.abs()).max(flux_abs);
    Ok(DeterministicResidual {
        residual,
        scale,
        relative: residual.abs() / scale.max(f64::MIN_POSITIVE),
    })
}

/// `‖u₁(t) − u₂(t)‖_{L²(B(0, ρ(t)))}` over the swept ball.
pub fn ball_l2_distance(a: &NonuniqueSolution, b: &NonuniqueSolution, t: f64, quad: &PolarQuadrature) -> Result<f64> {
    let rho = a.drift.ball_radius(t);
    let inner = PolarQuadrature { radius: rho, ..*quad };
    let err = std::sync::Mutex::new(None);
    let v = inner.integrate_disc(None, |x| match (a.eval(t, x), b.eval(t, x)) {
        (Ok(p), Ok(q)) => p.iter().zip(&q).map(|(u, v)| (u - v).powi(2)).sum(),
        (Err(e), _) | (_, Err(e)) => {
            err.lock().unwrap().get_or_insert(e);
            0.0
        }
    });
    match err.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(v.sqrt()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionResidual {
    pub selection: String,
    /// Relative residual at each refinement level.
    pub relative: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleReport {
    pub selections: Vec<SelectionResidual>,
    /// Distance between the first two selections over the ball at the window end.
    pub distance: f64,
    /// Analytic distance when the first two selections are zero and a constant.
    pub analytic_distance: Option<f64>,
}

/// Weak residuals of several selections under `levels` quadrature refinements
/// plus the L² distance between the first two.
pub fn counterexample_study(
    drift: &HolderDrift,
    k0: &KFormField,
    selections: &[GammaSelection],
    theta: &TestForm,
    window: (f64, f64),
    quad: &PolarQuadrature,
    levels: usize,
) -> Result<CounterexampleReport> {
    if selections.len() < 2 {
        return Err(Error::InvalidParameter("need at least two selections".into()));
    }
    let b = drift.field()?;
    let sols: Vec<NonuniqueSolution> = selections
        .iter()
        .map(|g| NonuniqueSolution::new(*drift, g.clone(), k0.clone()))
        .collect::<Result<_>>()?;
    let iface = |t: f64| drift.ball_radius(t);
    let mut out = Vec::new();
    for sol in &sols {
        let mut q = *quad;
        let mut rel = Vec::new();
        let mut res = Vec::new();
        for _ in 0..levels {
            let r = deterministic_weak_residual(&|t, x| sol.eval(t, x), &b, theta, window, &q, Some(&iface))?;
            rel.push(r.relative);
            res.push(r.residual);
            q = q.refined();
        }
        out.push(SelectionResidual {
            selection: sol.gamma.label(),
            relative: rel,
            residual: res,
        });
    }
    let fine = (0..levels.saturating_sub(1)).fold(*quad, |q, _| q.refined());
    let distance = ball_l2_distance(&sols[0], &sols[1], window.1, &fine)?;
    let analytic_distance = match (&selections[0], &selections[1]) {
        (GammaSelection::Zero, GammaSelection::Constant { value }) | (GammaSelection::Constant { value }, GammaSelection::Zero) => {
            let c = value.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rho = drift.ball_radius(window.1);
            Some(c * (PI * rho * rho).sqrt())
        }
        _ => None,
    };
    Ok(CounterexampleReport {
        selections: out,
        distance,
        analytic_distance,
    })
}

/// Control with a smooth constant drift: the exact transport solution and a
/// copy overwritten by `c` on the Hölder ball. Returns both relative residuals.
pub fn falsifiability_control(
    drift: &HolderDrift,
    k0: &KFormField,
    velocity: &[f64],
    c: f64,
    theta: &TestForm,
    window: (f64, f64),
    quad: &PolarQuadrature,
) -> Result<(f64, f64)> {
    let b = VectorField::constant(velocity)?;
    let exact = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let y: Vec<f64> = x.iter().zip(velocity).map(|(a, v)| a - t * v).collect();
        Ok(k0.eval(0.0, &y))
    };
    let tampered = |t: f64, x: &[f64]| -> Result<Vec<f64>> {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r < drift.ball_radius(t) {
            Ok(vec![c; k0.num_channels()])
        } else {
            exact(t, x)
        }
    };
    let iface = |t: f64| drift.ball_radius(t);
    let honest = deterministic_weak_residual(&exact, &b, theta, window, quad, None)?;
    let bad = deterministic_weak_residual(&tampered, &b, theta, window, quad, Some(&iface))?;
    Ok((honest.relative, bad.relative))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSelectionSettings {
    pub alpha: f64,
    pub r_cut: f64,
    pub n: usize,
    pub amplitude: f64,
    pub eps_list: Vec<f64>,
    pub paths: usize,
    pub steps: usize,
    pub t_end: f64,
    pub seed: u64,
    /// Alternating kernel offset, in units of ε.
    pub shift: f64,
    pub rule_points: usize,
    pub x0: Vec<f64>,
}

impl Default for NoiseSelectionSettings {
    fn default() -> Self {
        NoiseSelectionSettings {
            alpha: 0.5,
            r_cut: 10.0,
            n: 2,
            amplitude: 1.0,
            eps_list: vec![0.2, 0.1, 0.05],
            paths: 64,
            steps: 64,
            t_end: 1.0,
            seed: 3,
            shift: 0.5,
            rule_points: 8,
            x0: vec![0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseSelectionReport {
    /// `E[sup_t |φ^{ε_j} − φ^{ε_{j+1}}|]` with noise, indexed by `ε_j`.
    pub noisy: ConvergenceReport,
    pub noiseless: ConvergenceReport,
    pub noisy_decreasing: bool,
}

/// Consecutive-ε gaps of flows of `b^ε` started at `x0`, with and without
/// constant noise of the given amplitude on every axis. The `b^ε` use a
/// kernel offset alternating in sign so that the noiseless flows are pushed
/// onto different branches.
pub fn noise_selection_experiment(s: &NoiseSelectionSettings, require_noise: bool) -> Result<NoiseSelectionReport> {
    if require_noise && !(s.amplitude > 0.0) {
        return Err(Error::ZeroNoiseAmplitude);
    }
    if s.eps_list.len() < 2 {
        return Err(Error::SweepTooShort {
            needed: 2,
            got: s.eps_list.len(),
        });
    }
    if s.x0.len() != s.n {
        return Err(Error::DimensionMismatch {
            left: s.n,
            right: s.x0.len(),
        });
    }
    let drift = HolderDrift::new(s.alpha, s.r_cut, s.n)?;
    let grid = TimeGrid::uniform(s.t_end, s.steps)?;
    let mut fields = Vec::new();
    for (j, &eps) in s.eps_list.iter().enumerate() {
        let mut offset = vec![0.0; s.n];
        offset[0] = if j % 2 == 0 { 1.0 } else { -1.0 } * s.shift * eps;
        let rule = Mollifier::new(s.n, eps)?.rule(s.rule_points)?;
        fields.push(mollify_vector(&drift.shifted_field(&offset)?, &rule, MollifyRoute::Kernel)?);
    }
    let opts = EnsembleOptions {
        record: Record::All,
        ..Default::default()
    };
    let x0s = vec![s.x0.clone()];
    let xis: Vec<VectorField> = (0..s.n)
        .map(|d| {
            let mut c = vec![0.0; s.n];
            c[d] = s.amplitude;
            VectorField::constant(&c)
        })
        .collect::<Result<_>>()?;
    let noisy_paths = BrownianPaths::generate(s.n, &grid, s.seed, s.paths)?;
    let quiet_paths = BrownianPaths::zero(0, &grid, 1);
    let run = |noisy: bool| -> Result<ConvergenceReport> {
        let ens: Vec<_> = fields
            .iter()
            .map(|b| {
                let (sys, paths) = if noisy {
                    (FlowSystem::new(b.clone(), xis.clone())?, &noisy_paths)
                } else {
                    (FlowSystem::deterministic(b.clone())?, &quiet_paths)
                };
                let e = integrate_flow(&sys, paths, &x0s, opts)?;
                e.check_flag_budget()?;
                Ok(e)
            })
            .collect::<Result<_>>()?;
        let mut rep = ConvergenceReport::new(if noisy { "noise-on" } else { "noise-off" }, "epsilon", &[]);
        for j in 0..ens.len() - 1 {
            let (gap, _) = coupled_distance(&ens[j], &ens[j + 1], 1.0)?;
            // One deterministic path carries no sampling error.
            let se = if noisy { gap.std_error } else { 0.0 };
            rep.push(s.eps_list[j], gap.value, se, vec![]);
        }
        rep.fit();
        Ok(rep)
    };
    let noisy = run(true)?;
    let noiseless = run(false)?;
    let noisy_decreasing = decreasing_in_trend(&noisy.abs_values());
    Ok(NoiseSelectionReport {
        noisy,
        noiseless,
        noisy_decreasing,
    })
}

/// Builder for the default scalar initial datum of the experiments.
pub fn gaussian_datum(center: &[f64], width: f64) -> Result<KFormField> {
    KFormField::scalar(center.len(), Expr::dist_sq(center).scale(-1.0 / (width * width)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn half() -> HolderDrift {
        HolderDrift::new(0.5, 10.0, 2).unwrap()
    }

    #[test]
    fn drift_values() {
        let b = holder_drift(0.5, 10.0, 2).unwrap();
        assert_relative_eq!(b.eval_vec(0.0, &[1.0, 0.0])[0], 2.0, epsilon = 1e-14);
        assert_eq!(b.eval_vec(0.0, &[0.0, 0.0]), vec![0.0, 0.0]);
        let far = b.eval_vec(0.0, &[0.0, 30.0]);
        assert_relative_eq!(far[1], 10f64.sqrt() * 2.0, epsilon = 1e-12);
        assert!(holder_drift(1.0, 1.0, 2).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let b = holder_drift(0.3, 2.0, 3).unwrap();
        let probes = vec![vec![0.4, -0.2, 0.7], vec![1.5, 1.2, -0.3], vec![-0.1, 0.05, 0.02]];
        assert!(b.jacobian_fd_discrepancy(0.0, &probes, 1e-6) < 1e-5);
    }

    #[test]
    fn characteristics_examples() {
        let d = half();
        assert_eq!(d.explicit_characteristics(&[1.0, 0.0], 1.0, 0.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(d.explicit_characteristics(&[1.0, 0.0], 0.7, 0.7).unwrap(), vec![0.0, 0.0]);
        assert_eq!(d.explicit_characteristics(&[1.0, 0.0], 2.0, 1.0).unwrap(), vec![1.0, 0.0]);
        let (t0, v) = d.t0_map(1.0, &[0.25, 0.0]).unwrap();
        assert_relative_eq!(t0, 0.5, epsilon = 1e-15);
        assert_eq!(v, vec![1.0, 0.0]);
        assert_eq!(d.t0_map(1.0, &[1.0, 0.0]).unwrap().0, 0.0);
        assert_eq!(d.t0_map(1.0, &[0.0, 0.0]).unwrap_err(), Error::AtOrigin);
        assert!(matches!(d.t0_map(1.0, &[1.5, 0.0]), Err(Error::OutsideBall { .. })));
    }

    #[test]
    fn ode_residual_is_second_order() {
        let d = HolderDrift::new(1.0 / 3.0, 10.0, 2).unwrap();
        let v = [0.6, 0.8];
        let rep = characteristic_residual_sweep(&d, &v, 0.2, 1.0, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
        assert!(rep.slope.unwrap() > 1.9, "{:?}", rep.values());
    }

    #[test]
    fn exterior_inverse_flow_round_trips() {
        let d = HolderDrift::new(0.4, 1.5, 2).unwrap();
        for (x, t) in [([1.3, 0.4], 0.3), ([0.0, 3.0], 1.0), ([-2.0, 0.5], 0.8)] {
            let (y, _) = d.inverse_flow(t, &x).unwrap();
            let ry = (y[0] * y[0] + y[1] * y[1]).sqrt();
            let rx = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert_relative_eq!(d.radius_at(d.clock(ry) + t), rx, epsilon = 1e-12);
        }
        assert!(d.inverse_flow(1.0, &[0.2, 0.0]).is_none());
    }

    #[test]
    fn inverse_flow_jacobian_matches_finite_differences() {
        let d = HolderDrift::new(0.5, 1.2, 2).unwrap();
        let x = [0.9, 0.8];
        let t = 0.4;
        let (_, jac) = d.inverse_flow(t, &x).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut p = x;
            let mut m = x;
            p[j] += h;
            m[j] -= h;
            let (yp, _) = d.inverse_flow(t, &p).unwrap();
            let (ym, _) = d.inverse_flow(t, &m).unwrap();
            for i in 0..2 {
                assert!((jac[i * 2 + j] - (yp[i] - ym[i]) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn holder_probe_is_stable() {
        let p = holder_probe_stability(&half(), 10_000, 1).unwrap();
        assert!(p.relative_change < 0.05, "{p:?}");
        assert!(p.fine <= p.antipodal * (1.0 + 1e-12));
    }

    fn study_inputs() -> (KFormField, TestForm, PolarQuadrature) {
        let k0 = gaussian_datum(&[0.2, -0.1], 1.0).unwrap();
        let theta = TestForm::bump(2, 0, &[0.3, 0.1], 1.2, vec![Expr::one()]).unwrap();
        (k0, theta, PolarQuadrature::default())
    }

    #[test]
    fn two_selections_are_distinct_weak_solutions() {
        let (k0, theta, quad) = study_inputs();
        let sel = vec![
            GammaSelection::Zero,
            GammaSelection::Constant { value: vec![0.8] },
            GammaSelection::Matched,
        ];
        let r = counterexample_study(&half(), &k0, &sel, &theta, (0.25, 0.9), &quad, 2).unwrap();
        for s in &r.selections {
            assert!(*s.relative.last().unwrap() < 1e-3, "{s:?}");
        }
        let exact = r.analytic_distance.unwrap();
        assert!((r.distance - exact).abs() < 1e-10 * exact.max(1.0), "{} {}", r.distance, exact);
    }

    #[test]
    fn tampering_is_detected() {
        let (k0, theta, quad) = study_inputs();
        let fine = quad.refined().refined();
        let (honest, bad) = falsifiability_control(&half(), &k0, &[0.6, -0.2], -1.0, &theta, (0.25, 0.9), &fine).unwrap();
        assert!(honest < 1e-6, "{honest}");
        assert!(bad > 1e-2, "{bad}");
    }

    #[test]
    fn window_must_avoid_initial_layer() {
        let (k0, theta, quad) = study_inputs();
        let sol = NonuniqueSolution::new(half(), GammaSelection::Zero, k0).unwrap();
        let b = half().field().unwrap();
        assert!(deterministic_weak_residual(&|t, x| sol.eval(t, x), &b, &theta, (0.0, 1.0), &quad, None).is_err());
    }

    #[test]
    fn zero_amplitude_rejected_in_assert_mode() {
        let s = NoiseSelectionSettings {
            amplitude: 0.0,
            ..Default::default()
        };
        assert_eq!(noise_selection_experiment(&s, true).unwrap_err(), Error::ZeroNoiseAmplitude);
    }

    #[test]
    fn noise_selects_while_deterministic_flows_branch() {
        let r = noise_selection_experiment(&NoiseSelectionSettings::default(), true).unwrap();
        assert!(r.noisy_decreasing, "{:?}", r.noisy.values());
        // Without noise the alternating offsets send consecutive flows to opposite branches.
        for v in r.noiseless.values() {
            assert!(v > 1.0, "{:?}", r.noiseless.values());
        }
    }

    proptest! {
        #[test]
        fn t0_map_inverts_characteristics(t in 0.1f64..3.0, frac in 0.01f64..0.99, ang in 0.0f64..std::f64::consts::TAU, alpha in 0.1f64..0.9) {
            let d = HolderDrift::new(alpha, 2.0, 2).unwrap();
            let v = [ang.cos(), ang.sin()];
            let t0 = frac * t;
            let x = d.explicit_characteristics(&v, t, t0).unwrap();
            let (s0, w) = d.t0_map(t, &x).unwrap();
            prop_assert!((s0 - t0).abs() < 1e-12 * t.max(1.0));
            prop_assert!((w[0] - v[0]).abs() < 1e-12 && (w[1] - v[1]).abs() < 1e-12);
        }

        #[test]
        fn drift_is_bounded(x in prop::collection::vec(-50.0f64..50.0, 3), alpha in 0.05f64..0.95) {
            let d = HolderDrift::new(alpha, 3.0, 3).unwrap();
            let v = d.field().unwrap().eval_vec(0.0, &x);
            prop_assert!(v.iter().map(|a| a * a).sum::<f64>().sqrt() <= d.bound() * (1.0 + 1e-12));
        }
    }
}
