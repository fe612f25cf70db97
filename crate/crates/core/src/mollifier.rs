//! Mollification of forms and vector fields, and the commutators
//! `[ℒ_b, ρ^ε *]K` and `[ℒ_ξ, [ℒ_ξ, ρ^ε *]]K` paired with test forms.
//!
//! Convolutions are evaluated with a product rule on the ball `B(0, ε)`
//! (radial Gauss–Legendre times an angular rule). The discrete kernel weights are renormalised to unit mass so
//! that constants are reproduced exactly and the symmetric node set keeps
//! linear fields exact as well.

use std::sync::Arc;

use crate::calculus::field::{KFormField, TestForm, VectorField};
use crate::calculus::multi_index::{combinations, signed_rank};
use crate::calculus::norms::{jacobian_sup_ball, lp_norm_ball, pair_with_test, vector_sup_ball};
use crate::calculus::ops::lie_derivative;
use crate::calculus::quadrature::{gauss_legendre, ordered_par_sum, QuadratureGrid, Rule};
use crate::error::{Error, Result};
use crate::expr::{Expr, OpaqueScalar};
use crate::report::ConvergenceReport;

/// Default radial Gauss–Legendre points of the convolution rule.
pub const DEFAULT_KERNEL_POINTS: usize = 16;

/// Unnormalised unit bump `exp(-1/(1-|x|²))` on the open unit ball.
pub fn unit_bump(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn gamma_half(n: usize) -> f64 {
    // Γ(n/2)
    if n.is_multiple_of(2) {
        (1..n / 2).map(|i| i as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut a = 0.5;
        while a < n as f64 / 2.0 - 0.25 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// `∫_{R^n} exp(-1/(1-|x|²)) dx` via the radial integral.
pub fn bump_mass(n: usize) -> f64 {
    let sphere = 2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n);
    let (z, w) = gauss_legendre(16);
    let panels = 128;
    let h = 1.0 / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        for (zi, wi) in z.iter().zip(&w) {
            let r = (p as f64 + 0.5 * (zi + 1.0)) * h;
            s += 0.5 * wi * h * r.powi(n as i32 - 1) * unit_bump(&[r]);
        }
    }
    sphere * s
}

/// `ρ^ε(x) = ε^{-n} c exp(-1/(1-|x/ε|²))` with `c` making the mass one.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    n: usize,
    epsilon: f64,
    normalization: f64,
}

impl Mollifier {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Mollifier {
            n,
            epsilon,
            normalization: 1.0 / bump_mass(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The constant `c` in `ρ = c exp(-1/(1-|x|²))`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let scaled: Vec<f64> = z.iter().map(|v| v / self.epsilon).collect();
        self.normalization * unit_bump(&scaled) / self.epsilon.powi(self.n as i32)
    }

    /// The kernel as an expression in the variables `x_i` (used for exact
    /// kernel derivatives).
    pub fn kernel_expr(&self) -> Expr {
        let origin = vec![0.0; self.n];
        Expr::dist_sq(&origin)
            .scale(1.0 / (self.epsilon * self.epsilon))
            .bump_exp()
            .scale(self.normalization / self.epsilon.powi(self.n as i32))
    }

    /// Mass of `ρ^ε` by the radial rule (independent of the convolution nodes).
    pub fn radial_mass(&self) -> f64 {
        self.normalization * bump_mass(self.n)
    }

    /// Mass of `ρ^ε` under the un-normalised tensor rule with `points` per axis.
    pub fn tensor_mass(&self, points: usize) -> Result<f64> {
        let g = QuadratureGrid::cube(&vec![0.0; self.n], self.epsilon, points, Rule::GaussLegendre { order: points })?;
        Ok(g.integrate(|z| self.eval(z)))
    }

    /// Convolution rule with `points` radial nodes.
    pub fn rule(&self, points: usize) -> Result<Arc<ConvolutionRule>> {
        ConvolutionRule::new(self, points).map(Arc::new)
    }
}

/// Discrete convolution rule: nodes `z_i ∈ B(0, ε)` and unit-mass weights.
#[derive(Debug)]
pub struct ConvolutionRule {
    n: usize,
    epsilon: f64,
    points: usize,
    nodes: Vec<f64>,
    raw_weights: Vec<f64>,
    kernel: Expr,
    mass: f64,
    base: Vec<f64>,
}

impl ConvolutionRule {
    fn new(m: &Mollifier, points: usize) -> Result<Self> {
        let n = m.n();
        if points < 2 {
            return Err(Error::InvalidGrid("kernel rule needs at least 2 points".into()));
        }
        let eps = m.epsilon();
        let kernel = m.kernel_expr();
        let (pts_nodes, pts_weights) = radial_nodes(n, eps, points)?;
        let mut nodes = Vec::new();
        let mut raw_weights = Vec::new();
        let mut vals = Vec::new();
        for (i, w) in pts_weights.iter().enumerate() {
            let z = &pts_nodes[i * n..(i + 1) * n];
            let v = kernel.eval(0.0, z);
            if v == 0.0 {
                continue;
            }
            nodes.extend_from_slice(z);
            raw_weights.push(*w);
            vals.push(v * w);
        }
        let mass: f64 = vals.iter().sum();
        let base = vals.iter().map(|v| v / mass).collect();
        Ok(ConvolutionRule {
            n,
            epsilon: eps,
            points,
            nodes,
            raw_weights,
            kernel,
            mass,
            base,
        })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.n..(i + 1) * self.n]
    }

    /// Tensor-rule mass before renormalisation.
    pub fn raw_mass(&self) -> f64 {
        self.mass
    }

    /// Weights `w_i ρ^ε(z_i) / mass`.
    pub fn weights(&self) -> &[f64] {
        &self.base
    }

    /// Weights for `∂^α ρ^ε` with `α` the multiset `dirs`.
    pub fn derivative_weights(&self, dirs: &[usize]) -> Vec<f64> {
        let mut e = self.kernel.clone();
        for &d in dirs {
            e = e.diff(d);
        }
        (0..self.len())
            .map(|i| self.raw_weights[i] * e.eval(0.0, self.node(i)) / self.mass)
            .collect()
    }
}

/// Nodes and weights covering `B(0, ε)`, symmetric under `z ↦ -z`:
/// Gauss–Legendre in the radius combined with a periodic rule on the circle
/// (n = 2) or Gauss–Legendre in `cos ϑ` and a periodic rule in `φ` (n = 3).
/// Other dimensions use a tensor rule on the cube.
fn radial_nodes(n: usize, eps: f64, points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (gz, gw) = gauss_legendre(points);
    let radii: Vec<(f64, f64)> = gz.iter().zip(&gw).map(|(z, w)| (0.5 * eps * (z + 1.0), 0.5 * eps * w)).collect();
    let tau = 2.0 * std::f64::consts::PI;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match n {
        1 => {
            for &(r, w) in &radii {
                for s in [-1.0, 1.0] {
                    nodes.push(s * r);
                    weights.push(w);
                }
            }
        }
        2 => {
            let m = points + points % 2;
            for &(r, w) in &radii {
                for j in 0..m {
                    let phi = tau * (j as f64 + 0.5) / m as f64;
                    nodes.extend_from_slice(&[r * phi.cos(), r * phi.sin()]);
                    weights.push(w * r * tau / m as f64);
                }
            }
        }
        3 => {
            let m = points + points % 2;
            let (uz, uw) = gauss_legendre((points / 2).max(2));
            for &(r, w) in &radii {
                for (u, wu) in uz.iter().zip(&uw) {
                    let s = (1.0 - u * u).sqrt();
                    for j in 0..m {
                        let phi = tau * (j as f64 + 0.5) / m as f64;
                        nodes.extend_from_slice(&[r * s * phi.cos(), r * s * phi.sin(), r * u]);
                        weights.push(w * r * r * wu * tau / m as f64);
                    }
                }
            }
        }
        _ => {
            let g = QuadratureGrid::cube(&vec![0.0; n], eps, points, Rule::GaussLegendre { order: points })?;
            for i in 0..g.len() {
                nodes.extend_from_slice(g.node(i));
                weights.push(g.weight(i));
            }
        }
    }
    Ok((nodes, weights))
}

/// How derivatives of a mollified channel are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifyRoute {
    /// Source route when the source differentiates exactly, kernel route otherwise.
    Auto,
    /// `∂(ρ*K) = ρ*(∂K)`: requires a differentiable source.
    Source,
    /// `∂(ρ*K) = (∂ρ)*K`: valid for merely bounded sources.
    Kernel,
}

struct Mollified {
    source: Expr,
    rule: Arc<ConvolutionRule>,
    weights: Arc<Vec<f64>>,
    dirs: Vec<usize>,
    route: MollifyRoute,
}

impl Mollified {
    fn expr(source: Expr, rule: Arc<ConvolutionRule>, route: MollifyRoute) -> Expr {
        if let Some(c) = source.as_const() {
            return Expr::constant(c);
        }
        let weights = Arc::new(rule.weights().to_vec());
        let route = match route {
            MollifyRoute::Auto if source.is_analytic() => MollifyRoute::Source,
            MollifyRoute::Auto => MollifyRoute::Kernel,
            r => r,
        };
        Expr::opaque(Arc::new(Mollified {
            source,
            rule,
            weights,
            dirs: Vec::new(),
            route,
        }))
    }
}

impl OpaqueScalar for Mollified {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let n = x.len();
        let mut y = [0.0; 16];
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let z = self.rule.node(i);
            for d in 0..n {
                y[d] = x[d] - z[d];
            }
            acc += w * self.source.eval(t, &y[..n]);
        }
        acc
    }

    fn partial(&self, dir: usize) -> Option<Expr> {
        match self.route {
            MollifyRoute::Source => Some(Mollified::expr(self.source.diff(dir), self.rule.clone(), MollifyRoute::Source)),
            _ => {
                let mut dirs = self.dirs.clone();
                dirs.push(dir);
                let weights = Arc::new(self.rule.derivative_weights(&dirs));
                Some(Expr::opaque(Arc::new(Mollified {
                    source: self.source.clone(),
                    rule: self.rule.clone(),
                    weights,
                    dirs,
                    route: MollifyRoute::Kernel,
                })))
            }
        }
    }

    fn has_analytic_partials(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("mollified(eps = {}, d = {:?})", self.rule.epsilon(), self.dirs)
    }
}

fn check_rule_dim(rule: &ConvolutionRule, n: usize) -> Result<()> {
    if rule.n != n {
        return Err(Error::DimensionMismatch { left: rule.n, right: n });
    }
    if n > 16 {
        return Err(Error::DimensionTooLarge(n));
    }
    Ok(())
}

/// Channelwise `ρ^ε * K`.
pub fn mollify(k: &KFormField, rule: &Arc<ConvolutionRule>, route: MollifyRoute) -> Result<KFormField> {
    check_rule_dim(rule, k.n())?;
    let channels = k
        .channels()
        .iter()
        .map(|c| Mollified::expr(c.clone(), rule.clone(), route))
        .collect();
    KFormField::new_large(k.n(), k.degree(), channels)
}

/// Componentwise `ρ^ε * b`, with the Jacobian obtained through `route`.
pub fn mollify_vector(b: &VectorField, rule: &Arc<ConvolutionRule>, route: MollifyRoute) -> Result<VectorField> {
    check_rule_dim(rule, b.n())?;
    let comps = b
        .components()
        .iter()
        .map(|c| Mollified::expr(c.clone(), rule.clone(), route))
        .collect();
    let mut meta = b.meta().clone();
    meta.label = format!("{} * rho_{}", meta.label, rule.epsilon());
    meta.holder_alpha = None;
    Ok(VectorField::new_large(comps)?.with_meta(meta))
}

/// A linear functional on test k-forms (a distribution-valued form).
pub trait FormFunctional: Sync {
    fn apply(&self, phi: &KFormField) -> Result<f64>;
}

/// `φ ↦ Σ_I c_I φ_I(p)`.
#[derive(Clone, Debug)]
pub struct Dirac {
    pub point: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub t: f64,
}

impl FormFunctional for Dirac {
    fn apply(&self, phi: &KFormField) -> Result<f64> {
        if phi.num_channels() != self.coefficients.len() {
            return Err(Error::ShapeMismatch("Dirac coefficient count".into()));
        }
        Ok(phi
            .eval(self.t, &self.point)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// `φ ↦ ⟨⟨K, φ⟩⟩` over a quadrature grid.
pub struct FunctionPairing<'a> {
    pub form: &'a KFormField,
    pub grid: &'a QuadratureGrid,
    pub t: f64,
}

impl FormFunctional for FunctionPairing<'_> {
    fn apply(&self, phi: &KFormField) -> Result<f64> {
        crate::calculus::norms::l2_pairing(self.form, phi, self.t, self.grid)
    }
}

/// `K(ρ^ε * θ)` for a distribution `K`.
pub fn mollify_distributional(k: &dyn FormFunctional, rule: &Arc<ConvolutionRule>, theta: &TestForm) -> Result<f64> {
    let smoothed = mollify(theta.form(), rule, MollifyRoute::Source)?;
    k.apply(&smoothed)
}

/// Resolution knobs shared by the commutator evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorSettings {
    /// Quadrature over the test-form support.
    pub grid_points: usize,
    pub panel_order: usize,
    pub kernel_points: usize,
    pub route: MollifyRoute,
    /// Points per axis for the norm estimates on `B(c, R+1)`.
    pub ball_points: usize,
    pub t: f64,
}

impl Default for CommutatorSettings {
    fn default() -> Self {
        CommutatorSettings {
            grid_points: 24,
            panel_order: 6,
            kernel_points: DEFAULT_KERNEL_POINTS,
            route: MollifyRoute::Auto,
            ball_points: 32,
            t: 0.0,
        }
    }
}

impl CommutatorSettings {
    fn grid(&self, theta: &TestForm, refine: bool) -> Result<QuadratureGrid> {
        let g = QuadratureGrid::cube(
            theta.center(),
            theta.radius(),
            self.grid_points,
            Rule::GaussLegendre { order: self.panel_order },
        )?;
        Ok(if refine { g.refined() } else { g })
    }

    fn kernel_points(&self, refine: bool) -> usize {
        if refine {
            self.kernel_points * 2
        } else {
            self.kernel_points
        }
    }
}

/// One commutator measurement at a fixed `ε`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CommutatorEvaluation {
    pub epsilon: f64,
    /// Direct evaluation on the base resolution.
    pub value: f64,
    /// `|base − refined|` for the direct evaluation.
    pub error_estimate: f64,
    /// Double-integral (I₁ + I₂) evaluation, when implemented for the operator.
    pub split_value: Option<f64>,
    pub split_error_estimate: Option<f64>,
    pub bound_rhs: f64,
    pub outer_nodes: usize,
    pub kernel_nodes: usize,
}

fn check_commutator_inputs(epsilon: f64, theta: &TestForm, n: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if theta.form().n() != n {
        return Err(Error::DimensionMismatch {
            left: theta.form().n(),
            right: n,
        });
    }
    Ok(())
}

/// `⟨⟨ℒ_b K^ε − (ℒ_b K)^ε, θ⟩⟩` with the given rule and grid.
fn commutator_b_direct(
    b: &VectorField,
    k: &KFormField,
    rule: &Arc<ConvolutionRule>,
    route: MollifyRoute,
    theta: &TestForm,
    grid: &QuadratureGrid,
    t: f64,
) -> Result<f64> {
    let k_eps = mollify(k, rule, route)?;
    let first = lie_derivative(b, &k_eps)?;
    let second = mollify(&lie_derivative(b, k)?, rule, route)?;
    let diff = first.sub(&second)?;
    pair_with_test(&diff, theta, t, grid)
}

/// `∫ I₁ + I₂` from the integration-by-parts form of the commutator.
fn commutator_b_split(
    b: &VectorField,
    k: &KFormField,
    rule: &ConvolutionRule,
    theta: &TestForm,
    grid: &QuadratureGrid,
    t: f64,
) -> Result<f64> {
    if !grid.contains_ball(theta.center(), theta.radius()) {
        return Err(Error::SupportOutsideGrid);
    }
    let n = k.n();
    let deg = k.degree();
    let idx = combinations(n, deg);
    let rho = rule.weights();
    let drho: Vec<Vec<f64>> = (0..n).map(|l| rule.derivative_weights(&[l])).collect();
    let theta_form = theta.form();
    Ok(ordered_par_sum(grid.len(), |xi| {
        let x = grid.node(xi);
        let th = theta_form.eval(t, x);
        if th.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        let bx = b.eval_vec(t, x);
        let mut dbx = vec![0.0; n * n];
        b.eval_jacobian(t, x, &mut dbx);
        let mut dby = vec![0.0; n * n];
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        for zi in 0..rule.len() {
            let z = rule.node(zi);
            for d in 0..n {
                y[d] = x[d] - z[d];
            }
            let ky = k.eval(t, &y);
            let by = b.eval_vec(t, &y);
            b.eval_jacobian(t, &y, &mut dby);
            let pair: f64 = th.iter().zip(&ky).map(|(a, c)| a * c).sum();
            // I₁: ∂_{y_l}[ρ^ε(x−y)] (b^l(y) − b^l(x)) ⟨θ(x), K(y)⟩
            let mut i1 = 0.0;
            for l in 0..n {
                i1 -= drho[l][zi] * (by[l] - bx[l]);
            }
            i1 *= pair;
            // I₂: ρ^ε(x−y) [div b(y) ⟨θ(x),K(y)⟩ + Σ_I K_I(y) Σ_j Σ_l (∂_l b^{i_j}(x) − ∂_l b^{i_j}(y)) θ_{I(j→l)}(x)]
            let div: f64 = (0..n).map(|l| dby[l * n + l]).sum();
            let mut i2 = div * pair;
            for (pos, ind) in idx.iter().enumerate() {
                if ky[pos] == 0.0 {
                    continue;
                }
                let mut s = 0.0;
                for slot in 0..deg {
                    let ij = ind[slot];
                    for l in 0..n {
                        let mut swapped = ind.clone();
                        swapped[slot] = l;
                        if let Some((r, sign)) = signed_rank(n, &swapped) {
                            s += (dbx[ij * n + l] - dby[ij * n + l]) * sign * th[r];
                        }
                    }
                }
                i2 += ky[pos] * s;
            }
            acc += i1 + rho[zi] * i2;
        }
        grid.weight(xi) * acc
    }))
}

/// `‖θ‖_{L^∞_R} ‖K‖_{L^∞_{R+1}}` on balls around the test-form centre.
fn theta_k_norms(k: &KFormField, theta: &TestForm, s: &CommutatorSettings) -> Result<f64> {
    let c = theta.center();
    let r = theta.radius();
    let th = lp_norm_ball(theta.form(), f64::INFINITY, s.t, c, r, s.ball_points)?;
    let kk = lp_norm_ball(k, f64::INFINITY, s.t, c, r + 1.0, s.ball_points)?;
    Ok(th * kk)
}

/// `∫_B |b| + |Db|` on `B(c, R+1)`.
fn w11(b: &VectorField, theta: &TestForm, s: &CommutatorSettings) -> Result<f64> {
    crate::calculus::norms::w11_norm_ball(b, s.t, theta.center(), theta.radius() + 1.0, s.ball_points)
}

/// Evaluates `∫⟨[ℒ_b, ρ^ε*]K, θ⟩` directly and through the I₁+I₂ double
/// integral, each at base and refined resolution.
pub fn commutator_b(
    b: &VectorField,
    k: &KFormField,
    m: &Mollifier,
    theta: &TestForm,
    settings: &CommutatorSettings,
) -> Result<CommutatorEvaluation> {
    check_commutator_inputs(m.epsilon(), theta, k.n())?;
    let t = settings.t;
    let mut values = [0.0; 2];
    let mut splits = [0.0; 2];
    let mut nodes = (0, 0);
    for (pass, refine) in [false, true].into_iter().enumerate() {
        let grid = settings.grid(theta, refine)?;
        let rule = m.rule(settings.kernel_points(refine))?;
        if pass == 0 {
            nodes = (grid.len(), rule.len());
        }
        values[pass] = commutator_b_direct(b, k, &rule, settings.route, theta, &grid, t)?;
        splits[pass] = commutator_b_split(b, k, &rule, theta, &grid, t)?;
    }
    let bound_rhs = theta_k_norms(k, theta, settings)? * w11(b, theta, settings)?;
    Ok(CommutatorEvaluation {
        epsilon: m.epsilon(),
        value: values[0],
        error_estimate: (values[0] - values[1]).abs(),
        split_value: Some(splits[0]),
        split_error_estimate: Some((splits[0] - splits[1]).abs()),
        bound_rhs,
        outer_nodes: nodes.0,
        kernel_nodes: nodes.1,
    })
}

/// `⟨⟨ℒℒK^ε − 2ℒ(ℒK)^ε + (ℒℒK)^ε, θ⟩⟩`.
fn double_commutator_direct(
    xi: &VectorField,
    k: &KFormField,
    rule: &Arc<ConvolutionRule>,
    route: MollifyRoute,
    theta: &TestForm,
    grid: &QuadratureGrid,
    t: f64,
) -> Result<f64> {
    let lk = lie_derivative(xi, k)?;
    let llk = lie_derivative(xi, &lk)?;
    let a = lie_derivative(xi, &lie_derivative(xi, &mollify(k, rule, route)?)?)?;
    let b = lie_derivative(xi, &mollify(&lk, rule, route)?)?;
    let c = mollify(&llk, rule, route)?;
    let total = a.sub(&b.scale(2.0))?.add(&c)?;
    pair_with_test(&total, theta, t, grid)
}

/// Evaluates `∫⟨[ℒ_ξ, [ℒ_ξ, ρ^ε*]]K, θ⟩` from the nested definition.
pub fn double_commutator_xi(
    xi: &VectorField,
    k: &KFormField,
    m: &Mollifier,
    theta: &TestForm,
    settings: &CommutatorSettings,
) -> Result<CommutatorEvaluation> {
    check_commutator_inputs(m.epsilon(), theta, k.n())?;
    let t = settings.t;
    let mut values = [0.0; 2];
    let mut nodes = (0, 0);
    for (pass, refine) in [false, true].into_iter().enumerate() {
        let grid = settings.grid(theta, refine)?;
        let rule = m.rule(settings.kernel_points(refine))?;
        if pass == 0 {
            nodes = (grid.len(), rule.len());
        }
        values[pass] = double_commutator_direct(xi, k, &rule, settings.route, theta, &grid, t)?;
    }
    let c = theta.center();
    let r = theta.radius() + 1.0;
    let n = xi.n();
    let xi_sup = vector_sup_ball(xi, t, c, r, settings.ball_points)?;
    let dxi_sup = jacobian_sup_ball(xi, t, c, r, settings.ball_points)?;
    let hess: Vec<Expr> = (0..n)
        .flat_map(|i| (0..n).flat_map(move |j| (0..n).map(move |l| (i, j, l))))
        .map(|(i, j, l)| xi.jacobian_entry(i, j).diff(l))
        .collect();
    let ball = QuadratureGrid::cube(c, r, settings.ball_points, Rule::GaussLegendre { order: 4 })?;
    let inside = |x: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= r * r;
    let hess_l1 = ball.integrate(|x| {
        if !inside(x) {
            return 0.0;
        }
        hess.iter().map(|e| e.eval(t, x).powi(2)).sum::<f64>().sqrt()
    });
    let dxi_l1 = ball.integrate(|x| {
        if !inside(x) {
            return 0.0;
        }
        let mut jac = vec![0.0; n * n];
        xi.eval_jacobian(t, x, &mut jac);
        jac.iter().map(|v| v * v).sum::<f64>().sqrt()
    });
    let bound_rhs = theta_k_norms(k, theta, settings)? * (xi_sup * hess_l1 + dxi_sup * dxi_l1);
    Ok(CommutatorEvaluation {
        epsilon: m.epsilon(),
        value: values[0],
        error_estimate: (values[0] - values[1]).abs(),
        split_value: None,
        split_error_estimate: None,
        bound_rhs,
        outer_nodes: nodes.0,
        kernel_nodes: nodes.1,
    })
}

/// Which commutator an ε-sweep measures.
#[derive(Clone, Debug)]
pub enum CommutatorKind {
    Drift(VectorField),
    DoubleNoise(VectorField),
}

/// Result of an ε-sweep: the report plus the raw evaluations.
#[derive(Clone, Debug)]
pub struct EpsilonSweep {
    pub report: ConvergenceReport,
    pub evaluations: Vec<CommutatorEvaluation>,
    /// `|value(ε₀)| / bound_rhs(ε₀)` at the coarsest scale.
    pub fitted_constant: f64,
    /// Whether `|value(ε)| ≤ fitted_constant · bound_rhs(ε) + 3·error` held for every ε.
    pub bound_holds: bool,
    /// `|value(ε_last)| / |value(ε_first)|`.
    pub decay_ratio: f64,
}

/// Runs one commutator over a strictly decreasing list of scales.
/// Verdict: converging iff the final `|value|` is below `tol` and the fitted slope is positive.
pub fn epsilon_sweep(
    kind: &CommutatorKind,
    k: &KFormField,
    theta: &TestForm,
    settings: &CommutatorSettings,
    eps_list: &[f64],
    tol: f64,
) -> Result<EpsilonSweep> {
    if eps_list.len() < 3 {
        return Err(Error::SweepTooShort {
            needed: 3,
            got: eps_list.len(),
        });
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list[0] >= 1.0 || eps_list[eps_list.len() - 1] <= 0.0 {
        return Err(Error::InvalidEpsilonList);
    }
    let name = match kind {
        CommutatorKind::Drift(_) => "commutator_b",
        CommutatorKind::DoubleNoise(_) => "double_commutator_xi",
    };
    let mut evaluations = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let m = Mollifier::new(k.n(), eps)?;
        let ev = match kind {
            CommutatorKind::Drift(b) => commutator_b(b, k, &m, theta, settings)?,
            CommutatorKind::DoubleNoise(xi) => double_commutator_xi(xi, k, &m, theta, settings)?,
        };
        evaluations.push(ev);
    }
    let first = &evaluations[0];
    let fitted_constant = if first.bound_rhs > 0.0 {
        first.value.abs() / first.bound_rhs
    } else {
        0.0
    };
    let bound_holds = evaluations
        .iter()
        .all(|e| e.value.abs() <= fitted_constant * e.bound_rhs * (1.0 + 1e-12) + 3.0 * e.error_estimate);
    let mut report = ConvergenceReport::new(name, "epsilon", &["bound_rhs", "fitted_constant"]);
    for e in &evaluations {
        report.push(e.epsilon, e.value, e.error_estimate, vec![e.bound_rhs, fitted_constant]);
    }
    let slope = report.fit();
    let last = evaluations[evaluations.len() - 1].value.abs();
    report.threshold = Some(tol);
    report.passed = last < tol && slope.is_some_and(|s| s > 0.0);
    let decay_ratio = if first.value != 0.0 { last / first.value.abs() } else { 0.0 };
    Ok(EpsilonSweep {
        report,
        evaluations,
        fitted_constant,
        bound_holds,
        decay_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::norms::l2_pairing;

    #[test]
    fn normalisation_is_certified() {
        for n in 1..=3 {
            let m = Mollifier::new(n, 0.3).unwrap();
            assert!((m.radial_mass() - 1.0).abs() < 1e-12);
            // an independent tensor rule converges to the same mass
            assert!((m.tensor_mass(64).unwrap() - 1.0).abs() < 1e-6, "n = {n}");
        }
        let m = Mollifier::new(2, 0.5).unwrap();
        assert_eq!(m.eval(&[0.3, -0.1]), m.eval(&[-0.3, 0.1]));
        assert!(m.eval(&[0.5, 0.0]) < 1e-14);
        assert!(Mollifier::new(2, 0.0).is_err());
    }

    #[test]
    fn gamma_half_values() {
        assert!((gamma_half(1) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(2) - 1.0).abs() < 1e-15);
        assert!((gamma_half(3) - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(6) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constants_and_linear_fields_are_reproduced() {
        let m = Mollifier::new(1, 0.2).unwrap();
        let rule = m.rule(16).unwrap();
        let c = KFormField::scalar(1, Expr::constant(2.5)).unwrap();
        assert_eq!(mollify(&c, &rule, MollifyRoute::Auto).unwrap().eval(0.0, &[0.3])[0], 2.5);
        let lin = KFormField::scalar(1, Expr::var(0).scale(1.7).add(&Expr::constant(0.1))).unwrap();
        let s = mollify(&lin, &rule, MollifyRoute::Auto).unwrap();
        for x in [-0.4, 0.0, 0.9] {
            assert!((s.eval(0.0, &[x])[0] - (1.7 * x + 0.1)).abs() < 1e-14);
        }
    }

    #[test]
    fn step_function_midpoint_is_average() {
        let step = Expr::var(0).less_than(&Expr::zero(), &Expr::constant(-1.0), &Expr::constant(3.0));
        let k = KFormField::scalar(1, step).unwrap();
        let m = Mollifier::new(1, 0.1).unwrap();
        let rule = m.rule(16).unwrap();
        let s = mollify(&k, &rule, MollifyRoute::Kernel).unwrap();
        assert!((s.eval(0.0, &[0.0])[0] - 1.0).abs() < 1e-12);
        assert!((s.eval(0.0, &[0.2])[0] - 3.0).abs() < 1e-14);
        // monotone ramp in between
        let v: Vec<f64> = (0..=10).map(|i| s.eval(0.0, &[-0.1 + 0.02 * i as f64])[0]).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn kernel_and_source_routes_agree_on_smooth_fields() {
        let k = KFormField::scalar(2, Expr::var(0).mul(&Expr::var(1)).sin()).unwrap();
        let m = Mollifier::new(2, 0.2).unwrap();
        let rule = m.rule(24).unwrap();
        let a = mollify(&k, &rule, MollifyRoute::Source).unwrap().partial(0);
        let b = mollify(&k, &rule, MollifyRoute::Kernel).unwrap().partial(0);
        let x = [0.4, 0.7];
        assert!(
            (a.eval(0.0, &x)[0] - b.eval(0.0, &x)[0]).abs() < 1e-3,
            "{} vs {}",
            a.eval(0.0, &x)[0],
            b.eval(0.0, &x)[0]
        );
    }

    #[test]
    fn dirac_functional_unwinds() {
        let theta = TestForm::bump(1, 0, &[0.1], 0.5, vec![Expr::one().add(&Expr::var(0))]).unwrap();
        let m = Mollifier::new(1, 0.1).unwrap();
        let rule = m.rule(16).unwrap();
        let dirac = Dirac {
            point: vec![0.0],
            coefficients: vec![1.0],
            t: 0.0,
        };
        let got = mollify_distributional(&dirac, &rule, &theta).unwrap();
        let want = mollify(theta.form(), &rule, MollifyRoute::Source).unwrap().eval(0.0, &[0.0])[0];
        assert_eq!(got, want);
    }

    #[test]
    fn function_functional_matches_mollified_pairing() {
        // K(ρ*θ) = ⟨⟨ρ*K, θ⟩⟩ for symmetric ρ
        let k = KFormField::scalar(1, Expr::var(0).mul(&Expr::var(0)).add(&Expr::var(0).sin())).unwrap();
        let theta = TestForm::bump(1, 0, &[0.0], 0.6, vec![Expr::var(0).cos()]).unwrap();
        let m = Mollifier::new(1, 0.15).unwrap();
        let rule = m.rule(32).unwrap();
        let grid = QuadratureGrid::new(&[-1.0], &[1.0], 480, Rule::GaussLegendre { order: 6 }).unwrap();
        let f = FunctionPairing {
            form: &k,
            grid: &grid,
            t: 0.0,
        };
        let lhs = mollify_distributional(&f, &rule, &theta).unwrap();
        let rhs = l2_pairing(&mollify(&k, &rule, MollifyRoute::Source).unwrap(), theta.form(), 0.0, &grid).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn constant_drift_commutator_vanishes() {
        let b = VectorField::constant(&[0.7, -0.3]).unwrap();
        let k = KFormField::new(2, 1, vec![Expr::var(0).mul(&Expr::var(1)).sin(), Expr::var(1).exp()]).unwrap();
        let theta = TestForm::bump(2, 1, &[0.0, 0.0], 0.8, vec![Expr::one(), Expr::var(0)]).unwrap();
        let settings = CommutatorSettings {
            grid_points: 12,
            ..Default::default()
        };
        for eps in [0.2, 0.05] {
            let m = Mollifier::new(2, eps).unwrap();
            let ev = commutator_b(&b, &k, &m, &theta, &settings).unwrap();
            assert!(ev.value.abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn sweep_rejects_bad_lists() {
        let b = VectorField::constant(&[1.0]).unwrap();
        let k = KFormField::scalar(1, Expr::var(0)).unwrap();
        let theta = TestForm::bump(1, 0, &[0.0], 0.5, vec![Expr::one()]).unwrap();
        let s = CommutatorSettings::default();
        let kind = CommutatorKind::Drift(b);
        assert!(matches!(
            epsilon_sweep(&kind, &k, &theta, &s, &[0.2, 0.1], 1.0),
            Err(Error::SweepTooShort { .. })
        ));
        assert_eq!(
            epsilon_sweep(&kind, &k, &theta, &s, &[0.1, 0.2, 0.05], 1.0).unwrap_err(),
            Error::InvalidEpsilonList
        );
    }
}
