//! k-chains in R^n and the conservation law `∫_{φ_t(Ω₀)} K(t) = ∫_{Ω₀} K₀`.
//!
//! Quadrature nodes of each simplex are tracked as particles, so the pushed
//! chain is integrated through `D(φ_t ∘ σ) = Dφ_t Dσ` without interpolating
//! the flow in space. `K(t)` at the pushed nodes comes from the backward flow.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solution::solve_pushforward;
use crate::calculus::field::KFormField;
use crate::calculus::maps::det;
use crate::calculus::multi_index::combinations;
use crate::calculus::quadrature::SimplexRule;
use crate::error::{Error, Result};
use crate::flow::{flow_endpoint, BrownianPaths, Direction, FlowSystem, Scheme};

/// Smooth map from the reference k-simplex, returning the point and the
/// row-major `n×k` Jacobian.
pub type Parameterization = Arc<dyn Fn(&[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

#[derive(Clone)]
pub enum Piece {
    /// `σ(u) = v₀ + Σ u_i (v_i − v₀)`.
    Affine {
        vertices: Vec<Vec<f64>>,
    },
    Parametric {
        map: Parameterization,
    },
}

#[derive(Clone)]
pub struct Simplex {
    pub piece: Piece,
    /// Orientation sign, ±1.
    pub sign: f64,
}

impl Simplex {
    fn eval(&self, u: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        match &self.piece {
            Piece::Affine { vertices } => {
                let k = vertices.len() - 1;
                let v0 = &vertices[0];
                let mut x = v0.clone();
                let mut jac = vec![0.0; n * k];
                for (i, ui) in u.iter().enumerate() {
                    for r in 0..n {
                        let e = vertices[i + 1][r] - v0[r];
                        x[r] += ui * e;
                        jac[r * k + i] = e;
                    }
                }
                (x, jac)
            }
            Piece::Parametric { map } => map(u),
        }
    }
}

/// Vertex-list description of an affine chain (serialisable form).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSimplexSpec {
    pub vertices: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub sign: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone)]
pub struct Chain {
    n: usize,
    k: usize,
    simplices: Vec<Simplex>,
    rule: Arc<SimplexRule>,
}

impl Chain {
    pub fn new(n: usize, k: usize, simplices: Vec<Simplex>, order: usize) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidDegree { k, n });
        }
        for s in &simplices {
            if let Piece::Affine { vertices } = &s.piece {
                if vertices.len() != k + 1 || vertices.iter().any(|v| v.len() != n) {
                    return Err(Error::ShapeMismatch(format!(
                        "a {k}-simplex in R^{n} needs {} vertices of length {n}",
                        k + 1
                    )));
                }
            }
        }
        Ok(Chain {
            n,
            k,
            simplices,
            rule: Arc::new(SimplexRule::new(k, order)),
        })
    }

    pub fn affine(n: usize, specs: &[AffineSimplexSpec], order: usize) -> Result<Self> {
        let k = specs.first().map_or(0, |s| s.vertices.len().saturating_sub(1));
        let simplices = specs
            .iter()
            .map(|s| Simplex {
                piece: Piece::Affine {
                    vertices: s.vertices.clone(),
                },
                sign: s.sign,
            })
            .collect();
        Self::new(n, k, simplices, order)
    }

    /// Oriented segment from `a` to `b`.
    pub fn segment(a: &[f64], b: &[f64], order: usize) -> Result<Self> {
        Self::affine(
            a.len(),
            &[AffineSimplexSpec {
                vertices: vec![a.to_vec(), b.to_vec()],
                sign: 1.0,
            }],
            order,
        )
    }

    /// Positively oriented axis-aligned rectangle in R² as two triangles.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2], order: usize) -> Result<Self> {
        let (a, b, c, d) = (vec![lo[0], lo[1]], vec![hi[0], lo[1]], vec![hi[0], hi[1]], vec![lo[0], hi[1]]);
        Self::affine(
            2,
            &[
                AffineSimplexSpec {
                    vertices: vec![a.clone(), b, c.clone()],
                    sign: 1.0,
                },
                AffineSimplexSpec {
                    vertices: vec![a, c, d],
                    sign: 1.0,
                },
            ],
            order,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// `∫_chain K(t)`.
    pub fn integrate(&self, form: &KFormField, t: f64) -> Result<f64> {
        self.check_form(form)?;
        let rows = combinations(self.n, self.k);
        let mut total = 0.0;
        for s in &self.simplices {
            for (u, w) in self.rule.nodes().iter().zip(self.rule.weights()) {
                let (x, jac) = s.eval(u, self.n);
                let c = form.eval(t, &x);
                total += s.sign * w * form_on_frame(&rows, &c, &jac, self.k);
            }
        }
        Ok(total)
    }

    fn check_form(&self, form: &KFormField) -> Result<()> {
        if form.n() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: form.n(),
            });
        }
        if form.degree() != self.k {
            return Err(Error::DegreeMismatch {
                left: self.k,
                right: form.degree(),
            });
        }
        Ok(())
    }
}

/// `Σ_I c_I det(frame[I, :])` for an `n×k` frame.
fn form_on_frame(rows: &[Vec<usize>], c: &[f64], frame: &[f64], k: usize) -> f64 {
    let mut sub = vec![0.0; k * k];
    rows.iter()
        .zip(c)
        .filter(|(_, v)| **v != 0.0)
        .map(|(r, v)| {
            for (a, &ri) in r.iter().enumerate() {
                sub[a * k..(a + 1) * k].copy_from_slice(&frame[ri * k..(ri + 1) * k]);
            }
            v * det(&sub, k)
        })
        .sum()
}

/// `det(FᵀF)` of an `n×k` frame.
fn gram_det(frame: &[f64], n: usize, k: usize) -> f64 {
    let mut g = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            g[a * k + b] = (0..n).map(|r| frame[r * k + a] * frame[r * k + b]).sum();
        }
    }
    det(&g, k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub initial: f64,
    /// `∫_{φ_T(Ω₀)} K(T)` per retained path.
    pub pushed: Vec<f64>,
    pub relative_gaps: Vec<f64>,
    pub rms_gap: f64,
    pub max_gap: f64,
    pub flagged: usize,
}

/// Compares `∫_{Ω₀} K₀` with `∫_{φ_T(Ω₀)} (φ_T)_*K₀` on every path.
pub fn conservation_check(
    k0: &KFormField,
    chain: &Chain,
    system: &FlowSystem,
    paths: &BrownianPaths,
    scheme: Scheme,
) -> Result<ConservationReport> {
    chain.check_form(k0)?;
    let initial = chain.integrate(k0, 0.0)?;
    let (n, k) = (chain.n, chain.k);
    let rows = combinations(n, k);
    // Reference points and frames.
    let mut nodes = Vec::new();
    for s in &chain.simplices {
        for (u, w) in chain.rule.nodes().iter().zip(chain.rule.weights()) {
            let (x, frame) = s.eval(u, n);
            let g = gram_det(&frame, n, k);
            if k > 0 && !(g > 1e-24) {
                return Err(Error::DegenerateSimplex(g));
            }
            nodes.push((x, frame, s.sign * w, g));
        }
    }
    let sol = solve_pushforward(k0, system, paths, scheme, paths.grid().end())?;
    let per_path: Vec<Result<Option<f64>>> = (0..paths.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut total = 0.0;
            for (y, frame, w, g0) in &nodes {
                let Some(fwd) = flow_endpoint(system, scheme, Direction::Forward, paths.grid(), paths.path(p), paths.drivers(), y)? else {
                    return Ok(None);
                };
                let mut pushed = vec![0.0; n * k];
                for r in 0..n {
                    for c in 0..k {
                        pushed[r * k + c] = (0..n).map(|m| fwd.jac[r * n + m] * frame[m * k + c]).sum();
                    }
                }
                let g = gram_det(&pushed, n, k);
                if k > 0 && !(g > 1e-12 * g0) {
                    return Err(Error::DegenerateSimplex(g));
                }
                let kt = sol.eval(p, &fwd.x)?;
                total += w * form_on_frame(&rows, &kt, &pushed, k);
            }
            Ok(Some(total))
        })
        .collect();
    let mut pushed = Vec::new();
    let mut flagged = 0;
    for r in per_path {
        match r? {
            Some(v) => pushed.push(v),
            None => flagged += 1,
        }
    }
    if flagged * 100 > paths.n_paths() {
        return Err(Error::TooManyFlagged {
            flagged,
            total: paths.n_paths(),
        });
    }
    let scale = initial.abs().max(f64::MIN_POSITIVE);
    let relative_gaps: Vec<f64> = pushed.iter().map(|v| (v - initial).abs() / scale).collect();
    let rms_gap = (relative_gaps.iter().map(|g| g * g).sum::<f64>() / relative_gaps.len().max(1) as f64).sqrt();
    let max_gap = relative_gaps.iter().cloned().fold(0.0, f64::max);
    Ok(ConservationReport {
        initial,
        pushed,
        relative_gaps,
        rms_gap,
        max_gap,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::field::VectorField;
    use crate::expr::Expr;
    use crate::flow::TimeGrid;

    #[test]
    fn square_area_and_orientation() {
        let sq = Chain::rectangle([0.0, 0.0], [1.0, 1.0], 5).unwrap();
        let vol = KFormField::top(2, Expr::one()).unwrap();
        assert!((sq.integrate(&vol, 0.0).unwrap() - 1.0).abs() < 1e-14);
        let x = KFormField::top(2, Expr::var(0)).unwrap();
        assert!((sq.integrate(&x, 0.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn line_integral_of_exact_form() {
        // ∫ d(x y) along a segment = difference of endpoint values.
        let seg = Chain::segment(&[0.0, 1.0], &[2.0, 3.0], 5).unwrap();
        let d = KFormField::new(2, 1, vec![Expr::var(1), Expr::var(0)]).unwrap();
        assert!((seg.integrate(&d, 0.0).unwrap() - 6.0).abs() < 1e-13);
    }

    #[test]
    fn rotation_preserves_area() {
        let rot = VectorField::linear(&[0.0, -1.0, 1.0, 0.0], 2).unwrap();
        let sys = FlowSystem::deterministic(rot).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 128).unwrap(), 1);
        let sq = Chain::rectangle([0.0, 0.0], [1.0, 1.0], 5).unwrap();
        let vol = KFormField::top(2, Expr::one()).unwrap();
        let r = conservation_check(&vol, &sq, &sys, &paths, Scheme::Heun).unwrap();
        assert!(r.max_gap < 1e-6, "{}", r.max_gap);
    }

    #[test]
    fn translation_preserves_dx1_exactly() {
        let sys = FlowSystem::deterministic(VectorField::constant(&[0.7, -0.2]).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 8).unwrap(), 1);
        let seg = Chain::segment(&[0.0, 0.0], &[1.0, 2.0], 3).unwrap();
        let dx1 = KFormField::basis(2, &[0]).unwrap();
        let r = conservation_check(&dx1, &seg, &sys, &paths, Scheme::Heun).unwrap();
        assert!(r.max_gap < 1e-14);
    }

    #[test]
    fn degenerate_simplex_rejected() {
        let seg = Chain::segment(&[1.0, 1.0], &[1.0, 1.0], 3).unwrap();
        let sys = FlowSystem::deterministic(VectorField::zero(2).unwrap()).unwrap();
        let paths = BrownianPaths::zero(0, &TimeGrid::uniform(1.0, 2).unwrap(), 1);
        let dx1 = KFormField::basis(2, &[0]).unwrap();
        assert!(matches!(
            conservation_check(&dx1, &seg, &sys, &paths, Scheme::Heun),
            Err(Error::DegenerateSimplex(_))
        ));
    }
}
