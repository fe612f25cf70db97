//! Diffeomorphisms of R^n and the induced pushforward / pullback of forms.
//!
//! For a map `F` with Jacobian `DF` the pullback of a k-form is
//! `(F^*α)_J(x) = Σ_I α_I(F(x)) det(DF[I, J])`, a sum of k×k minors.
//! The pushforward by `φ` is the pullback by its inverse `ψ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::field::KFormField;
use super::multi_index::{binomial, combinations};
use crate::error::{Error, Result};
use crate::expr::{Expr, OpaqueScalar};

/// A differentiable map `R^n → R^n`, possibly defined only on a region.
pub trait SpatialMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Image point, or [`Error::OutsideDomain`].
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Row-major Jacobian `∂_j F^i`.
    fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// `x ↦ A x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    n: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl AffineMap {
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if a.len() != n * n {
            return Err(Error::ShapeMismatch(format!("matrix has {} entries for n = {n}", a.len())));
        }
        Ok(AffineMap { n, a, c })
    }

    pub fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        AffineMap { n, a, c: vec![0.0; n] }
    }

    pub fn scaling(n: usize, s: f64) -> Self {
        let mut m = Self::identity(n);
        m.a.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn translation(c: Vec<f64>) -> Self {
        let mut m = Self::identity(c.len());
        m.c = c;
        m
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn offset(&self) -> &[f64] {
        &self.c
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let m = DMatrix::from_row_slice(self.n, self.n, &self.a);
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular affine map".into()))?;
        let c = nalgebra::DVector::from_column_slice(&self.c);
        let new_c = -(&inv * c);
        let mut a = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                a.push(inv[(i, j)]);
            }
        }
        Ok(AffineMap {
            n: self.n,
            a,
            c: new_c.iter().copied().collect(),
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        let mut c = self.c.clone();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|l| self.a[i * n + l] * inner.a[l * n + j]).sum();
            }
            c[i] += (0..n).map(|l| self.a[i * n + l] * inner.c[l]).sum::<f64>();
        }
        AffineMap { n, a, c }
    }

    pub fn into_diffeo(self) -> Result<Diffeo> {
        let inv = self.inverse()?;
        Ok(Diffeo::new(Arc::new(self), Arc::new(inv)))
    }
}

impl SpatialMap for AffineMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        Ok((0..n)
            .map(|i| self.c[i] + (0..n).map(|j| self.a[i * n + j] * x[j]).sum::<f64>())
            .collect())
    }

    fn jacobian(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.a.clone())
    }
}

type MapFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// Map from closures for the point image and the Jacobian.
pub struct ClosureMap {
    n: usize,
    label: String,
    f: Box<MapFn>,
    jac: Box<MapFn>,
}

impl ClosureMap {
    pub fn new(
        n: usize,
        label: &str,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        jac: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        ClosureMap {
            n,
            label: label.to_string(),
            f: Box::new(f),
            jac: Box::new(jac),
        }
    }
}

impl fmt::Debug for ClosureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosureMap({})", self.label)
    }
}

impl SpatialMap for ClosureMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.jac)(x)
    }
}

/// `outer ∘ inner`, with the chain rule for the Jacobian.
pub struct Composition {
    outer: Arc<dyn SpatialMap>,
    inner: Arc<dyn SpatialMap>,
}

impl Composition {
    pub fn new(outer: Arc<dyn SpatialMap>, inner: Arc<dyn SpatialMap>) -> Self {
        Composition { outer, inner }
    }
}

impl SpatialMap for Composition {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.outer.apply(&self.inner.apply(x)?)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.inner.apply(x)?;
        let jo = self.outer.jacobian(&y)?;
        let ji = self.inner.jacobian(x)?;
        Ok(mat_mul(&jo, &ji, self.dim()))
    }
}

/// A map together with its inverse.
#[derive(Clone)]
pub struct Diffeo {
    forward: Arc<dyn SpatialMap>,
    inverse: Arc<dyn SpatialMap>,
}

impl Diffeo {
    pub fn new(forward: Arc<dyn SpatialMap>, inverse: Arc<dyn SpatialMap>) -> Self {
        Diffeo { forward, inverse }
    }

    pub fn identity(n: usize) -> Self {
        let id = Arc::new(AffineMap::identity(n));
        Diffeo::new(id.clone(), id)
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }

    pub fn forward(&self) -> &Arc<dyn SpatialMap> {
        &self.forward
    }

    pub fn inverse(&self) -> &Arc<dyn SpatialMap> {
        &self.inverse
    }

    pub fn inverted(&self) -> Diffeo {
        Diffeo::new(self.inverse.clone(), self.forward.clone())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Diffeo) -> Diffeo {
        Diffeo::new(
            Arc::new(Composition::new(self.forward.clone(), inner.forward.clone())),
            Arc::new(Composition::new(inner.inverse.clone(), self.inverse.clone())),
        )
    }
}

impl fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Diffeo(n = {})", self.dim())
    }
}

pub(crate) fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let ail = a[i * n + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += ail * b[l * n + j];
            }
        }
    }
    out
}

/// Determinant of a small row-major square matrix.
pub fn det(m: &[f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]),
        _ => DMatrix::from_row_slice(k, k, m).determinant(),
    }
}

/// Minor `det(M[rows, cols])` of a row-major `n×n` matrix.
pub fn minor(m: &[f64], n: usize, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    let mut sub = [0.0; 16];
    if k <= 4 {
        for (a, &r) in rows.iter().enumerate() {
            for (b, &c) in cols.iter().enumerate() {
                sub[a * k + b] = m[r * n + c];
            }
        }
        det(&sub[..k * k], k)
    } else {
        let v: Vec<f64> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| m[r * n + c])).collect();
        det(&v, k)
    }
}

/// Pullback of k-form coefficients through a linear map:
/// `out_J = Σ_I coeffs_I det(jac[I, J])`.
pub fn pull_coefficients(n: usize, k: usize, coeffs: &[f64], jac: &[f64]) -> Vec<f64> {
    let idx = combinations(n, k);
    let mut out = vec![0.0; idx.len()];
    for (jpos, cols) in idx.iter().enumerate() {
        out[jpos] = idx
            .iter()
            .zip(coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(rows, c)| c * minor(jac, n, rows, cols))
            .sum();
    }
    out
}

/// Pulls `K` back through `map` at `(t, x)`.
pub fn pullback_at(map: &dyn SpatialMap, k_form: &KFormField, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(map.dim(), k_form)?;
    let y = map.apply(x)?;
    let jac = map.jacobian(x)?;
    let coeffs = k_form.eval(t, &y);
    Ok(pull_coefficients(k_form.n(), k_form.degree(), &coeffs, &jac))
}

/// `(φ_* K)(t, x)` evaluated through the inverse map.
pub fn pushforward_at(phi: &Diffeo, k_form: &KFormField, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    pullback_at(phi.inverse.as_ref(), k_form, t, x)
}

fn check_dims(n: usize, k_form: &KFormField) -> Result<()> {
    if n != k_form.n() {
        return Err(Error::DimensionMismatch {
            left: n,
            right: k_form.n(),
        });
    }
    Ok(())
}

/// Pullback `F^*K` as a new field. Points where `F` is undefined evaluate to NaN;
/// use [`pullback_at`] for a checked evaluation.
pub fn pullback(map: Arc<dyn SpatialMap>, k_form: &KFormField) -> Result<KFormField> {
    check_dims(map.dim(), k_form)?;
    let n = k_form.n();
    let k = k_form.degree();
    let count = binomial(n, k);
    let source = k_form.clone();
    let shared = Arc::new(PulledForm { map, source });
    let channels = (0..count)
        .map(|idx| {
            Expr::opaque(Arc::new(PulledChannel {
                inner: shared.clone(),
                idx,
            }))
        })
        .collect();
    KFormField::new_large(n, k, channels)
}

/// Pushforward `φ_*K = (φ^{-1})^* K`.
pub fn pushforward(phi: &Diffeo, k_form: &KFormField) -> Result<KFormField> {
    pullback(phi.inverse.clone(), k_form)
}

struct PulledForm {
    map: Arc<dyn SpatialMap>,
    source: KFormField,
}

struct PulledChannel {
    inner: Arc<PulledForm>,
    idx: usize,
}

impl OpaqueScalar for PulledChannel {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match pullback_at(self.inner.map.as_ref(), &self.inner.source, t, x) {
            Ok(v) => v[self.idx],
            Err(_) => f64::NAN,
        }
    }

    fn label(&self) -> String {
        format!("pullback[{}]", self.idx)
    }
}
