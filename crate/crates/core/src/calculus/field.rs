//! Differential forms, multivector fields and vector fields on R^n.
//!
//! Fields are functions of `(t, x)`: each coefficient channel is an [`Expr`].
//! A k-form stores `binomial(n, k)` channels on increasing multi-indices; the
//! antisymmetric extension to arbitrary index tuples is computed on demand.

use std::sync::Arc;

use super::multi_index::{binomial, signed_rank, MultiIndex};
use crate::error::{Error, Result};
use crate::expr::{Expr, OpaqueScalar};

/// Dimensions above this need the explicit large-dimension constructors.
pub const MAX_DEFAULT_DIM: usize = 4;

/// How partial derivatives of channels are produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeMode {
    /// Exact derivatives of the expression tree.
    Analytic,
    /// Second-order central differences with the given step.
    CentralDifference { step: f64 },
}

impl DerivativeMode {
    pub fn differentiate(&self, e: &Expr, dir: usize) -> Expr {
        match *self {
            DerivativeMode::Analytic => e.diff(dir),
            DerivativeMode::CentralDifference { step } => e.central_diff(dir, step),
        }
    }

    /// Finite differences win when combining modes; the smaller step is kept.
    pub fn combine(self, other: DerivativeMode) -> DerivativeMode {
        use DerivativeMode::*;
        match (self, other) {
            (Analytic, m) | (m, Analytic) => m,
            (CentralDifference { step: a }, CentralDifference { step: b }) => CentralDifference { step: a.min(b) },
        }
    }
}

pub(crate) fn check_dimension(n: usize, allow_large: bool) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if n > MAX_DEFAULT_DIM && !allow_large {
        return Err(Error::DimensionTooLarge(n));
    }
    Ok(())
}

/// Degree-k differential form on R^n.
#[derive(Clone, Debug)]
pub struct KFormField {
    n: usize,
    k: usize,
    channels: Vec<Expr>,
    mode: DerivativeMode,
}

impl KFormField {
    pub fn new(n: usize, k: usize, channels: Vec<Expr>) -> Result<Self> {
        check_dimension(n, false)?;
        Self::build(n, k, channels)
    }

    /// Like [`KFormField::new`] but without the dimension cap.
    pub fn new_large(n: usize, k: usize, channels: Vec<Expr>) -> Result<Self> {
        check_dimension(n, true)?;
        Self::build(n, k, channels)
    }

    fn build(n: usize, k: usize, channels: Vec<Expr>) -> Result<Self> {
        if k > n {
            return Err(Error::InvalidDegree { k, n });
        }
        let expected = binomial(n, k);
        if channels.len() != expected {
            return Err(Error::ChannelCount {
                n,
                k,
                expected,
                got: channels.len(),
            });
        }
        Ok(KFormField {
            n,
            k,
            channels,
            mode: DerivativeMode::Analytic,
        })
    }

    pub(crate) fn from_parts(n: usize, k: usize, channels: Vec<Expr>, mode: DerivativeMode) -> Self {
        debug_assert_eq!(channels.len(), binomial(n, k));
        KFormField { n, k, channels, mode }
    }

    pub fn zero(n: usize, k: usize) -> Result<Self> {
        Self::new(n, k, vec![Expr::zero(); binomial(n, k)])
    }

    /// Scalar field as a 0-form.
    pub fn scalar(n: usize, f: Expr) -> Result<Self> {
        Self::new(n, 0, vec![f])
    }

    /// Density `f dx^1 ∧ … ∧ dx^n`.
    pub fn top(n: usize, f: Expr) -> Result<Self> {
        Self::new(n, n, vec![f])
    }

    /// Basis form `dx^{i_1} ∧ … ∧ dx^{i_k}` for increasing 0-based indices.
    pub fn basis(n: usize, indices: &[usize]) -> Result<Self> {
        Self::monomial(n, indices, Expr::one())
    }

    /// `f dx^{i_1} ∧ … ∧ dx^{i_k}`.
    pub fn monomial(n: usize, indices: &[usize], f: Expr) -> Result<Self> {
        let mi = MultiIndex::new(n, indices.to_vec())?;
        let mut form = Self::zero(n, mi.degree())?;
        form.channels[mi.rank()] = f;
        Ok(form)
    }

    /// Builds a form from an opaque evaluator that fills all channels at once.
    pub fn from_fn(n: usize, k: usize, label: &str, f: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>) -> Result<Self> {
        check_dimension(n, true)?;
        if k > n {
            return Err(Error::InvalidDegree { k, n });
        }
        let count = binomial(n, k);
        let shared = Arc::new(FormFn {
            count,
            label: label.to_string(),
            f,
        });
        let channels = (0..count)
            .map(|idx| Expr::opaque(Arc::new(FormChannel { form: shared.clone(), idx })))
            .collect();
        Ok(KFormField {
            n,
            k,
            channels,
            mode: DerivativeMode::Analytic,
        })
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn channels(&self) -> &[Expr] {
        &self.channels
    }

    pub fn channel(&self, idx: &MultiIndex) -> &Expr {
        &self.channels[idx.rank()]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Coefficient at an arbitrary index tuple via the antisymmetric extension.
    pub fn component(&self, indices: &[usize]) -> Expr {
        match signed_rank(self.n, indices) {
            None => Expr::zero(),
            Some((r, s)) => self.channels[r].scale(s),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.channels.iter().map(|c| c.eval(t, x)).collect()
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c.eval(t, x);
        }
    }

    /// Channelwise partial derivative along `x[dir]` under this field's mode.
    pub fn partial(&self, dir: usize) -> KFormField {
        let channels = self.channels.iter().map(|c| self.mode.differentiate(c, dir)).collect();
        KFormField::from_parts(self.n, self.k, channels, self.mode)
    }

    pub fn map_channels(&self, f: impl Fn(&Expr) -> Expr) -> KFormField {
        KFormField::from_parts(self.n, self.k, self.channels.iter().map(f).collect(), self.mode)
    }

    pub fn scale(&self, c: f64) -> KFormField {
        self.map_channels(|e| e.scale(c))
    }

    pub fn mul_scalar(&self, f: &Expr) -> KFormField {
        self.map_channels(|e| e.mul(f))
    }

    pub fn add(&self, other: &KFormField) -> Result<KFormField> {
        self.check_same_shape(other)?;
        let channels = self.channels.iter().zip(&other.channels).map(|(a, b)| a.add(b)).collect();
        Ok(KFormField::from_parts(self.n, self.k, channels, self.mode.combine(other.mode)))
    }

    pub fn sub(&self, other: &KFormField) -> Result<KFormField> {
        self.add(&other.scale(-1.0))
    }

    pub fn check_same_shape(&self, other: &KFormField) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        if self.k != other.k {
            return Err(Error::DegreeMismatch {
                left: self.k,
                right: other.k,
            });
        }
        Ok(())
    }

    pub fn is_analytic(&self) -> bool {
        self.mode == DerivativeMode::Analytic && self.channels.iter().all(Expr::is_analytic)
    }
}

struct FormFn {
    count: usize,
    label: String,
    f: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
}

struct FormChannel {
    form: Arc<FormFn>,
    idx: usize,
}

impl OpaqueScalar for FormChannel {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.form.count];
        (self.form.f)(t, x, &mut buf);
        buf[self.idx]
    }

    fn label(&self) -> String {
        format!("{}[{}]", self.form.label, self.idx)
    }
}

/// Contravariant counterpart of [`KFormField`] (a k-vector field).
#[derive(Clone, Debug)]
pub struct KVectorField {
    n: usize,
    k: usize,
    channels: Vec<Expr>,
}

impl KVectorField {
    pub fn new(n: usize, k: usize, channels: Vec<Expr>) -> Result<Self> {
        let expected = binomial(n, k);
        if k > n || channels.len() != expected {
            return Err(Error::ChannelCount {
                n,
                k,
                expected,
                got: channels.len(),
            });
        }
        Ok(KVectorField { n, k, channels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn channels(&self) -> &[Expr] {
        &self.channels
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.channels.iter().map(|c| c.eval(t, x)).collect()
    }

    /// Full contraction with a k-form at a point: `Σ_I v^I α_I`.
    pub fn pair(&self, form: &KFormField, t: f64, x: &[f64]) -> Result<f64> {
        if self.n != form.n() || self.k != form.degree() {
            return Err(Error::ShapeMismatch("k-vector and k-form shapes differ".into()));
        }
        Ok(self
            .channels
            .iter()
            .zip(form.channels())
            .map(|(v, a)| v.eval(t, x) * a.eval(t, x))
            .sum())
    }
}

/// Regularity metadata attached to a vector field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldMeta {
    pub holder_alpha: Option<f64>,
    pub cutoff_radius: Option<f64>,
    pub label: String,
}

/// Vector field `b(t, x)` with its Jacobian `J[i][j] = ∂_j b^i`.
#[derive(Clone, Debug)]
pub struct VectorField {
    n: usize,
    components: Vec<Expr>,
    jacobian: Vec<Expr>,
    explicit_jacobian: bool,
    meta: FieldMeta,
    mode: DerivativeMode,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Result<Self> {
        Self::with_mode(components, DerivativeMode::Analytic)
    }

    pub fn with_mode(components: Vec<Expr>, mode: DerivativeMode) -> Result<Self> {
        let n = components.len();
        check_dimension(n, false)?;
        Ok(Self::build(components, mode))
    }

    pub fn new_large(components: Vec<Expr>) -> Result<Self> {
        check_dimension(components.len(), true)?;
        Ok(Self::build(components, DerivativeMode::Analytic))
    }

    fn build(components: Vec<Expr>, mode: DerivativeMode) -> Self {
        let n = components.len();
        let mut jacobian = Vec::with_capacity(n * n);
        for c in &components {
            for j in 0..n {
                jacobian.push(mode.differentiate(c, j));
            }
        }
        VectorField {
            n,
            components,
            jacobian,
            explicit_jacobian: false,
            meta: FieldMeta::default(),
            mode,
        }
    }

    /// Replaces the derived Jacobian with a supplied one (row-major, `∂_j b^i`).
    pub fn with_jacobian(mut self, jacobian: Vec<Expr>) -> Result<Self> {
        if jacobian.len() != self.n * self.n {
            return Err(Error::ShapeMismatch(format!(
                "jacobian has {} entries, expected {}",
                jacobian.len(),
                self.n * self.n
            )));
        }
        self.jacobian = jacobian;
        self.explicit_jacobian = true;
        Ok(self)
    }

    pub fn with_meta(mut self, meta: FieldMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn constant(c: &[f64]) -> Result<Self> {
        Self::new(c.iter().map(|&v| Expr::constant(v)).collect())
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::constant(&vec![0.0; n])
    }

    /// Linear field `x ↦ A x` for row-major `A`.
    pub fn linear(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::ShapeMismatch("matrix size".into()));
        }
        let comps = (0..n)
            .map(|i| Expr::sum(&(0..n).map(|j| Expr::var(j).scale(a[i * n + j])).collect::<Vec<_>>()))
            .collect();
        let jac = a.iter().map(|&v| Expr::constant(v)).collect();
        Self::new(comps)?.with_jacobian(jac)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.components[i]
    }

    /// `∂_j b^i`.
    pub fn jacobian_entry(&self, i: usize, j: usize) -> &Expr {
        &self.jacobian[i * self.n + j]
    }

    pub fn has_explicit_jacobian(&self) -> bool {
        self.explicit_jacobian
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(t, x);
        }
    }

    pub fn eval_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(t, x)).collect()
    }

    pub fn eval_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.jacobian) {
            *o = c.eval(t, x);
        }
    }

    /// Divergence as an expression.
    pub fn divergence(&self) -> Expr {
        Expr::sum(&(0..self.n).map(|i| self.jacobian_entry(i, i).clone()).collect::<Vec<_>>())
    }

    pub fn scale(&self, c: f64) -> VectorField {
        let components = self.components.iter().map(|e| e.scale(c)).collect();
        let jacobian = self.jacobian.iter().map(|e| e.scale(c)).collect();
        VectorField {
            n: self.n,
            components,
            jacobian,
            explicit_jacobian: self.explicit_jacobian,
            meta: self.meta.clone(),
            mode: self.mode,
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let components = self.components.iter().zip(&other.components).map(|(a, b)| a.add(b)).collect();
        let jacobian = self.jacobian.iter().zip(&other.jacobian).map(|(a, b)| a.add(b)).collect();
        Ok(VectorField {
            n: self.n,
            components,
            jacobian,
            explicit_jacobian: self.explicit_jacobian || other.explicit_jacobian,
            meta: FieldMeta::default(),
            mode: self.mode.combine(other.mode),
        })
    }

    /// Itô correction drift `½ Σ_k (Dξ_k) ξ_k` for a family of noise fields.
    pub fn ito_correction(xis: &[VectorField]) -> Result<Option<VectorField>> {
        let Some(first) = xis.first() else {
            return Ok(None);
        };
        let n = first.n;
        let mut comps = vec![Expr::zero(); n];
        let mut mode = DerivativeMode::Analytic;
        for xi in xis {
            if xi.n != n {
                return Err(Error::DimensionMismatch { left: n, right: xi.n });
            }
            mode = mode.combine(xi.mode);
            for (i, c) in comps.iter_mut().enumerate() {
                for j in 0..n {
                    *c = c.add(&xi.jacobian_entry(i, j).mul(&xi.components[j]).scale(0.5));
                }
            }
        }
        Ok(Some(Self::build(comps, mode)))
    }

    /// Largest discrepancy between the stored Jacobian and central differences
    /// of the components over the probe points.
    pub fn jacobian_fd_discrepancy(&self, t: f64, probes: &[Vec<f64>], h: f64) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        let mut jac = vec![0.0; n * n];
        for p in probes {
            self.eval_jacobian(t, p, &mut jac);
            for j in 0..n {
                let mut xp = p.clone();
                let mut xm = p.clone();
                xp[j] += h;
                xm[j] -= h;
                for i in 0..n {
                    let fd = (self.components[i].eval(t, &xp) - self.components[i].eval(t, &xm)) / (2.0 * h);
                    worst = worst.max((fd - jac[i * n + j]).abs());
                }
            }
        }
        worst
    }
}

/// Compactly supported test form: a k-form multiplied by a smooth bump that
/// vanishes outside `B(center, radius)`.
#[derive(Clone, Debug)]
pub struct TestForm {
    form: KFormField,
    center: Vec<f64>,
    radius: f64,
}

impl TestForm {
    /// Channels are `bump(|x-c|/R) * profiles[I]`, with the bump
    /// `exp(-1/(1-|x-c|²/R²))` scaled to 1 at the centre.
    pub fn bump(n: usize, k: usize, center: &[f64], radius: f64, profiles: Vec<Expr>) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidParameter("test form radius must be positive".into()));
        }
        if center.len() != n {
            return Err(Error::DimensionMismatch {
                left: n,
                right: center.len(),
            });
        }
        let cutoff = Self::profile(center, radius);
        let channels: Vec<Expr> = profiles.iter().map(|p| p.mul(&cutoff)).collect();
        let form = KFormField::new(n, k, channels)?;
        Ok(TestForm {
            form,
            center: center.to_vec(),
            radius,
        })
    }

    /// The scalar cutoff `e * exp(-1/(1-|x-c|²/R²))`.
    pub fn profile(center: &[f64], radius: f64) -> Expr {
        let s = Expr::dist_sq(center).scale(1.0 / (radius * radius));
        s.bump_exp().scale(std::f64::consts::E)
    }

    pub fn form(&self) -> &KFormField {
        &self.form
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts_follow_binomial() {
        for n in 1..=4 {
            for k in 0..=n {
                let f = KFormField::zero(n, k).unwrap();
                assert_eq!(f.num_channels(), binomial(n, k));
            }
        }
        assert_eq!(KFormField::zero(3, 0).unwrap().num_channels(), 1);
        assert_eq!(KFormField::zero(3, 3).unwrap().num_channels(), 1);
    }

    #[test]
    fn dimension_cap_needs_flag() {
        assert_eq!(KFormField::zero(5, 1).unwrap_err(), Error::DimensionTooLarge(5));
        assert!(KFormField::new_large(5, 1, vec![Expr::zero(); 5]).is_ok());
    }

    #[test]
    fn antisymmetric_extension() {
        let f = KFormField::basis(3, &[0, 2]).unwrap();
        assert_eq!(f.component(&[0, 2]).as_const(), Some(1.0));
        assert_eq!(f.component(&[2, 0]).as_const(), Some(-1.0));
        assert!(f.component(&[2, 2]).is_zero());
    }

    #[test]
    fn explicit_jacobian_agrees_with_fd() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let b = VectorField::new(vec![(&x * &y).sin(), &x * &x - &y]).unwrap();
        let probes = vec![vec![0.1, 0.2], vec![-0.5, 0.7]];
        assert!(b.jacobian_fd_discrepancy(0.0, &probes, 1e-5) < 1e-8);

        let wrong = b.clone().with_jacobian(vec![Expr::zero(); 4]).unwrap();
        assert!(wrong.jacobian_fd_discrepancy(0.0, &probes, 1e-5) > 0.1);
    }

    #[test]
    fn test_form_vanishes_outside_support() {
        let tf = TestForm::bump(2, 1, &[0.5, 0.0], 1.0, vec![Expr::one(), Expr::var(0)]).unwrap();
        for p in [[1.6, 0.0], [0.5, 1.0], [-0.6, 0.3]] {
            assert!(tf.form().eval(0.0, &p).iter().all(|&v| v == 0.0));
        }
        assert!((tf.form().eval(0.0, &[0.5, 0.0])[0] - 1.0).abs() < 1e-14);
    }
}
