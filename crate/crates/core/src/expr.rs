//! Scalar expressions in `(t, x)` with symbolic partial derivatives.
//!
//! Every coefficient channel of a form or vector field is an [`Expr`]. Named
//! analytic primitives are built from the node set below and differentiate
//! exactly; opaque closures (mollified fields, sampled flows, tabulated data)
//! enter through [`OpaqueScalar`] and fall back to second-order central
//! differences when they cannot supply their own partials.

use std::fmt;
use std::sync::Arc;

/// Step used when an opaque node without analytic partials has to be
/// differentiated inside an otherwise analytic expression.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

const STACK_DIM: usize = 16;

/// A scalar function of `(t, x)` that is not expressible in the node set.
pub trait OpaqueScalar: Send + Sync {
    fn eval(&self, t: f64, x: &[f64]) -> f64;

    /// Exact partial derivative along `x[dir]`, if the implementor has one.
    fn partial(&self, _dir: usize) -> Option<Expr> {
        None
    }

    fn has_analytic_partials(&self) -> bool {
        false
    }

    fn label(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    /// `exp(-1/(1-a))` for `a < 1`, zero otherwise.
    BumpExp,
}

enum Node {
    Const(f64),
    Var(usize),
    Time,
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Powf(Expr, f64),
    Unary(Unary, Expr),
    /// `if lhs < rhs { then } else { otherwise }`
    Less {
        lhs: Expr,
        rhs: Expr,
        then: Expr,
        otherwise: Expr,
    },
    Opaque(Arc<dyn OpaqueScalar>),
    CentralDiff {
        inner: Expr,
        dir: usize,
        step: f64,
    },
}

/// Reference-counted scalar expression tree.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// Coordinate `x[i]` (0-based).
    pub fn var(i: usize) -> Self {
        Self::node(Node::Var(i))
    }

    pub fn time() -> Self {
        Self::node(Node::Time)
    }

    pub fn opaque(f: Arc<dyn OpaqueScalar>) -> Self {
        Self::node(Node::Opaque(f))
    }

    pub fn as_const(&self) -> Option<f64> {
        match &*self.0 {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Self::node(Node::Add(self.clone(), other.clone())),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => other.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Self::node(Node::Mul(self.clone(), other.clone())),
        }
    }

    pub fn div(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (_, Some(b)) => self.scale(1.0 / b),
            _ => Self::node(Node::Div(self.clone(), other.clone())),
        }
    }

    pub fn neg(&self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::node(Node::Neg(self.clone())),
        }
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::constant(c).mul(self)
    }

    pub fn powf(&self, p: f64) -> Expr {
        if p == 0.0 {
            return Expr::one();
        }
        if p == 1.0 {
            return self.clone();
        }
        match self.as_const() {
            Some(c) => Expr::constant(c.powf(p)),
            None => Self::node(Node::Powf(self.clone(), p)),
        }
    }

    fn unary(&self, f: Unary) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(apply_unary(f, c)),
            None => Self::node(Node::Unary(f, self.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        self.unary(Unary::Sin)
    }
    pub fn cos(&self) -> Expr {
        self.unary(Unary::Cos)
    }
    pub fn exp(&self) -> Expr {
        self.unary(Unary::Exp)
    }
    pub fn ln(&self) -> Expr {
        self.unary(Unary::Ln)
    }
    pub fn sqrt(&self) -> Expr {
        self.unary(Unary::Sqrt)
    }
    pub fn abs(&self) -> Expr {
        self.unary(Unary::Abs)
    }
    pub fn sign(&self) -> Expr {
        self.unary(Unary::Sign)
    }

    /// `exp(-1/(1-self))` where `self < 1`, and `0` elsewhere. Smooth in `self`.
    pub fn bump_exp(&self) -> Expr {
        self.unary(Unary::BumpExp)
    }

    /// Piecewise selection `if self < rhs { then } else { otherwise }`.
    pub fn less_than(&self, rhs: &Expr, then: &Expr, otherwise: &Expr) -> Expr {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return if a < b { then.clone() } else { otherwise.clone() };
        }
        Self::node(Node::Less {
            lhs: self.clone(),
            rhs: rhs.clone(),
            then: then.clone(),
            otherwise: otherwise.clone(),
        })
    }

    pub fn min(&self, other: &Expr) -> Expr {
        self.less_than(other, self, other)
    }

    /// Second-order central difference of `self` along `x[dir]`.
    pub fn central_diff(&self, dir: usize, step: f64) -> Expr {
        if self.as_const().is_some() {
            return Expr::zero();
        }
        Self::node(Node::CentralDiff {
            inner: self.clone(),
            dir,
            step,
        })
    }

    /// Sum of a sequence of expressions.
    pub fn sum<'a, I: IntoIterator<Item = &'a Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| acc.add(t))
    }

    /// Squared Euclidean distance `|x - c|^2` in `n` variables.
    pub fn dist_sq(center: &[f64]) -> Expr {
        let terms: Vec<Expr> = center
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let d = Expr::var(i).add(&Expr::constant(-c));
                d.mul(&d)
            })
            .collect();
        Expr::sum(&terms)
    }

    /// True when every node differentiates exactly (no finite differences and
    /// no opaque nodes without analytic partials).
    pub fn is_analytic(&self) -> bool {
        match &*self.0 {
            Node::Const(_) | Node::Var(_) | Node::Time => true,
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => a.is_analytic() && b.is_analytic(),
            Node::Neg(a) | Node::Powf(a, _) | Node::Unary(_, a) => a.is_analytic(),
            Node::Less { lhs, rhs, then, otherwise } => {
                lhs.is_analytic() && rhs.is_analytic() && then.is_analytic() && otherwise.is_analytic()
            }
            Node::Opaque(f) => f.has_analytic_partials(),
            Node::CentralDiff { .. } => false,
        }
    }

    /// Exact partial derivative along `x[dir]`.
    pub fn diff(&self, dir: usize) -> Expr {
        match &*self.0 {
            Node::Const(_) | Node::Time => Expr::zero(),
            Node::Var(i) => {
                if *i == dir {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => a.diff(dir).add(&b.diff(dir)),
            Node::Mul(a, b) => a.diff(dir).mul(b).add(&a.mul(&b.diff(dir))),
            Node::Div(a, b) => {
                let num = a.diff(dir).mul(b).sub(&a.mul(&b.diff(dir)));
                num.div(&b.mul(b))
            }
            Node::Neg(a) => a.diff(dir).neg(),
            Node::Powf(a, p) => {
                let da = a.diff(dir);
                if da.is_zero() {
                    return Expr::zero();
                }
                a.powf(p - 1.0).scale(*p).mul(&da)
            }
            Node::Unary(f, a) => {
                let da = a.diff(dir);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match f {
                    Unary::Sin => a.cos(),
                    Unary::Cos => a.sin().neg(),
                    Unary::Exp => self.clone(),
                    Unary::Ln => Expr::one().div(a),
                    Unary::Sqrt => Expr::constant(0.5).div(self),
                    Unary::Abs => a.sign(),
                    Unary::Sign => return Expr::zero(),
                    Unary::BumpExp => {
                        let one_minus = Expr::one().sub(a);
                        let d = self.div(&one_minus.mul(&one_minus)).neg();
                        a.less_than(&Expr::one(), &d, &Expr::zero())
                    }
                };
                outer.mul(&da)
            }
            Node::Less { lhs, rhs, then, otherwise } => {
                let dt = then.diff(dir);
                let de = otherwise.diff(dir);
                if dt.is_zero() && de.is_zero() {
                    return Expr::zero();
                }
                lhs.less_than(rhs, &dt, &de)
            }
            Node::Opaque(f) => f.partial(dir).unwrap_or_else(|| self.central_diff(dir, DEFAULT_FD_STEP)),
            Node::CentralDiff { step, .. } => self.central_diff(dir, *step),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Time => t,
            Node::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Node::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Node::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Node::Neg(a) => -a.eval(t, x),
            Node::Powf(a, p) => a.eval(t, x).powf(*p),
            Node::Unary(f, a) => apply_unary(*f, a.eval(t, x)),
            Node::Less { lhs, rhs, then, otherwise } => {
                if lhs.eval(t, x) < rhs.eval(t, x) {
                    then.eval(t, x)
                } else {
                    otherwise.eval(t, x)
                }
            }
            Node::Opaque(f) => f.eval(t, x),
            Node::CentralDiff { inner, dir, step } => {
                let h = *step;
                if x.len() <= STACK_DIM {
                    let mut buf = [0.0; STACK_DIM];
                    let y = &mut buf[..x.len()];
                    y.copy_from_slice(x);
                    y[*dir] = x[*dir] + h;
                    let fp = inner.eval(t, y);
                    y[*dir] = x[*dir] - h;
                    let fm = inner.eval(t, y);
                    (fp - fm) / (2.0 * h)
                } else {
                    let mut y = x.to_vec();
                    y[*dir] = x[*dir] + h;
                    let fp = inner.eval(t, &y);
                    y[*dir] = x[*dir] - h;
                    let fm = inner.eval(t, &y);
                    (fp - fm) / (2.0 * h)
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match &*self.0 {
            Node::Const(_) | Node::Var(_) | Node::Time | Node::Opaque(_) => 1,
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) => 1 + a.node_count() + b.node_count(),
            Node::Neg(a) | Node::Powf(a, _) | Node::Unary(_, a) => 1 + a.node_count(),
            Node::Less { lhs, rhs, then, otherwise } => {
                1 + lhs.node_count() + rhs.node_count() + then.node_count() + otherwise.node_count()
            }
            Node::CentralDiff { inner, .. } => 1 + inner.node_count(),
        }
    }
}

fn apply_unary(f: Unary, a: f64) -> f64 {
    match f {
        Unary::Sin => a.sin(),
        Unary::Cos => a.cos(),
        Unary::Exp => a.exp(),
        Unary::Ln => a.ln(),
        Unary::Sqrt => a.sqrt(),
        Unary::Abs => a.abs(),
        Unary::Sign => {
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        Unary::BumpExp => {
            if a < 1.0 {
                (-1.0 / (1.0 - a)).exp()
            } else {
                0.0
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Time => write!(f, "t"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Div(a, b) => write!(f, "({a})/({b})"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Powf(a, p) => write!(f, "({a})^{p}"),
            Node::Unary(u, a) => write!(f, "{}({a})", format!("{u:?}").to_lowercase()),
            Node::Less { lhs, rhs, then, otherwise } => write!(f, "[{lhs} < {rhs} ? {then} : {otherwise}]"),
            Node::Opaque(o) => write!(f, "<{}>", o.label()),
            Node::CentralDiff { inner, dir, step } => write!(f, "D{}[h={step}]({inner})", dir + 1),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident, $inherent:ident) => {
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$inherent(&self, &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$inherent(self, rhs)
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$inherent(&self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$inherent(self, &rhs)
            }
        }
        impl std::ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$inherent(&self, &Expr::constant(rhs))
            }
        }
        impl std::ops::$tr<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$inherent(self, &Expr::constant(rhs))
            }
        }
        impl std::ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$inherent(&Expr::constant(self), &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$inherent(&Expr::constant(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, add);
impl_binop!(Sub, sub, sub);
impl_binop!(Mul, mul, mul);
impl_binop!(Div, div, div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &Expr, x: &[f64], dir: usize) -> f64 {
        let h = 1e-5;
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[dir] += h;
        m[dir] -= h;
        (e.eval(0.3, &p) - e.eval(0.3, &m)) / (2.0 * h)
    }

    #[test]
    fn symbolic_derivatives_match_finite_differences() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let exprs = vec![
            (&x * &y).sin() + x.exp() * 0.5,
            (&x * &x + &y * &y + 1.0).sqrt(),
            (&x * 0.3).cos() / (&y * &y + 2.0),
            (&x * &x + 0.1).powf(0.7) * y.clone(),
            ((&x * &x + &y * &y) * 0.5).bump_exp(),
            (&x + 3.0).ln() * Expr::time(),
        ];
        let p = [0.4, -0.7];
        for e in &exprs {
            for dir in 0..2 {
                let a = e.diff(dir).eval(0.3, &p);
                let b = fd(e, &p, dir);
                assert!((a - b).abs() < 1e-7, "{e}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bump_vanishes_outside_and_derivative_is_finite_there() {
        let r2 = Expr::dist_sq(&[0.0, 0.0]);
        let b = r2.bump_exp();
        assert_eq!(b.eval(0.0, &[1.0, 0.0]), 0.0);
        assert_eq!(b.eval(0.0, &[2.0, 1.0]), 0.0);
        let d = b.diff(0).diff(0);
        assert_eq!(d.eval(0.0, &[1.5, 0.0]), 0.0);
        assert!(d.eval(0.0, &[0.999, 0.0]).is_finite());
    }

    #[test]
    fn simplification_folds_constants() {
        let e = Expr::constant(2.0) * Expr::constant(3.0) + Expr::zero();
        assert_eq!(e.as_const(), Some(6.0));
        assert!((Expr::var(0) * 0.0).is_zero());
        assert!(Expr::var(1).diff(0).is_zero());
    }

    #[test]
    fn central_diff_node_is_second_order() {
        let e = Expr::var(0).sin();
        let exact = 0.3f64.cos();
        let e1 = (e.central_diff(0, 1e-2).eval(0.0, &[0.3]) - exact).abs();
        let e2 = (e.central_diff(0, 5e-3).eval(0.0, &[0.3]) - exact).abs();
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
        assert!(!e.central_diff(0, 1e-2).is_analytic());
    }
}
