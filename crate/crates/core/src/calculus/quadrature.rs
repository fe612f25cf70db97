//! Tensor-product quadrature on axis-aligned boxes and on reference simplices.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Fixed chunk size for parallel reductions; the summation order depends only
/// on this constant, never on the number of worker threads.
const CHUNK: usize = 256;

/// Deterministic parallel sum of `f(i)` over `0..len`.
pub fn ordered_par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Deterministic parallel maximum of `f(i)` over `0..len` (NaN propagates).
pub fn ordered_par_max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).fold(f64::NEG_INFINITY, nan_max)
        })
        .collect();
    partial.into_iter().fold(f64::NEG_INFINITY, nan_max)
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre recurrence).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[m - 1 - i] = z;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Midpoint,
    /// Composite Gauss–Legendre with panels of `order` nodes.
    GaussLegendre {
        order: usize,
    },
}

/// Tensor-product quadrature over an axis-aligned box.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
    rule: Rule,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(lo: &[f64], hi: &[f64], points_per_axis: usize, rule: Rule) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidGrid("box corners must have equal positive dimension".into()));
        }
        if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidGrid("box must have positive extent".into()));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidGrid("need at least 2 points per axis".into()));
        }
        let (ref_nodes, ref_weights) = match rule {
            Rule::Midpoint => {
                let h = 1.0 / points_per_axis as f64;
                let nodes: Vec<f64> = (0..points_per_axis).map(|i| (i as f64 + 0.5) * h).collect();
                (nodes, vec![h; points_per_axis])
            }
            Rule::GaussLegendre { order } => {
                if order == 0 || !points_per_axis.is_multiple_of(order) {
                    return Err(Error::InvalidGrid(format!(
                        "points per axis {points_per_axis} is not a multiple of the panel order {order}"
                    )));
                }
                let panels = points_per_axis / order;
                let (gn, gw) = gauss_legendre(order);
                let h = 1.0 / panels as f64;
                let mut nodes = Vec::with_capacity(points_per_axis);
                let mut weights = Vec::with_capacity(points_per_axis);
                for p in 0..panels {
                    for (z, w) in gn.iter().zip(&gw) {
                        nodes.push((p as f64 + 0.5 * (z + 1.0)) * h);
                        weights.push(0.5 * w * h);
                    }
                }
                (nodes, weights)
            }
        };
        let dim = lo.len();
        let total = points_per_axis.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for d in 0..dim {
                let len = hi[d] - lo[d];
                nodes.push(lo[d] + ref_nodes[idx[d]] * len);
                w *= ref_weights[idx[d]] * len;
            }
            weights.push(w);
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < points_per_axis {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(QuadratureGrid {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            points_per_axis,
            rule,
            nodes,
            weights,
        })
    }

    /// Symmetric cube `[-half, half]^n` around `center`.
    pub fn cube(center: &[f64], half: f64, points_per_axis: usize, rule: Rule) -> Result<Self> {
        let lo: Vec<f64> = center.iter().map(|c| c - half).collect();
        let hi: Vec<f64> = center.iter().map(|c| c + half).collect();
        Self::new(&lo, &hi, points_per_axis, rule)
    }

    /// Same box and rule with twice as many points per axis.
    pub fn refined(&self) -> Self {
        Self::new(&self.lo, &self.hi, self.points_per_axis * 2, self.rule).expect("refinement keeps a valid grid")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Whether the closed ball `B(center, radius)` lies inside the box.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        center.len() == self.dim()
            && center
                .iter()
                .enumerate()
                .all(|(d, &c)| c - radius >= self.lo[d] - 1e-12 && c + radius <= self.hi[d] + 1e-12)
    }

    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        ordered_par_sum(self.len(), |i| self.weights[i] * f(self.node(i)))
    }

    pub fn max_over_nodes<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        ordered_par_max(self.len(), |i| f(self.node(i)))
    }
}

/// Quadrature rule on the reference k-simplex `{u_i ≥ 0, Σ u_i ≤ 1}` built by
/// collapsing a Gauss–Legendre tensor rule (Duffy transform).
#[derive(Clone, Debug)]
pub struct SimplexRule {
    k: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SimplexRule {
    /// Rule exact for polynomials of total degree `order` (uses
    /// `order/2 + 2` points per collapsed axis).
    pub fn new(k: usize, order: usize) -> Self {
        if k == 0 {
            return SimplexRule {
                k,
                nodes: vec![vec![]],
                weights: vec![1.0],
            };
        }
        let m = order / 2 + 2;
        let (gn, gw) = gauss_legendre(m);
        let unit: Vec<(f64, f64)> = gn.iter().zip(&gw).map(|(z, w)| (0.5 * (z + 1.0), 0.5 * w)).collect();
        let total = m.pow(k as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; k];
        for _ in 0..total {
            // u_1 = s_1, u_2 = (1-s_1) s_2, … with Jacobian Π (1-s_1)…(1-s_{j-1})
            let mut remaining = 1.0;
            let mut point = Vec::with_capacity(k);
            let mut w = 1.0;
            for d in 0..k {
                let (s, ws) = unit[idx[d]];
                point.push(remaining * s);
                w *= ws * remaining;
                remaining *= 1.0 - s;
            }
            nodes.push(point);
            weights.push(w);
            for d in (0..k).rev() {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
            }
        }
        SimplexRule { k, nodes, weights }
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2m_minus_1() {
        for m in 1..12 {
            let (x, w) = gauss_legendre(m);
            for p in 0..2 * m {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} p={p}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn weights_sum_to_volume() {
        for rule in [Rule::Midpoint, Rule::GaussLegendre { order: 4 }] {
            for dim in 1..=3 {
                let lo = vec![-0.3; dim];
                let hi: Vec<f64> = (0..dim).map(|d| 1.0 + d as f64).collect();
                let g = QuadratureGrid::new(&lo, &hi, 8, rule).unwrap();
                assert_eq!(g.len(), 8usize.pow(dim as u32));
                let total: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
                assert!(((total - g.volume()) / g.volume()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(QuadratureGrid::new(&[0.0], &[1.0], 1, Rule::Midpoint).is_err());
        assert!(QuadratureGrid::new(&[0.0], &[0.0], 4, Rule::Midpoint).is_err());
        assert!(QuadratureGrid::new(&[0.0], &[1.0], 6, Rule::GaussLegendre { order: 4 }).is_err());
    }

    #[test]
    fn simplex_rule_integrates_monomials() {
        // ∫_{triangle} u^a v^b = a! b! / (a+b+2)!
        let r = SimplexRule::new(2, 5);
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        for a in 0..=3 {
            for b in 0..=(5 - a).min(3) {
                let q: f64 = r
                    .nodes()
                    .iter()
                    .zip(r.weights())
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!((q - exact).abs() < 1e-14, "a={a} b={b}");
            }
        }
        let seg = SimplexRule::new(1, 5);
        assert!((seg.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parallel_sum_is_thread_count_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3;
        let a = ordered_par_sum(10_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| ordered_par_sum(10_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
