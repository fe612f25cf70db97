//! Named analytic primitives, composable by sum and scalar multiple, so that
//! scenario configs can describe every field they use as plain data.

use serde::{Deserialize, Serialize};

use crate::advection::{AffineSimplexSpec, Chain};
use crate::calculus::field::{KFormField, TestForm, VectorField};
use crate::calculus::multi_index::binomial;
use crate::counterexample::HolderDrift;
use crate::error::{Error, Result};
use crate::expr::Expr;

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(Error::Config(format!("{what} has length {got}, expected {n}")));
    }
    Ok(())
}

fn dot_expr(k: &[f64]) -> Expr {
    Expr::sum(&k.iter().enumerate().map(|(i, c)| Expr::var(i).scale(*c)).collect::<Vec<_>>())
}

/// Scalar functions of `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant {
        value: f64,
    },
    /// `amplitude · exp(−|x − center|²/width²)`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude · sin(k·x + phase)`.
    Trigonometric {
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `x_i`.
    Coordinate {
        index: usize,
    },
    Sum {
        terms: Vec<ScalarSpec>,
    },
    Scale {
        factor: f64,
        of: Box<ScalarSpec>,
    },
    Product {
        factors: Vec<ScalarSpec>,
    },
}

fn one() -> f64 {
    1.0
}

impl ScalarSpec {
    pub fn build(&self, n: usize) -> Result<Expr> {
        Ok(match self {
            ScalarSpec::Constant { value } => Expr::constant(*value),
            ScalarSpec::Gaussian { center, width, amplitude } => {
                check_len("gaussian center", center.len(), n)?;
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("gaussian width must be positive, got {width}")));
                }
                Expr::dist_sq(center).scale(-1.0 / (width * width)).exp().scale(*amplitude)
            }
            ScalarSpec::Trigonometric {
                wavevector,
                phase,
                amplitude,
            } => {
                check_len("wavevector", wavevector.len(), n)?;
                dot_expr(wavevector).add(&Expr::constant(*phase)).sin().scale(*amplitude)
            }
            ScalarSpec::Coordinate { index } => {
                if *index >= n {
                    return Err(Error::Config(format!("coordinate index {index} out of range for n = {n}")));
                }
                Expr::var(*index)
            }
            ScalarSpec::Sum { terms } => Expr::sum(&terms.iter().map(|t| t.build(n)).collect::<Result<Vec<_>>>()?),
            ScalarSpec::Scale { factor, of } => of.build(n)?.scale(*factor),
            ScalarSpec::Product { factors } => factors
                .iter()
                .try_fold(Expr::one(), |acc, f| Ok::<_, Error>(acc.mul(&f.build(n)?)))?,
        })
    }
}

/// Vector fields on `R^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: Vec<f64>,
    },
    /// `x ↦ A x` with `A` row-major.
    Linear {
        matrix: Vec<f64>,
    },
    /// Rigid rotation with angular speed `omega` in the `(plane[0], plane[1])` plane.
    Rotation {
        omega: f64,
        #[serde(default = "default_plane")]
        plane: [usize; 2],
    },
    RadialHolder {
        alpha: f64,
        r_cut: f64,
    },
    /// `direction · amplitude · exp(−|x − center|²/width²)`.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        direction: Vec<f64>,
    },
    /// `direction · amplitude · sin(k·x + phase)`.
    Trigonometric {
        wavevector: Vec<f64>,
        #[serde(default)]
        phase: f64,
        direction: Vec<f64>,
    },
    /// One scalar per component.
    Components {
        components: Vec<ScalarSpec>,
    },
    Sum {
        terms: Vec<FieldSpec>,
    },
    Scale {
        factor: f64,
        of: Box<FieldSpec>,
    },
}

fn default_plane() -> [usize; 2] {
    [0, 1]
}

fn along(direction: &[f64], profile: &Expr) -> Result<VectorField> {
    VectorField::new(direction.iter().map(|d| profile.scale(*d)).collect())
}

impl FieldSpec {
    pub fn build(&self, n: usize) -> Result<VectorField> {
        match self {
            FieldSpec::Constant { value } => {
                check_len("constant field", value.len(), n)?;
                VectorField::constant(value)
            }
            FieldSpec::Linear { matrix } => {
                check_len("linear matrix", matrix.len(), n * n)?;
                VectorField::linear(matrix, n)
            }
            FieldSpec::Rotation { omega, plane } => {
                let [i, j] = *plane;
                if i >= n || j >= n || i == j {
                    return Err(Error::Config(format!("rotation plane {plane:?} invalid for n = {n}")));
                }
                let mut a = vec![0.0; n * n];
                a[i * n + j] = -omega;
                a[j * n + i] = *omega;
                VectorField::linear(&a, n)
            }
            FieldSpec::RadialHolder { alpha, r_cut } => HolderDrift::new(*alpha, *r_cut, n)?.field(),
            FieldSpec::GaussianBump { center, width, direction } => {
                check_len("bump direction", direction.len(), n)?;
                let g = ScalarSpec::Gaussian {
                    center: center.clone(),
                    width: *width,
                    amplitude: 1.0,
                }
                .build(n)?;
                along(direction, &g)
            }
            FieldSpec::Trigonometric {
                wavevector,
                phase,
                direction,
            } => {
                check_len("trigonometric direction", direction.len(), n)?;
                let s = ScalarSpec::Trigonometric {
                    wavevector: wavevector.clone(),
                    phase: *phase,
                    amplitude: 1.0,
                }
                .build(n)?;
                along(direction, &s)
            }
            FieldSpec::Components { components } => {
                check_len("components", components.len(), n)?;
                VectorField::new(components.iter().map(|c| c.build(n)).collect::<Result<_>>()?)
            }
            FieldSpec::Sum { terms } => {
                let mut acc = VectorField::zero(n)?;
                for t in terms {
                    acc = acc.add(&t.build(n)?)?;
                }
                Ok(acc)
            }
            FieldSpec::Scale { factor, of } => Ok(of.build(n)?.scale(*factor)),
        }
    }

    /// Whether the field is constant in `x` (translation invariant).
    pub fn is_constant(&self) -> bool {
        match self {
            FieldSpec::Constant { .. } => true,
            FieldSpec::Scale { of, .. } => of.is_constant(),
            FieldSpec::Sum { terms } => terms.iter().all(|t| t.is_constant()),
            _ => false,
        }
    }
}

/// k-form fields: explicit channels, one profile on every channel, or a
/// single basis element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FormSpec {
    Channels { channels: Vec<ScalarSpec> },
    Uniform { profile: ScalarSpec },
    Basis { indices: Vec<usize>, profile: ScalarSpec },
}

impl FormSpec {
    pub fn build(&self, n: usize, k: usize) -> Result<KFormField> {
        match self {
            FormSpec::Channels { channels } => {
                check_len("form channels", channels.len(), binomial(n, k))?;
                KFormField::new(n, k, channels.iter().map(|c| c.build(n)).collect::<Result<_>>()?)
            }
            FormSpec::Uniform { profile } => {
                let p = profile.build(n)?;
                KFormField::new(n, k, vec![p; binomial(n, k)])
            }
            FormSpec::Basis { indices, profile } => {
                check_len("basis indices", indices.len(), k)?;
                KFormField::monomial(n, indices, profile.build(n)?)
            }
        }
    }
}

/// Compactly supported test form `bump · profiles`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Channel profiles; a single entry is repeated on every channel.
    #[serde(default)]
    pub profiles: Vec<ScalarSpec>,
}

impl TestSpec {
    pub fn build(&self, n: usize, k: usize) -> Result<TestForm> {
        check_len("test center", self.center.len(), n)?;
        let m = binomial(n, k);
        let profiles: Vec<Expr> = match self.profiles.len() {
            0 => vec![Expr::one(); m],
            1 => vec![self.profiles[0].build(n)?; m],
            _ => {
                check_len("test profiles", self.profiles.len(), m)?;
                self.profiles.iter().map(|p| p.build(n)).collect::<Result<_>>()?
            }
        };
        TestForm::bump(n, k, &self.center, self.radius, profiles)
    }
}

/// k-chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChainSpec {
    Segment { from: Vec<f64>, to: Vec<f64> },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    Simplices { simplices: Vec<AffineSimplexSpec> },
}

impl ChainSpec {
    pub fn build(&self, n: usize, order: usize) -> Result<Chain> {
        let c = match self {
            ChainSpec::Segment { from, to } => {
                check_len("segment end", from.len(), n)?;
                check_len("segment end", to.len(), n)?;
                Chain::segment(from, to, order)?
            }
            ChainSpec::Rectangle { lo, hi } => {
                if n != 2 {
                    return Err(Error::Config("rectangle chains live in R^2".into()));
                }
                Chain::rectangle(*lo, *hi, order)?
            }
            ChainSpec::Simplices { simplices } => Chain::affine(n, simplices, order)?,
        };
        Ok(c)
    }

    pub fn degree(&self) -> usize {
        match self {
            ChainSpec::Segment { .. } => 1,
            ChainSpec::Rectangle { .. } => 2,
            ChainSpec::Simplices { simplices } => simplices.first().map_or(0, |s| s.vertices.len().saturating_sub(1)),
        }
    }
}

/// Names of the primitives, for `list`.
pub const FIELD_PRIMITIVES: &[&str] = &[
    "constant",
    "linear",
    "rotation",
    "radial-holder",
    "gaussian-bump",
    "trigonometric",
    "components",
    "sum",
    "scale",
];
pub const SCALAR_PRIMITIVES: &[&str] = &["constant", "gaussian", "trigonometric", "coordinate", "sum", "scale", "product"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_builds_composite_field() {
        let spec: FieldSpec = toml::from_str(
            r#"
            kind = "sum"
            [[terms]]
            kind = "rotation"
            omega = 2.0
            [[terms]]
            kind = "scale"
            factor = 0.5
            of = { kind = "constant", value = [1.0, -1.0] }
            "#,
        )
        .unwrap();
        let b = spec.build(2).unwrap();
        assert_eq!(b.eval_vec(0.0, &[1.0, 0.0]), vec![0.5, 1.5]);
    }

    #[test]
    fn holder_primitive_matches_module() {
        let spec = FieldSpec::RadialHolder { alpha: 0.5, r_cut: 10.0 };
        assert_eq!(spec.build(2).unwrap().eval_vec(0.0, &[1.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        assert!(FieldSpec::Constant { value: vec![1.0] }.build(2).is_err());
        assert!(FieldSpec::Rotation { omega: 1.0, plane: [0, 0] }.build(2).is_err());
        let f = FormSpec::Channels {
            channels: vec![ScalarSpec::Constant { value: 1.0 }],
        };
        assert!(f.build(3, 1).is_err());
        assert!(toml::from_str::<FieldSpec>("kind = \"warp\"").is_err());
    }

    #[test]
    fn forms_and_tests() {
        let f = FormSpec::Basis {
            indices: vec![0, 2],
            profile: ScalarSpec::Coordinate { index: 1 },
        }
        .build(3, 2)
        .unwrap();
        assert_eq!(f.eval(0.0, &[0.0, 2.0, 0.0]), vec![0.0, 2.0, 0.0]);
        let t = TestSpec {
            center: vec![0.0, 0.0],
            radius: 1.0,
            profiles: vec![],
        }
        .build(2, 1)
        .unwrap();
        assert!(t.form().eval(0.0, &[0.0, 0.0])[0] > 0.0);
    }

    #[test]
    fn constant_detection() {
        let s = FieldSpec::Scale {
            factor: 2.0,
            of: Box::new(FieldSpec::Constant { value: vec![1.0, 0.0] }),
        };
        assert!(s.is_constant());
        assert!(!FieldSpec::Rotation { omega: 1.0, plane: [0, 1] }.is_constant());
    }
}
