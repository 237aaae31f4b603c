//! Finsler Lagrangians `L(x, y)`, their L-metric `g = ½∂̄∂̄L`, the Finsler
//! function `F = |L|^{1/r}` and a sampled spacetime validation suite.

pub mod builtin;
pub mod expr;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::multidiff::{taylor_expand, FieldArg, ScalarField, Taylor, Var};
use crate::point::TangentBundlePoint;

pub use builtin::{builtin, BuiltinModel, FibreRegion, BUILTIN_NAMES};
pub use expr::{Expr, ParseError};
pub use validate::{
    validate_spacetime, ConditionVerdict, SampleSpec, Signature, ValidationReport, Witness,
};

/// L-metric condition numbers above this value mark the degeneracy set.
pub const DEGENERACY_THRESHOLD: f64 = 1e8;

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

/// One monomial `c(x) y^{i₁} ⋯ y^{i_p}` of a p-th root Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct PthTerm {
    pub coefficient: Expr,
    /// 0-based fibre indices, length `p`.
    pub indices: Vec<usize>,
}

#[derive(Clone)]
pub enum Family {
    /// `g_ab(x) y^a y^b`
    Quadratic { metric: Vec<Vec<Expr>> },
    /// `(√(a_ab(x) y^a y^b) + b_a(x) y^a)^exponent`
    Randers {
        metric: Vec<Vec<Expr>>,
        one_form: Vec<Expr>,
        exponent: f64,
    },
    /// `G_{a₁…a_p}(x) y^{a₁} ⋯ y^{a_p}`
    PthRoot { p: u32, terms: Vec<PthTerm> },
    /// Arbitrary expression in `x` and `y`.
    Expression(Expr),
    /// User-supplied evaluator.
    Evaluator(Arc<dyn ScalarField>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Quadratic { .. } => write!(f, "Quadratic"),
            Family::Randers { exponent, .. } => write!(f, "Randers(exponent = {exponent})"),
            Family::PthRoot { p, terms } => write!(f, "PthRoot(p = {p}, {} terms)", terms.len()),
            Family::Expression(e) => write!(f, "Expression({e})"),
            Family::Evaluator(_) => write!(f, "Evaluator"),
        }
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Quadratic { .. } => "quadratic",
            Family::Randers { .. } => "randers",
            Family::PthRoot { .. } => "pth_root",
            Family::Expression(_) | Family::Evaluator(_) => "custom",
        }
    }
}

/// An `r`-homogeneous Lagrangian on the tangent bundle of an
/// `n`-dimensional manifold. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FinslerLagrangian {
    dimension: usize,
    homogeneity_degree: f64,
    family: Family,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    dimension: usize,
    homogeneity_degree: f64,
    family: String,
    #[serde(default)]
    parameters: Value,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

fn parse_coefficient(src: &Value, n: usize, what: &str) -> Result<Expr> {
    let e = match src {
        Value::String(s) => Expr::parse(s)?,
        Value::Number(v) => Expr::Num(v.as_f64().unwrap_or(f64::NAN)),
        _ => return Err(invalid(format!("{what}: expected an expression string"))),
    };
    let (nx, ny) = e.variable_bounds();
    if ny > 0 {
        return Err(invalid(format!("{what}: coefficient must not depend on y")));
    }
    if nx > n {
        return Err(invalid(format!("{what}: uses x{nx} but dimension is {n}")));
    }
    Ok(e)
}

fn parse_matrix(src: &Value, n: usize, what: &str) -> Result<Vec<Vec<Expr>>> {
    let rows = src
        .as_array()
        .filter(|r| r.len() == n)
        .ok_or_else(|| invalid(format!("{what}: expected {n} rows")))?;
    rows.iter()
        .enumerate()
        .map(|(a, row)| {
            let row = row
                .as_array()
                .filter(|r| r.len() == n)
                .ok_or_else(|| invalid(format!("{what}: row {} must have {n} entries", a + 1)))?;
            row.iter()
                .enumerate()
                .map(|(b, v)| parse_coefficient(v, n, &format!("{what}[{}][{}]", a + 1, b + 1)))
                .collect()
        })
        .collect()
}

fn quadratic_form<S: FieldArg>(metric: &[Vec<Expr>], x: &[S], y: &[S]) -> S {
    let mut acc: Option<S> = None;
    for (a, row) in metric.iter().enumerate() {
        for (b, g) in row.iter().enumerate() {
            if *g == Expr::Num(0.0) {
                continue;
            }
            let term = g.eval(x, &[] as &[S]) * y[a].clone() * y[b].clone();
            acc = Some(match acc {
                None => term,
                Some(s) => s + term,
            });
        }
    }
    acc.unwrap_or_else(|| S::from_f64(0.0))
}

impl FinslerLagrangian {
    pub fn new(dimension: usize, homogeneity_degree: f64, family: Family) -> Result<Self> {
        if dimension < 2 {
            return Err(invalid("dimension must be at least 2"));
        }
        if !(homogeneity_degree >= 2.0) || !homogeneity_degree.is_finite() {
            return Err(invalid("homogeneity degree must be a finite real number >= 2"));
        }
        let n = dimension;
        let check_bounds = |e: &Expr, what: &str, allow_y: bool| -> Result<()> {
            let (nx, ny) = e.variable_bounds();
            if nx > n || ny > n {
                return Err(invalid(format!("{what}: variable index exceeds dimension {n}")));
            }
            if !allow_y && ny > 0 {
                return Err(invalid(format!("{what}: coefficient must not depend on y")));
            }
            Ok(())
        };
        match &family {
            Family::Quadratic { metric } => {
                if homogeneity_degree != 2.0 {
                    return Err(invalid("quadratic Lagrangians are 2-homogeneous"));
                }
                if metric.len() != n || metric.iter().any(|r| r.len() != n) {
                    return Err(invalid("metric must be n x n"));
                }
                metric.iter().flatten().try_for_each(|e| check_bounds(e, "metric", false))?;
            }
            Family::Randers {
                metric,
                one_form,
                exponent,
            } => {
                if *exponent != homogeneity_degree {
                    return Err(invalid("randers exponent must equal the homogeneity degree"));
                }
                if metric.len() != n || metric.iter().any(|r| r.len() != n) || one_form.len() != n {
                    return Err(invalid("randers metric must be n x n and one-form of length n"));
                }
                metric.iter().flatten().try_for_each(|e| check_bounds(e, "metric", false))?;
                one_form.iter().try_for_each(|e| check_bounds(e, "one_form", false))?;
            }
            Family::PthRoot { p, terms } => {
                if *p as f64 != homogeneity_degree {
                    return Err(invalid("p-th root order must equal the homogeneity degree"));
                }
                if terms.is_empty() {
                    return Err(invalid("p-th root Lagrangian needs at least one term"));
                }
                for t in terms {
                    check_bounds(&t.coefficient, "term coefficient", false)?;
                    if t.indices.len() != *p as usize || t.indices.iter().any(|&i| i >= n) {
                        return Err(invalid(format!("each term needs {p} fibre indices in 1..={n}")));
                    }
                }
            }
            Family::Expression(e) => check_bounds(e, "expression", true)?,
            Family::Evaluator(f) => {
                if f.dimension() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: f.dimension(),
                    });
                }
            }
        }
        Ok(Self {
            dimension,
            homogeneity_degree,
            family,
        })
    }

    /// Quadratic Lagrangian from metric component expressions.
    pub fn quadratic(metric: &[&[&str]]) -> Result<Self> {
        let n = metric.len();
        let metric = metric
            .iter()
            .map(|row| row.iter().map(|s| Expr::parse(s).map_err(Error::from)).collect())
            .collect::<Result<Vec<Vec<Expr>>>>()?;
        Self::new(n, 2.0, Family::Quadratic { metric })
    }

    /// Parses the JSON model format
    /// `{dimension, homogeneity_degree, family, parameters}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| invalid(format!("model file: {e}")))?;
        let n = file.dimension;
        let params = &file.parameters;
        let family = match file.family.as_str() {
            "quadratic" => Family::Quadratic {
                metric: parse_matrix(&params["metric"], n, "metric")?,
            },
            "randers" => {
                let one_form = params["one_form"]
                    .as_array()
                    .filter(|v| v.len() == n)
                    .ok_or_else(|| invalid(format!("one_form: expected {n} entries")))?
                    .iter()
                    .enumerate()
                    .map(|(a, v)| parse_coefficient(v, n, &format!("one_form[{}]", a + 1)))
                    .collect::<Result<Vec<_>>>()?;
                let exponent = params
                    .get("exponent")
                    .and_then(Value::as_f64)
                    .unwrap_or(file.homogeneity_degree);
                Family::Randers {
                    metric: parse_matrix(&params["metric"], n, "metric")?,
                    one_form,
                    exponent,
                }
            }
            "pth_root" => {
                let p = params["p"]
                    .as_u64()
                    .ok_or_else(|| invalid("pth_root: integer parameter p required"))?
                    as u32;
                let terms = params["terms"]
                    .as_array()
                    .ok_or_else(|| invalid("pth_root: terms array required"))?
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let coefficient =
                            parse_coefficient(&t["coefficient"], n, &format!("terms[{k}]"))?;
                        let indices = t["indices"]
                            .as_array()
                            .ok_or_else(|| invalid(format!("terms[{k}]: indices required")))?
                            .iter()
                            .map(|i| match i.as_u64() {
                                Some(i) if i >= 1 => Ok(i as usize - 1),
                                _ => Err(invalid(format!("terms[{k}]: indices are 1-based integers"))),
                            })
                            .collect::<Result<Vec<_>>>()?;
                        Ok(PthTerm {
                            coefficient,
                            indices,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Family::PthRoot { p, terms }
            }
            "custom" => {
                let src = params["expression"]
                    .as_str()
                    .ok_or_else(|| invalid("custom: expression string required"))?;
                Family::Expression(Expr::parse(src)?)
            }
            other => return Err(invalid(format!("unknown family '{other}'"))),
        };
        Self::new(n, file.homogeneity_degree, family)
    }

    /// Serializes to the model file format. Evaluator-backed models have
    /// no textual form.
    pub fn to_json(&self) -> Option<String> {
        let matrix = |m: &[Vec<Expr>]| -> Value {
            m.iter()
                .map(|row| row.iter().map(|e| e.to_string()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into()
        };
        let parameters = match &self.family {
            Family::Quadratic { metric } => json!({ "metric": matrix(metric) }),
            Family::Randers {
                metric,
                one_form,
                exponent,
            } => json!({
                "metric": matrix(metric),
                "one_form": one_form.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                "exponent": exponent,
            }),
            Family::PthRoot { p, terms } => json!({
                "p": p,
                "terms": terms.iter().map(|t| json!({
                    "coefficient": t.coefficient.to_string(),
                    "indices": t.indices.iter().map(|i| i + 1).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            }),
            Family::Expression(e) => json!({ "expression": e.to_string() }),
            Family::Evaluator(_) => return None,
        };
        let file = ModelFile {
            dimension: self.dimension,
            homogeneity_degree: self.homogeneity_degree,
            family: self.family.name().to_string(),
            parameters,
        };
        serde_json::to_string_pretty(&file).ok()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn homogeneity_degree(&self) -> f64 {
        self.homogeneity_degree
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.family, Family::Quadratic { .. })
    }

    pub(crate) fn eval_with<S: FieldArg>(&self, x: &[S], y: &[S]) -> S {
        match &self.family {
            Family::Quadratic { metric } => quadratic_form(metric, x, y),
            Family::Randers {
                metric,
                one_form,
                exponent,
            } => {
                let mut b = S::from_f64(0.0);
                for (a, e) in one_form.iter().enumerate() {
                    if *e != Expr::Num(0.0) {
                        b = b + e.eval(x, &[] as &[S]) * y[a].clone();
                    }
                }
                let base = quadratic_form(metric, x, y).sqrt() + b;
                if exponent.fract() == 0.0 {
                    base.powi(*exponent as i32)
                } else {
                    base.powf(*exponent)
                }
            }
            Family::PthRoot { terms, .. } => {
                let mut acc = S::from_f64(0.0);
                for t in terms {
                    let mut term = t.coefficient.eval(x, &[] as &[S]);
                    for &i in &t.indices {
                        term = term * y[i].clone();
                    }
                    acc = acc + term;
                }
                acc
            }
            Family::Expression(e) => e.eval(x, y),
            Family::Evaluator(f) => S::apply(f.as_ref(), x, y),
        }
    }

    /// `L(x, y)`.
    pub fn evaluate(&self, p: &TangentBundlePoint) -> Result<f64> {
        p.check_dimension(self.dimension)?;
        if !p.is_finite() {
            return Err(Error::NonFiniteField);
        }
        let v = self.eval_with(&p.x, &p.y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteField)
        }
    }

    /// Finsler function `F = |L|^{1/r}`.
    pub fn finsler_function(&self, p: &TangentBundlePoint) -> Result<f64> {
        Ok(self.evaluate(p)?.abs().powf(1.0 / self.homogeneity_degree))
    }

    /// L-metric `g_ab = ½ ∂̄_a ∂̄_b L`.
    pub fn l_metric(&self, p: &TangentBundlePoint) -> Result<Matrix> {
        p.check_dimension(self.dimension)?;
        if self.is_quadratic() {
            if !p.is_finite() {
                return Err(Error::NonFiniteField);
            }
        } else {
            p.check_off_zero_section()?;
        }
        let t = taylor_expand(self, p, 2, 0)?;
        let n = self.dimension;
        Ok((0..n)
            .map(|a| {
                (0..n)
                    .map(|b| 0.5 * t.partial(&[Var::Y(a), Var::Y(b)]))
                    .collect()
            })
            .collect())
    }

    /// Fibre gradient `∂̄_a L`.
    pub fn fibre_gradient(&self, p: &TangentBundlePoint) -> Result<Vec<f64>> {
        p.check_dimension(self.dimension)?;
        let t = taylor_expand(self, p, 1, 0)?;
        Ok((0..self.dimension).map(|a| t.partial(&[Var::Y(a)])).collect())
    }
}

impl ScalarField for FinslerLagrangian {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_with(x, y)
    }

    fn eval_taylor(&self, x: &[Taylor], y: &[Taylor]) -> Taylor {
        self.eval_with(x, y)
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let n = m.len();
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let mut ev: Vec<f64> = SymmetricEigen::new(dm).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectral condition number `max|λ| / min|λ|` (infinite when singular).
pub fn condition_number(m: &Matrix) -> f64 {
    let ev = symmetric_eigenvalues(m);
    let max = ev.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let min = ev.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numbers of positive and negative eigenvalues; eigenvalues below
/// `1e-12 · max|λ|` count as neither.
pub fn signature(m: &Matrix) -> (usize, usize) {
    let ev = symmetric_eigenvalues(m);
    let scale = ev.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let cut = 1e-12 * scale;
    let pos = ev.iter().filter(|&&l| l > cut).count();
    let neg = ev.iter().filter(|&&l| l < -cut).count();
    (pos, neg)
}
