//! Nonlinear connections `N^a_b(x, y)` on the tangent bundle.
//!
//! A [`GeneralConnection`] is either derived from a Finsler Lagrangian
//! (the Cartan nonlinear connection
//! `N^a_b = ¼ ∂̄_b[g^{aq}(y^p ∂_p ∂̄_q L − ∂_q L)]`) or supplied explicitly.
//! All derivatives come from the jet engine; the inverse L-metric is
//! propagated through Gaussian elimination on jet-valued entries.
//!
//! Storage: `N[a][b]` is `N^a_b`; rank-3 arrays `T[a][b][c]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::{condition_number, Expr, FinslerLagrangian, Matrix, DEGENERACY_THRESHOLD};
use crate::multidiff::{seed, solve, taylor_expand, Scalar, ScalarField, Taylor, Var};
use crate::point::TangentBundlePoint;

pub type Tensor3 = Vec<Vec<Vec<f64>>>;
pub type Tensor4 = Vec<Vec<Vec<Vec<f64>>>>;

pub(crate) fn zeros3(n: usize) -> Tensor3 {
    vec![vec![vec![0.0; n]; n]; n]
}

pub(crate) fn zeros4(n: usize) -> Tensor4 {
    vec![zeros3(n); n]
}

/// User-supplied connection coefficients, evaluable on numbers and jets.
pub trait ConnectionField: Send + Sync {
    fn dimension(&self) -> usize;
    /// Row-major `N^a_b`, length `n²`.
    fn coefficients(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn coefficients_taylor(&self, x: &[Taylor], y: &[Taylor]) -> Vec<Taylor>;
}

/// Implement one generic evaluator and get [`ConnectionField`].
pub trait GenericConnectionField: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval_generic<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S>;
}

impl<T: GenericConnectionField> ConnectionField for T {
    fn dimension(&self) -> usize {
        GenericConnectionField::dimension(self)
    }
    fn coefficients(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.eval_generic(x, y)
    }
    fn coefficients_taylor(&self, x: &[Taylor], y: &[Taylor]) -> Vec<Taylor> {
        self.eval_generic(x, y)
    }
}

/// Connection coefficients given as expression strings in `x1..xn, y1..yn`.
#[derive(Debug, Clone)]
pub struct ExpressionConnection {
    n: usize,
    entries: Vec<Expr>,
}

impl ExpressionConnection {
    /// `rows[a][b]` is the expression for `N^a_b`.
    pub fn parse(rows: &[&[&str]]) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidModel("connection matrix must be n x n".into()));
            }
            for src in *row {
                let e = Expr::parse(src)?;
                let (nx, ny) = e.variable_bounds();
                if nx > n || ny > n {
                    return Err(Error::InvalidModel(format!(
                        "'{src}' uses a variable beyond dimension {n}"
                    )));
                }
                entries.push(e);
            }
        }
        Ok(Self { n, entries })
    }
}

impl GenericConnectionField for ExpressionConnection {
    fn dimension(&self) -> usize {
        self.n
    }
    fn eval_generic<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        self.entries.iter().map(|e| e.eval(x, y)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionFlags {
    /// `N(x, λy) = λ N(x, y)` for `λ > 0`.
    pub homogeneous: bool,
    /// `∂̄_b N^a_c = ∂̄_c N^a_b`.
    pub symmetric: bool,
}

#[derive(Clone)]
pub enum ConnectionSource {
    Cartan(Arc<FinslerLagrangian>),
    Explicit(Arc<dyn ConnectionField>),
}

impl fmt::Debug for ConnectionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectionSource::Cartan(l) => write!(f, "Cartan({:?})", l.family()),
            ConnectionSource::Explicit(_) => write!(f, "Explicit"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralConnection {
    n: usize,
    source: ConnectionSource,
    flags: ConnectionFlags,
}

/// Connection coefficients, their first derivatives and the curvature at
/// one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionEval {
    pub point: TangentBundlePoint,
    /// `N[a][b] = N^a_b`
    #[serde(rename = "N")]
    pub n: Matrix,
    /// `dn_y[a][b][c] = ∂̄_c N^a_b`
    pub dn_y: Tensor3,
    /// `dn_x[a][b][c] = ∂_c N^a_b`
    pub dn_x: Tensor3,
    /// `delta_n[a][b][c] = δ_c N^a_b = ∂_c N^a_b − N^m_c ∂̄_m N^a_b`
    pub delta_n: Tensor3,
    /// `curvature[a][b][c] = R^a_bc = δ_c N^a_b − δ_b N^a_c`
    #[serde(rename = "R")]
    pub curvature: Tensor3,
}

impl ConnectionEval {
    /// Berwald coefficients `D^a_bc = ∂̄_b N^a_c`.
    pub fn berwald(&self) -> Tensor3 {
        let n = self.n.len();
        let mut d = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    d[a][b][c] = self.dn_y[a][c][b];
                }
            }
        }
        d
    }
}

/// Second derivatives of `N`, used by the third-order exponential map data.
#[derive(Debug, Clone)]
pub(crate) struct SecondOrder {
    pub n: Matrix,
    /// `∂̄_c N^a_b` at `[a][b][c]`
    pub dn_y: Tensor3,
    /// `∂_c N^a_b` at `[a][b][c]`
    pub dn_x: Tensor3,
    /// `∂̄_d ∂̄_c N^a_b` at `[a][b][c][d]`
    pub dn_yy: Tensor4,
    /// `∂_d ∂̄_c N^a_b` at `[a][b][c][d]`
    pub dn_yx: Tensor4,
}

/// Result of sampling the declared flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagCheck {
    pub homogeneous: bool,
    pub symmetric: bool,
    pub homogeneity_residual: f64,
    pub symmetry_residual: f64,
}

impl GeneralConnection {
    /// The Cartan nonlinear connection of `l`; flagged homogeneous and
    /// symmetric.
    pub fn cartan(l: FinslerLagrangian) -> Self {
        Self::cartan_shared(Arc::new(l))
    }

    pub fn cartan_shared(l: Arc<FinslerLagrangian>) -> Self {
        Self {
            n: l.dimension(),
            source: ConnectionSource::Cartan(l),
            flags: ConnectionFlags {
                homogeneous: true,
                symmetric: true,
            },
        }
    }

    pub fn explicit(field: Arc<dyn ConnectionField>, flags: ConnectionFlags) -> Self {
        Self {
            n: field.dimension(),
            source: ConnectionSource::Explicit(field),
            flags,
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn flags(&self) -> ConnectionFlags {
        self.flags
    }

    pub fn source(&self) -> &ConnectionSource {
        &self.source
    }

    pub fn lagrangian(&self) -> Option<&FinslerLagrangian> {
        match &self.source {
            ConnectionSource::Cartan(l) => Some(l),
            ConnectionSource::Explicit(_) => None,
        }
    }

    fn check_point(&self, p: &TangentBundlePoint) -> Result<()> {
        p.check_dimension(self.n)?;
        p.check_off_zero_section()
    }

    /// Jets of the coefficients `N^a_b` (row-major), valid up to
    /// `deriv_order` total derivatives of which at most `x_order` are
    /// base derivatives.
    pub(crate) fn coefficient_jets(
        &self,
        p: &TangentBundlePoint,
        deriv_order: usize,
        x_order: usize,
    ) -> Result<Vec<Taylor>> {
        self.check_point(p)?;
        let n = self.n;
        let jets = match &self.source {
            ConnectionSource::Explicit(field) => {
                let (xs, ys) = seed(p, deriv_order, x_order);
                field.coefficients_taylor(&xs, &ys)
            }
            ConnectionSource::Cartan(l) => {
                let order = deriv_order + 3;
                let (xs, ys) = seed(p, order, x_order + 1);
                let lt = l.eval_taylor(&xs, &ys);
                if !lt.is_finite() {
                    return Err(Error::NonFiniteField);
                }
                let ly: Vec<Taylor> = (0..n).map(|q| lt.diff(Var::Y(q))).collect();
                let mut g = Vec::with_capacity(n * n);
                for q in 0..n {
                    for c in 0..n {
                        g.push(ly[q].diff(Var::Y(c)) * 0.5);
                    }
                }
                let gv: Matrix = (0..n)
                    .map(|q| (0..n).map(|c| g[q * n + c].value()).collect())
                    .collect();
                let condition = condition_number(&gv);
                if !(condition <= DEGENERACY_THRESHOLD) {
                    return Err(Error::NearDegenerateMetric { condition });
                }
                let h: Vec<Taylor> = (0..n)
                    .map(|q| {
                        let mut acc = -lt.diff(Var::X(q));
                        for (pp, yp) in ys.iter().enumerate() {
                            acc = acc + yp * &ly[q].diff(Var::X(pp));
                        }
                        acc
                    })
                    .collect();
                let w = solve(g, h).ok_or(Error::NearDegenerateMetric {
                    condition: f64::INFINITY,
                })?;
                let mut out = Vec::with_capacity(n * n);
                for wa in &w {
                    for b in 0..n {
                        out.push(wa.diff(Var::Y(b)) * 0.25);
                    }
                }
                out
            }
        };
        if jets.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: jets.len(),
            });
        }
        if jets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        Ok(jets)
    }

    /// `N^a_b(x, y)`.
    pub fn nonlinear(&self, p: &TangentBundlePoint) -> Result<Matrix> {
        let jets = self.coefficient_jets(p, 0, 0)?;
        let n = self.n;
        Ok((0..n)
            .map(|a| (0..n).map(|b| jets[a * n + b].value()).collect())
            .collect())
    }

    /// `N` and `∂̄N` only; the right-hand side of the horizontal
    /// autoparallel equations.
    pub(crate) fn spray_data(&self, p: &TangentBundlePoint) -> Result<(Matrix, Tensor3)> {
        let jets = self.coefficient_jets(p, 1, 0)?;
        let n = self.n;
        let mut nm = vec![vec![0.0; n]; n];
        let mut dy = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                let t = &jets[a * n + b];
                nm[a][b] = t.value();
                for c in 0..n {
                    dy[a][b][c] = t.partial(&[Var::Y(c)]);
                }
            }
        }
        Ok((nm, dy))
    }

    /// Coefficients, first derivatives, horizontal derivatives and curvature.
    pub fn eval(&self, p: &TangentBundlePoint) -> Result<ConnectionEval> {
        let jets = self.coefficient_jets(p, 1, 1)?;
        let n = self.n;
        let mut nm = vec![vec![0.0; n]; n];
        let mut dn_y = zeros3(n);
        let mut dn_x = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                let t = &jets[a * n + b];
                nm[a][b] = t.value();
                for c in 0..n {
                    dn_y[a][b][c] = t.partial(&[Var::Y(c)]);
                    dn_x[a][b][c] = t.partial(&[Var::X(c)]);
                }
            }
        }
        let mut delta_n = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut v = dn_x[a][b][c];
                    for m in 0..n {
                        v -= nm[m][c] * dn_y[a][b][m];
                    }
                    delta_n[a][b][c] = v;
                }
            }
        }
        let mut curvature = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    curvature[a][b][c] = delta_n[a][b][c] - delta_n[a][c][b];
                }
            }
        }
        Ok(ConnectionEval {
            point: p.clone(),
            n: nm,
            dn_y,
            dn_x,
            delta_n,
            curvature,
        })
    }

    /// Berwald coefficients `D^a_bc = ∂̄_b N^a_c`.
    pub fn berwald(&self, p: &TangentBundlePoint) -> Result<Tensor3> {
        let (_, dy) = self.spray_data(p)?;
        let n = self.n;
        let mut d = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    d[a][b][c] = dy[a][c][b];
                }
            }
        }
        Ok(d)
    }

    pub(crate) fn second_order(&self, p: &TangentBundlePoint) -> Result<SecondOrder> {
        let jets = self.coefficient_jets(p, 2, 1)?;
        let n = self.n;
        let mut out = SecondOrder {
            n: vec![vec![0.0; n]; n],
            dn_y: zeros3(n),
            dn_x: zeros3(n),
            dn_yy: zeros4(n),
            dn_yx: zeros4(n),
        };
        for a in 0..n {
            for b in 0..n {
                let t = &jets[a * n + b];
                out.n[a][b] = t.value();
                for c in 0..n {
                    out.dn_y[a][b][c] = t.partial(&[Var::Y(c)]);
                    out.dn_x[a][b][c] = t.partial(&[Var::X(c)]);
                    for d in 0..n {
                        out.dn_yy[a][b][c][d] = t.partial(&[Var::Y(c), Var::Y(d)]);
                        out.dn_yx[a][b][c][d] = t.partial(&[Var::Y(c), Var::X(d)]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `δ_a f = ∂_a f − N^b_a ∂̄_b f`.
    pub fn horizontal_derivative(
        &self,
        field: &dyn ScalarField,
        p: &TangentBundlePoint,
    ) -> Result<Vec<f64>> {
        let nm = self.nonlinear(p)?;
        let jet = taylor_expand(field, p, 1, 1)?;
        let n = self.n;
        Ok((0..n)
            .map(|a| {
                let mut v = jet.partial(&[Var::X(a)]);
                for (b, row) in nm.iter().enumerate() {
                    v -= row[a] * jet.partial(&[Var::Y(b)]);
                }
                v
            })
            .collect())
    }

    /// Samples the declared flags at `points` with `λ ∈ {0.5, 2}`.
    pub fn check_flags(&self, points: &[TangentBundlePoint], tolerance: f64) -> Result<FlagCheck> {
        let mut hom: f64 = 0.0;
        let mut sym: f64 = 0.0;
        for p in points {
            let (nm, dy) = self.spray_data(p)?;
            let n = self.n;
            for lambda in [0.5, 2.0] {
                let scaled = self.nonlinear(&p.scaled(lambda))?;
                let scale = nm
                    .iter()
                    .flatten()
                    .fold(0.0f64, |m, v| m.max((lambda * v).abs()))
                    .max(1e-12);
                for a in 0..n {
                    for b in 0..n {
                        hom = hom.max((scaled[a][b] - lambda * nm[a][b]).abs() / scale);
                    }
                }
            }
            let scale = dy.iter().flatten().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        sym = sym.max((dy[a][b][c] - dy[a][c][b]).abs() / scale);
                    }
                }
            }
        }
        Ok(FlagCheck {
            homogeneous: hom <= tolerance,
            symmetric: sym <= tolerance,
            homogeneity_residual: hom,
            symmetry_residual: sym,
        })
    }
}

/// Cartan nonlinear connection of `l` at `p`.
pub fn cartan_nonlinear(l: &FinslerLagrangian, p: &TangentBundlePoint) -> Result<Matrix> {
    GeneralConnection::cartan(l.clone()).nonlinear(p)
}

pub fn connection_eval(c: &GeneralConnection, p: &TangentBundlePoint) -> Result<ConnectionEval> {
    c.eval(p)
}

pub fn berwald_coeffs(c: &GeneralConnection, p: &TangentBundlePoint) -> Result<Tensor3> {
    c.berwald(p)
}

pub fn horizontal_derivative(
    c: &GeneralConnection,
    field: &dyn ScalarField,
    p: &TangentBundlePoint,
) -> Result<Vec<f64>> {
    c.horizontal_derivative(field, p)
}

/// δ-Christoffel symbols
/// `Γ^a_bc = ½ g^{aq}(δ_b g_qc + δ_c g_qb − δ_q g_bc)` of the Cartan linear
/// connection.
pub fn cartan_linear_delta(l: &FinslerLagrangian, p: &TangentBundlePoint) -> Result<Tensor3> {
    let nm = cartan_nonlinear(l, p)?;
    let n = l.dimension();
    let jet = taylor_expand(l, p, 3, 1)?;
    let g = |a: usize, b: usize| 0.5 * jet.partial(&[Var::Y(a), Var::Y(b)]);
    let dg_x = |a: usize, b: usize, c: usize| 0.5 * jet.partial(&[Var::Y(a), Var::Y(b), Var::X(c)]);
    let dg_y = |a: usize, b: usize, c: usize| 0.5 * jet.partial(&[Var::Y(a), Var::Y(b), Var::Y(c)]);
    // dg[q][c][b] = δ_b g_qc
    let mut dg = zeros3(n);
    for q in 0..n {
        for c in 0..n {
            for b in 0..n {
                let mut v = dg_x(q, c, b);
                for m in 0..n {
                    v -= nm[m][b] * dg_y(q, c, m);
                }
                dg[q][c][b] = v;
            }
        }
    }
    let gm = DMatrix::from_fn(n, n, g);
    let ginv = gm.try_inverse().ok_or(Error::NearDegenerateMetric {
        condition: f64::INFINITY,
    })?;
    let mut gamma = zeros3(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut v = 0.0;
                for q in 0..n {
                    v += ginv[(a, q)] * (dg[q][c][b] + dg[q][b][c] - dg[b][c][q]);
                }
                gamma[a][b][c] = 0.5 * v;
            }
        }
    }
    Ok(gamma)
}
