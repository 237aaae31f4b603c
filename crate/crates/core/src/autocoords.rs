//! Locally autoparallel charts around a fibre `T_pM`.
//!
//! Extended charts: `(x, y) = EXP_p(x̃, ỹ)`. Standard charts (homogeneous,
//! symmetric connections only): `x = π EXP_p(x̃, ỹ)` and
//! `y^q = ∂x^q/∂x̃^p ỹ^p`. The ODE-based maps are authoritative; the
//! truncated series serve as diagnostics and as Newton seeds.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connection::{zeros3, ConnectionSource, GeneralConnection, Tensor3};
use crate::dynamics::{exp_derivatives, exp_map, exp_map_tangent, ExpDerivatives, ExpInput, IntegratorConfig};
use crate::error::{Error, Result};
use crate::lagrangian::Matrix;
use crate::point::{norm, TangentBundlePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Extended,
    Standard,
}

impl std::str::FromStr for ChartKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "extended" => Ok(ChartKind::Extended),
            "standard" => Ok(ChartKind::Standard),
            other => Err(format!("unknown chart kind '{other}' (expected extended or standard)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Max-norm of the residual `to_manifold(x̃, ỹ) − p`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Factor applied to the step length while the residual increases.
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            damping: 0.5,
        }
    }
}

/// Zeroth- and first-order Taylor coefficients in `x̃` of the chart
/// Jacobian blocks at `x̃ = 0`. First-order arrays are `[q][b][c]`, the
/// coefficient of `x̃^c` in block entry `(q, b)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobianSeries {
    pub dx_dxt: Matrix,
    pub dx_dyt: Matrix,
    pub dy_dxt: Matrix,
    pub dy_dyt: Matrix,
    pub dx_dxt_first: Tensor3,
    pub dx_dyt_first: Tensor3,
    pub dy_dxt_first: Tensor3,
    pub dy_dyt_first: Tensor3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagrangianInChart {
    pub value: f64,
    pub grad_x_tilde: Vec<f64>,
    pub hess_x_tilde: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartResiduals {
    /// `|to_manifold(from_manifold(p)) − p|_∞`
    pub round_trip: f64,
    /// `|series_forward(order 3) − to_manifold|_∞`
    pub series_gap: f64,
}

/// Audit record of one chart evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartRecord {
    pub kind: ChartKind,
    pub base: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub y_tilde: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residuals: ChartResiduals,
}

/// Connection data at `(x₀, ỹ)` entering the truncated series.
struct SeriesData {
    n: Matrix,
    dn_y: Tensor3,
    exp: ExpDerivatives,
    /// Second-order coefficient of the y-series, `y ⊃ ½ Q^q_bc x̃^b x̃^c`.
    q: Tensor3,
}

#[derive(Debug, Clone)]
pub struct AutoparallelChart {
    connection: GeneralConnection,
    base: Vec<f64>,
    kind: ChartKind,
    newton: NewtonConfig,
    radius_hint: f64,
}

const FLAG_TOLERANCE: f64 = 1e-8;

impl AutoparallelChart {
    /// Standard charts require a connection declared homogeneous and
    /// symmetric; the declaration is sampled around `base`.
    pub fn new(connection: GeneralConnection, base: Vec<f64>, kind: ChartKind) -> Result<Self> {
        let n = connection.dimension();
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: base.len(),
            });
        }
        if base.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        if kind == ChartKind::Standard {
            let flags = connection.flags();
            if !(flags.homogeneous && flags.symmetric) {
                return Err(Error::InadmissibleConnection(
                    "standard charts need a homogeneous and symmetric connection".into(),
                ));
            }
            if let ConnectionSource::Explicit(_) = connection.source() {
                let mut rng = crate::sampling::rng(0x5eed);
                let points: Vec<_> = (0..8)
                    .map(|_| {
                        TangentBundlePoint::new(
                            crate::sampling::in_cube(&mut rng, &base, 0.1),
                            crate::sampling::with_norm(&mut rng, n, 0.5, 2.0),
                        )
                    })
                    .collect();
                let check = connection.check_flags(&points, FLAG_TOLERANCE)?;
                if !(check.homogeneous && check.symmetric) {
                    return Err(Error::InadmissibleConnection(format!(
                        "declared flags not satisfied (homogeneity residual {:e}, symmetry residual {:e})",
                        check.homogeneity_residual, check.symmetry_residual
                    )));
                }
            }
        }
        Ok(Self {
            connection,
            base,
            kind,
            newton: NewtonConfig::default(),
            radius_hint: 0.5,
        })
    }

    pub fn with_radius_hint(mut self, radius: f64) -> Self {
        self.radius_hint = radius;
        self
    }

    pub fn with_newton(mut self, newton: NewtonConfig) -> Self {
        self.newton = newton;
        self
    }

    pub fn connection(&self) -> &GeneralConnection {
        &self.connection
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn radius_hint(&self) -> f64 {
        self.radius_hint
    }

    pub fn newton(&self) -> NewtonConfig {
        self.newton
    }

    pub fn dimension(&self) -> usize {
        self.base.len()
    }

    /// Steps for finite-difference stencils around `x̃ = 0`. The fixed-step
    /// map reproduces the flow's Taylor coefficients in `x̃` through fifth
    /// order for any step count, so derivatives at the centre do not need
    /// the full schedule.
    const CENTRE_STEPS: usize = 4;

    fn steps_for(x_tilde: &[f64]) -> usize {
        16usize.max((128.0 * norm(x_tilde)).ceil() as usize)
    }

    /// Fixed-step integrator settings the chart uses at `x̃`.
    pub fn integrator_config(&self, x_tilde: &[f64]) -> IntegratorConfig {
        IntegratorConfig::fixed(Self::steps_for(x_tilde))
    }

    fn check_args(&self, xt: &[f64], yt: &[f64]) -> Result<()> {
        let n = self.dimension();
        for v in [xt, yt] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        let r = norm(xt);
        if r > self.radius_hint {
            return Err(Error::OutsideTrustRegion {
                norm: r,
                radius: self.radius_hint,
            });
        }
        TangentBundlePoint::new(self.base.clone(), yt.to_vec()).check_off_zero_section()
    }

    fn exp(&self, xt: &[f64], yt: &[f64], steps: usize) -> Result<TangentBundlePoint> {
        let input = ExpInput {
            base: self.base.clone(),
            u: xt.to_vec(),
            v: yt.to_vec(),
        };
        exp_map(&self.connection, &input, &IntegratorConfig::fixed(steps))
    }

    fn map_with(&self, xt: &[f64], yt: &[f64], steps: usize) -> Result<TangentBundlePoint> {
        if xt.iter().all(|v| *v == 0.0) {
            self.connection
                .nonlinear(&TangentBundlePoint::new(self.base.clone(), yt.to_vec()))
                .map_err(|e| Error::ExcludedSetEntered {
                    t: 0.0,
                    reason: e.to_string(),
                })?;
            return Ok(TangentBundlePoint::new(self.base.clone(), yt.to_vec()));
        }
        self.integrated(xt, yt, steps)
    }

    /// The chart map by integration, without the `x̃ = 0` shortcut.
    fn integrated(&self, xt: &[f64], yt: &[f64], steps: usize) -> Result<TangentBundlePoint> {
        match self.kind {
            ChartKind::Extended => self.exp(xt, yt, steps),
            ChartKind::Standard => {
                // y^q = ∂x^q/∂x̃^p ỹ^p from the variational equations
                let input = ExpInput {
                    base: self.base.clone(),
                    u: xt.to_vec(),
                    v: yt.to_vec(),
                };
                let (p, y) = exp_map_tangent(&self.connection, &input, yt, &IntegratorConfig::fixed(steps))?;
                Ok(TangentBundlePoint::new(p.x, y))
            }
        }
    }

    /// Manifold-induced coordinates of the chart point `(x̃, ỹ)`.
    pub fn to_manifold(&self, x_tilde: &[f64], y_tilde: &[f64]) -> Result<TangentBundlePoint> {
        self.check_args(x_tilde, y_tilde)?;
        self.map_with(x_tilde, y_tilde, Self::steps_for(x_tilde))
    }

    fn series_data(&self, y: &[f64]) -> Result<SeriesData> {
        let p = TangentBundlePoint::new(self.base.clone(), y.to_vec());
        let ev = self.connection.eval(&p)?;
        let exp = exp_derivatives(&self.connection, &self.base, y)?;
        let n = self.dimension();
        let q = match self.kind {
            ChartKind::Extended => exp.d2_ey_duu.clone(),
            ChartKind::Standard => {
                let mut q = zeros3(n);
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            q[a][b][c] = (0..n).map(|k| exp.d3_ex_duuu[a][k][b][c] * y[k]).sum();
                        }
                    }
                }
                q
            }
        };
        Ok(SeriesData {
            n: ev.n,
            dn_y: ev.dn_y,
            exp,
            q,
        })
    }

    /// Truncated Taylor evaluation in `x̃` using connection data at
    /// `(x₀, ỹ)`. The y-part is known to second order; `order = 3` adds
    /// the cubic term to the x-part only.
    pub fn series_forward(&self, x_tilde: &[f64], y_tilde: &[f64], order: usize) -> Result<TangentBundlePoint> {
        if !(1..=3).contains(&order) {
            return Err(Error::OrderUnsupported { order, max: 3 });
        }
        let n = self.dimension();
        if x_tilde.len() != n || y_tilde.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x_tilde.len().min(y_tilde.len()),
            });
        }
        let d = self.series_data(y_tilde)?;
        let xt = x_tilde;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for q in 0..n {
            let mut xq = self.base[q] + xt[q];
            let mut yq = y_tilde[q] - (0..n).map(|b| d.n[q][b] * xt[b]).sum::<f64>();
            if order >= 2 {
                for b in 0..n {
                    for c in 0..n {
                        xq += 0.5 * d.exp.d2_ex_duu[q][b][c] * xt[b] * xt[c];
                        yq += 0.5 * d.q[q][b][c] * xt[b] * xt[c];
                    }
                }
            }
            if order >= 3 {
                for b in 0..n {
                    for c in 0..n {
                        for e in 0..n {
                            xq += d.exp.d3_ex_duuu[q][b][c][e] * xt[b] * xt[c] * xt[e] / 6.0;
                        }
                    }
                }
            }
            x.push(xq);
            y.push(yq);
        }
        Ok(TangentBundlePoint::new(x, y))
    }

    /// Second-order inverse series in `Δ = x − x₀` with connection data at
    /// `(x₀, y)`.
    pub fn inverse_series(&self, p: &TangentBundlePoint) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dimension();
        p.check_dimension(n)?;
        let d = self.series_data(&p.y)?;
        let delta: Vec<f64> = p.x.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let s = |q: usize, b: usize, c: usize| -d.exp.d2_ex_duu[q][b][c];
        let mut xt = delta.clone();
        let mut yt = p.y.clone();
        for q in 0..n {
            for b in 0..n {
                yt[q] += d.n[q][b] * delta[b];
                for c in 0..n {
                    let dd = delta[b] * delta[c];
                    xt[q] += 0.5 * s(q, b, c) * dd;
                    let mut coeff = -0.5 * d.q[q][b][c];
                    for m in 0..n {
                        coeff += d.dn_y[q][b][m] * d.n[m][c] + 0.5 * d.n[q][m] * s(m, b, c);
                    }
                    yt[q] += coeff * dd;
                }
            }
        }
        Ok((xt, yt))
    }

    /// Chart coordinates of `p` by damped Newton iteration on the ODE-based
    /// forward map, seeded by the inverse series.
    pub fn from_manifold(&self, p: &TangentBundlePoint) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dimension();
        p.check_dimension(n)?;
        p.check_off_zero_section().map_err(|e| Error::ExcludedSetEntered {
            t: 0.0,
            reason: e.to_string(),
        })?;
        let dist = p.x.iter().zip(&self.base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist > self.radius_hint {
            return Err(Error::OutsideTrustRegion {
                norm: dist,
                radius: self.radius_hint,
            });
        }
        let (xt, yt) = self.inverse_series(p)?;
        let mut z: Vec<f64> = xt.into_iter().chain(yt).collect();
        let target: Vec<f64> = p.x.iter().chain(&p.y).copied().collect();
        let residual = |z: &[f64]| -> Result<(Vec<f64>, f64)> {
            let q = self.to_manifold(&z[..n], &z[n..])?;
            let r: Vec<f64> = q.x.iter().chain(&q.y).zip(&target).map(|(a, b)| a - b).collect();
            let m = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok((r, m))
        };
        let (mut r, mut res) = residual(&z)?;
        let mut iterations = 0;
        while res > self.newton.tolerance {
            if iterations >= self.newton.max_iterations {
                return Err(Error::NewtonDiverged {
                    iterate: z,
                    residual: res,
                    iterations,
                });
            }
            iterations += 1;
            let j = self.jacobian_with(&z[..n], &z[n..], 1e-6, false)?;
            let jm = DMatrix::from_fn(2 * n, 2 * n, |a, b| j[a][b]);
            let step = jm
                .lu()
                .solve(&DVector::from_iterator(2 * n, r.iter().map(|v| -v)))
                .ok_or(Error::SingularJacobian)?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + lambda * b).collect();
                if let Ok((tr, tres)) = residual(&trial) {
                    if tres < res {
                        accepted = Some((trial, tr, tres));
                        break;
                    }
                }
                lambda *= self.newton.damping;
            }
            match accepted {
                Some((zn, rn, resn)) => {
                    z = zn;
                    r = rn;
                    res = resn;
                }
                None => {
                    return Err(Error::NewtonDiverged {
                        iterate: z,
                        residual: res,
                        iterations,
                    })
                }
            }
        }
        let yt = z.split_off(n);
        Ok((z, yt))
    }

    /// Closed-form Jacobian blocks at `x̃ = 0` and their first-order
    /// coefficients.
    pub fn jacobian_series(&self, y_tilde: &[f64]) -> Result<JacobianSeries> {
        let n = self.dimension();
        if y_tilde.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y_tilde.len(),
            });
        }
        let d = self.series_data(y_tilde)?;
        let mut dy_dyt_first = zeros3(n);
        for q in 0..n {
            for b in 0..n {
                for c in 0..n {
                    dy_dyt_first[q][b][c] = -d.dn_y[q][c][b];
                }
            }
        }
        Ok(JacobianSeries {
            dx_dxt: d.exp.d_ex_du.clone(),
            dx_dyt: d.exp.d_ex_dv.clone(),
            dy_dxt: d.exp.d_ey_du.clone(),
            dy_dyt: d.exp.d_ey_dv.clone(),
            dx_dxt_first: d.exp.d2_ex_duu.clone(),
            dx_dyt_first: zeros3(n),
            dy_dxt_first: d.q,
            dy_dyt_first,
        })
    }

    fn jacobian_with(&self, xt: &[f64], yt: &[f64], h: f64, richardson: bool) -> Result<Matrix> {
        let n = self.dimension();
        let steps = if xt.iter().all(|v| *v == 0.0) {
            Self::CENTRE_STEPS
        } else {
            Self::steps_for(xt)
        };
        let z: Vec<f64> = xt.iter().chain(yt).copied().collect();
        let eval = |k: usize, s: f64| -> Result<Vec<f64>> {
            let mut w = z.clone();
            w[k] += s;
            let q = self.map_with(&w[..n], &w[n..], steps)?;
            Ok(q.x.into_iter().chain(q.y).collect())
        };
        let central = |k: usize, s: f64| -> Result<Vec<f64>> {
            let p = eval(k, s)?;
            let m = eval(k, -s)?;
            Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * s)).collect())
        };
        let mut j = vec![vec![0.0; 2 * n]; 2 * n];
        for k in 0..2 * n {
            let col = if richardson {
                let d1 = central(k, h)?;
                let d2 = central(k, 0.5 * h)?;
                d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
            } else {
                central(k, h)?
            };
            for (row, v) in col.into_iter().enumerate() {
                j[row][k] = v;
            }
        }
        Ok(j)
    }

    /// Full `2n × 2n` Jacobian `∂(x, y)/∂(x̃, ỹ)` of the ODE-based map by
    /// Richardson-extrapolated central differences.
    pub fn jacobian(&self, x_tilde: &[f64], y_tilde: &[f64]) -> Result<Matrix> {
        self.check_args(x_tilde, y_tilde)?;
        self.jacobian_with(x_tilde, y_tilde, 1e-3 * norm(x_tilde).max(1.0), true)
    }

    /// `Ñ^q_b(x̃, ỹ)` from the general transformation law of the
    /// connection form, with Jacobians of the ODE-based map:
    ///
    /// ```text
    /// Ñ^q_b = ∂ỹ^q/∂y^a (∂y^a/∂x̃^b + N^a_i ∂x^i/∂x̃^b)
    /// ```
    pub fn connection_in_chart(&self, x_tilde: &[f64], y_tilde: &[f64]) -> Result<Matrix> {
        let n = self.dimension();
        let j = self.jacobian(x_tilde, y_tilde)?;
        let inv = DMatrix::from_fn(2 * n, 2 * n, |a, b| j[a][b])
            .try_inverse()
            .ok_or(Error::SingularJacobian)?;
        let p = self.to_manifold(x_tilde, y_tilde)?;
        let nm = self.connection.nonlinear(&p)?;
        let mut out = vec![vec![0.0; n]; n];
        for q in 0..n {
            for b in 0..n {
                let mut v = 0.0;
                for a in 0..n {
                    let mut inner = j[n + a][b];
                    for i in 0..n {
                        inner += nm[a][i] * j[i][b];
                    }
                    v += inv[(n + q, n + a)] * inner;
                }
                out[q][b] = v;
            }
        }
        Ok(out)
    }

    fn cartan(&self) -> Result<&crate::lagrangian::FinslerLagrangian> {
        self.connection
            .lagrangian()
            .ok_or_else(|| Error::InadmissibleConnection("chart connection is not derived from a Lagrangian".into()))
    }

    /// `L̃(0, ỹ)` with its `x̃`-gradient and Hessian from Richardson central
    /// differences of `L ∘ to_manifold` at steps `1e-2` and `5e-3`.
    pub fn lagrangian_in_chart(&self, y_tilde: &[f64]) -> Result<LagrangianInChart> {
        let l = self.cartan()?;
        let n = self.dimension();
        self.check_args(&vec![0.0; n], y_tilde)?;
        let steps = Self::CENTRE_STEPS;
        // every stencil point, the centre included, goes through the same
        // integration so rounding in the map cancels
        let f = |xt: &[f64]| -> Result<f64> { l.evaluate(&self.integrated(xt, y_tilde, steps)?) };
        let value = l.evaluate(&TangentBundlePoint::new(self.base.clone(), y_tilde.to_vec()))?;
        let (grad_x_tilde, hess_x_tilde) = grad_hess(&f, n, f(&vec![0.0; n])?, 1e-2)?;
        Ok(LagrangianInChart {
            value,
            grad_x_tilde,
            hess_x_tilde,
        })
    }

    /// `R̃^a_bc(0, ỹ) = ½ ∂̃̄_c[g̃^{aq} ∂̃_b∂̃_q L̃] − ½ ∂̃̄_b[g̃^{aq} ∂̃_c∂̃_q L̃]`
    /// with the `x̃`-Hessian from [`Self::lagrangian_in_chart`] and the
    /// `ỹ`-derivatives by Richardson central differences.
    pub fn curvature_in_chart(&self, y_tilde: &[f64]) -> Result<Tensor3> {
        if self.kind != ChartKind::Standard {
            return Err(Error::InadmissibleConnection(
                "chart curvature is defined for standard charts".into(),
            ));
        }
        let l = self.cartan()?;
        let n = self.dimension();
        // M^a_b(ỹ) = g̃^{aq} H_bq
        let m = |y: &[f64]| -> Result<Matrix> {
            let g = l.l_metric(&TangentBundlePoint::new(self.base.clone(), y.to_vec()))?;
            let gi = DMatrix::from_fn(n, n, |a, b| g[a][b])
                .try_inverse()
                .ok_or(Error::SingularJacobian)?;
            let h = self.lagrangian_in_chart(y)?.hess_x_tilde;
            Ok((0..n)
                .map(|a| (0..n).map(|b| (0..n).map(|q| gi[(a, q)] * h[b][q]).sum()).collect())
                .collect())
        };
        let step = 1e-2 * norm(y_tilde).max(1.0);
        // dm[c][a][b] = ∂̄_c M^a_b
        let mut dm = vec![vec![vec![0.0; n]; n]; n];
        for (c, slot) in dm.iter_mut().enumerate() {
            let central = |s: f64| -> Result<Matrix> {
                let mut yp = y_tilde.to_vec();
                let mut ym = y_tilde.to_vec();
                yp[c] += s;
                ym[c] -= s;
                let (a, b) = (m(&yp)?, m(&ym)?);
                Ok((0..n)
                    .map(|i| (0..n).map(|k| (a[i][k] - b[i][k]) / (2.0 * s)).collect())
                    .collect())
            };
            let d1 = central(step)?;
            let d2 = central(0.5 * step)?;
            for a in 0..n {
                for b in 0..n {
                    slot[a][b] = (4.0 * d2[a][b] - d1[a][b]) / 3.0;
                }
            }
        }
        let mut r = zeros3(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    r[a][b][c] = 0.5 * dm[c][a][b] - 0.5 * dm[b][a][c];
                }
            }
        }
        Ok(r)
    }

    /// Forward evaluation with round-trip and series residuals.
    pub fn record(&self, x_tilde: &[f64], y_tilde: &[f64]) -> Result<ChartRecord> {
        let p = self.to_manifold(x_tilde, y_tilde)?;
        let (xt, yt) = self.from_manifold(&p)?;
        let back = self.to_manifold(&xt, &yt)?;
        let series = self.series_forward(x_tilde, y_tilde, 3)?;
        Ok(ChartRecord {
            kind: self.kind,
            base: self.base.clone(),
            x_tilde: x_tilde.to_vec(),
            y_tilde: y_tilde.to_vec(),
            x: p.x.clone(),
            y: p.y.clone(),
            residuals: ChartResiduals {
                round_trip: back.max_abs_diff(&p),
                series_gap: series.max_abs_diff(&p),
            },
        })
    }

    /// CSV grid `xt1..xtn, yt1..ytn, x1..xn, y1..yn` over the given chart
    /// points.
    pub fn grid_csv(&self, points: &[(Vec<f64>, Vec<f64>)]) -> Result<String> {
        let n = self.dimension();
        let mut out = String::new();
        let names = ["xt", "yt", "x", "y"];
        let header: Vec<String> = names
            .iter()
            .flat_map(|s| (1..=n).map(move |a| format!("{s}{a}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (xt, yt) in points {
            let p = self.to_manifold(xt, yt)?;
            let row: Vec<String> = xt.iter().chain(yt).chain(&p.x).chain(&p.y).map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        Ok(out)
    }
}

/// Richardson-extrapolated central-difference gradient and Hessian of `f`
/// at the origin, steps `h` and `h/2`.
pub(crate) fn grad_hess<F>(f: &F, n: usize, f0: f64, h: f64) -> Result<(Vec<f64>, Matrix)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let at = |pairs: &[(usize, f64)]| -> Result<f64> {
        let mut x = vec![0.0; n];
        for &(i, v) in pairs {
            x[i] += v;
        }
        f(&x)
    };
    let once = |s: f64| -> Result<(Vec<f64>, Matrix)> {
        let mut g = vec![0.0; n];
        let mut hm = vec![vec![0.0; n]; n];
        for a in 0..n {
            let fp = at(&[(a, s)])?;
            let fm = at(&[(a, -s)])?;
            g[a] = (fp - fm) / (2.0 * s);
            hm[a][a] = (fp - 2.0 * f0 + fm) / (s * s);
            for b in 0..a {
                let v = (at(&[(a, s), (b, s)])? - at(&[(a, s), (b, -s)])? - at(&[(a, -s), (b, s)])?
                    + at(&[(a, -s), (b, -s)])?)
                    / (4.0 * s * s);
                hm[a][b] = v;
                hm[b][a] = v;
            }
        }
        Ok((g, hm))
    };
    let (g1, h1) = once(h)?;
    let (g2, h2) = once(0.5 * h)?;
    let g = g1.iter().zip(&g2).map(|(a, b)| (4.0 * b - a) / 3.0).collect();
    let hm = h1
        .iter()
        .zip(&h2)
        .map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| (4.0 * b - a) / 3.0).collect())
        .collect();
    Ok((g, hm))
}
