//! Autoparallels of a nonlinear connection, horizontal autoparallels of the
//! Berwald linear connection and the tangent bundle exponential map.
//!
//! Autoparallels solve `ẍ^a + N^a_b(x, ẋ) ẋ^b = 0`. Horizontal Berwald
//! autoparallels carry an independent fibre curve `y(t)`:
//!
//! ```text
//! ẍ^a = −∂̄_c N^a_b(x, y) ẋ^b ẋ^c
//! ẏ^a = −N^a_b(x, y) ẋ^b
//! ```
//!
//! `EXP_p(U, V)` is the time-one point of the latter with `x(0) = p`,
//! `ẋ(0) = U`, `y(0) = V`.

use serde::{Deserialize, Serialize};

use crate::connection::{zeros3, zeros4, GeneralConnection, Tensor3, Tensor4};
use crate::error::{Error, Result};
use crate::lagrangian::Matrix;
use crate::point::TangentBundlePoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepControl {
    /// Embedded error control with the configured tolerances.
    Adaptive,
    /// A fixed number of equal steps. The discrete flow is then a smooth
    /// function of the initial data, which finite-difference stencils need.
    Fixed { steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub step_control: StepControl,
    pub max_steps: usize,
    /// Number of uniform dense-output samples; 0 records accepted steps.
    pub output_points: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            step_control: StepControl::Adaptive,
            max_steps: 200_000,
            output_points: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn fixed(steps: usize) -> Self {
        Self {
            step_control: StepControl::Fixed { steps },
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidModel("integrator tolerances must be positive".into()));
        }
        if let StepControl::Fixed { steps } = self.step_control {
            if steps == 0 {
                return Err(Error::InvalidModel("fixed step count must be positive".into()));
            }
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

impl Segment {
    fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h > 0.0 {
            (self.t0, self.t0 + self.h)
        } else {
            (self.t0 + self.h, self.t0)
        };
        t >= a && t <= b
    }

    fn state(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }

    fn derivative(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let [_, r2, r3, r4, r5] = &self.rcont;
        (0..r2.len())
            .map(|i| {
                (r2[i]
                    + (1.0 - 2.0 * th) * r3[i]
                    + th * (2.0 - 3.0 * th) * r4[i]
                    + 2.0 * th * (1.0 - th) * (1.0 - 2.0 * th) * r5[i])
                    / self.h
            })
            .collect()
    }
}

struct Solution {
    segments: Vec<Segment>,
    nodes: Vec<(f64, Vec<f64>)>,
    accepted: usize,
    rejected: usize,
    evaluations: usize,
    max_error: f64,
}

fn is_excluded(e: &Error) -> bool {
    matches!(e, Error::NearDegenerateMetric { .. } | Error::NearZeroDirection { .. })
}

fn excluded(t: f64, e: Error) -> Error {
    if is_excluded(&e) {
        Error::ExcludedSetEntered {
            t,
            reason: e.to_string(),
        }
    } else {
        e
    }
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for i in 0..out.len() {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

fn integrate<F>(mut f: F, t0: f64, y0: Vec<f64>, t_end: f64, cfg: &IntegratorConfig) -> Result<Solution>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    if !t_end.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidModel("integration interval must be finite".into()));
    }
    let dim = y0.len();
    let mut evaluations = 0usize;
    let mut eval = |t: f64, y: &[f64], evaluations: &mut usize| -> Result<Vec<f64>> {
        *evaluations += 1;
        let k = f(t, y)?;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField);
        }
        Ok(k)
    };
    let mut sol = Solution {
        segments: Vec::new(),
        nodes: vec![(t0, y0.clone())],
        accepted: 0,
        rejected: 0,
        evaluations: 0,
        max_error: 0.0,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let span = t_end - t0;
    let dir = span.signum();
    let scale = |a: &[f64], b: &[f64], i: usize| cfg.atol + cfg.rtol * a[i].abs().max(b[i].abs());

    let mut t = t0;
    let mut y = y0;
    let mut k1 = eval(t, &y, &mut evaluations).map_err(|e| excluded(t, e))?;

    let fixed = match cfg.step_control {
        StepControl::Fixed { steps } => Some(steps),
        StepControl::Adaptive => None,
    };
    let mut h = match fixed {
        Some(steps) => span / steps as f64,
        None => {
            // starting step after Hairer, Nørsett and Wanner
            let norm = |v: &[f64], w: &[f64]| {
                (v.iter()
                    .enumerate()
                    .map(|(i, vi)| (vi / scale(w, w, i)).powi(2))
                    .sum::<f64>()
                    / dim as f64)
                    .sqrt()
            };
            let d0 = norm(&y, &y);
            let d1 = norm(&k1, &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span.abs());
            let y1 = axpy(&y, dir * h0, &[(1.0, &k1)]);
            let h1 = match eval(t + dir * h0, &y1, &mut evaluations) {
                Ok(k) => {
                    let diff: Vec<f64> = k.iter().zip(&k1).map(|(a, b)| (a - b) / h0).collect();
                    let d2 = norm(&diff, &y);
                    if d1.max(d2) <= 1e-15 {
                        (h0 * 1e-3).max(1e-6)
                    } else {
                        (0.01 / d1.max(d2)).powf(0.2)
                    }
                }
                Err(_) => h0,
            };
            dir * (100.0 * h0).min(h1).min(span.abs())
        }
    };

    let mut step_index = 0usize;
    let mut last_rejected = false;
    loop {
        if sol.accepted + sol.rejected >= cfg.max_steps {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let mut last = false;
        if let Some(steps) = fixed {
            if step_index + 1 == steps {
                h = t_end - t;
                last = true;
            }
        } else if (t + 1.01 * h - t_end) * dir >= 0.0 {
            h = t_end - t;
            last = true;
        }
        if h.abs() <= 1e-14 * t.abs().max(span.abs()) {
            return Err(Error::StepSizeUnderflow { t, h });
        }

        let stages = (|| -> Result<_> {
            let k2 = eval(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]), &mut evaluations)?;
            let k3 = eval(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]), &mut evaluations)?;
            let k4 = eval(
                t + C4 * h,
                &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
                &mut evaluations,
            )?;
            let k5 = eval(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                &mut evaluations,
            )?;
            let k6 = eval(
                t + h,
                &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
                &mut evaluations,
            )?;
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = eval(t + h, &y1, &mut evaluations)?;
            Ok((k2, k3, k4, k5, k6, k7, y1))
        })();

        let (k2, k3, k4, k5, k6, k7, y1) = match stages {
            Ok(v) => v,
            Err(e) => {
                if fixed.is_some() || !is_excluded(&e) {
                    return Err(excluded(t, e));
                }
                // a trial stage left the admissible region; retry smaller
                sol.rejected += 1;
                h *= 0.25;
                if h.abs() <= 1e-10 * span.abs() {
                    return Err(excluded(t, e));
                }
                last_rejected = true;
                continue;
            }
        };
        let _ = &k2;

        let mut err = 0.0;
        for i in 0..dim {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / scale(&y, &y1, i)).powi(2);
        }
        let err = (err / dim as f64).sqrt();

        if fixed.is_none() && err > 1.0 {
            sol.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            last_rejected = true;
            continue;
        }

        sol.max_error = sol.max_error.max(err);
        let ydiff: Vec<f64> = (0..dim).map(|i| y1[i] - y[i]).collect();
        let bspl: Vec<f64> = (0..dim).map(|i| h * k1[i] - ydiff[i]).collect();
        let r4: Vec<f64> = (0..dim).map(|i| ydiff[i] - h * k7[i] - bspl[i]).collect();
        let r5: Vec<f64> = (0..dim)
            .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
            .collect();
        sol.segments.push(Segment {
            t0: t,
            h,
            rcont: [y.clone(), ydiff, bspl, r4, r5],
        });
        sol.accepted += 1;
        step_index += 1;
        t = if last { t_end } else { t + h };
        y = y1;
        k1 = k7;
        sol.nodes.push((t, y.clone()));
        if last {
            break;
        }
        if fixed.is_none() {
            let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        }
    }
    sol.evaluations = evaluations;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    /// Canonical lift `(x(t), ẋ(t))` of an autoparallel.
    Autoparallel,
    /// `(x(t), y(t))` of a horizontal Berwald autoparallel.
    HorizontalAutoparallel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub point: TangentBundlePoint,
    /// `ẋ(t)`
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntegratorDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Largest accepted scaled local error estimate.
    pub max_local_error: f64,
    /// Largest `|ẏ + N(x, y) ẋ| / (1 + |N ẋ|)` over the output samples, with
    /// derivatives from the continuous extension (horizontal autoparallels
    /// only).
    pub max_horizontality_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub dimension: usize,
    pub samples: Vec<TrajectorySample>,
    pub diagnostics: IntegratorDiagnostics,
    #[serde(skip)]
    segments: Vec<Segment>,
}

impl Trajectory {
    fn split(&self, z: &[f64]) -> TrajectorySample {
        let n = self.dimension;
        let x = z[..n].to_vec();
        let v = z[n..2 * n].to_vec();
        let point = match self.kind {
            TrajectoryKind::Autoparallel => TangentBundlePoint::new(x, v.clone()),
            TrajectoryKind::HorizontalAutoparallel => TangentBundlePoint::new(x, z[2 * n..].to_vec()),
        };
        TrajectorySample {
            t: 0.0,
            point,
            velocity: v,
        }
    }

    pub fn final_sample(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Dense-output evaluation at any `t` inside the integrated interval.
    pub fn sample_at(&self, t: f64) -> Option<TrajectorySample> {
        if self.segments.is_empty() {
            let s = &self.samples[0];
            return (t == s.t).then(|| s.clone());
        }
        let tol = 1e-12 * t.abs().max(1.0);
        let seg = match self.segments.iter().find(|s| s.contains(t)) {
            Some(seg) => seg,
            None => {
                let end = self.final_sample();
                return ((t - end.t).abs() <= tol).then(|| end.clone());
            }
        };
        let mut s = self.split(&seg.state(t));
        s.t = t;
        Some(s)
    }

    /// CSV with header `t,x1..xn,y1..yn`.
    pub fn to_csv(&self) -> String {
        let n = self.dimension;
        let mut out = String::from("t");
        for a in 1..=n {
            out.push_str(&format!(",x{a}"));
        }
        for a in 1..=n {
            out.push_str(&format!(",y{a}"));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{:?}", s.t));
            for v in s.point.x.iter().chain(&s.point.y) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

fn build_trajectory(
    kind: TrajectoryKind,
    n: usize,
    sol: Solution,
    cfg: &IntegratorConfig,
    t0: f64,
    t_end: f64,
) -> Trajectory {
    let mut traj = Trajectory {
        kind,
        dimension: n,
        samples: Vec::new(),
        diagnostics: IntegratorDiagnostics {
            accepted_steps: sol.accepted,
            rejected_steps: sol.rejected,
            rhs_evaluations: sol.evaluations,
            max_local_error: sol.max_error,
            max_horizontality_residual: None,
        },
        segments: sol.segments,
    };
    if cfg.output_points > 0 && t_end != t0 {
        let m = cfg.output_points;
        for k in 0..=m {
            let t = if k == m {
                t_end
            } else {
                t0 + (t_end - t0) * k as f64 / m as f64
            };
            let sample = if k == 0 {
                let mut s = traj.split(&sol.nodes[0].1);
                s.t = t0;
                s
            } else if k == m {
                let mut s = traj.split(&sol.nodes.last().unwrap().1);
                s.t = t_end;
                s
            } else {
                traj.sample_at(t).expect("grid point inside the interval")
            };
            traj.samples.push(sample);
        }
    } else {
        for (t, z) in &sol.nodes {
            let mut s = traj.split(z);
            s.t = *t;
            traj.samples.push(s);
        }
    }
    traj
}

fn check_seed(c: &GeneralConnection, x0: &[f64], v: &[f64]) -> Result<()> {
    let n = c.dimension();
    for w in [x0, v] {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
    }
    let p = TangentBundlePoint::new(x0.to_vec(), v.to_vec());
    c.nonlinear(&p).map_err(|e| excluded(0.0, e))?;
    Ok(())
}

/// Autoparallel `ẍ + N(x, ẋ) ẋ = 0` with `x(0) = x0`, `ẋ(0) = u`.
pub fn integrate_autoparallel(
    c: &GeneralConnection,
    x0: &[f64],
    u: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_seed(c, x0, u)?;
    let n = c.dimension();
    let z0: Vec<f64> = x0.iter().chain(u).copied().collect();
    let rhs = |_t: f64, z: &[f64]| -> Result<Vec<f64>> {
        let p = TangentBundlePoint::new(z[..n].to_vec(), z[n..].to_vec());
        let nm = c.nonlinear(&p)?;
        let mut out = z[n..].to_vec();
        for a in 0..n {
            out.push(-(0..n).map(|b| nm[a][b] * z[n + b]).sum::<f64>());
        }
        Ok(out)
    };
    let sol = integrate(rhs, 0.0, z0, t_end, cfg)?;
    Ok(build_trajectory(TrajectoryKind::Autoparallel, n, sol, cfg, 0.0, t_end))
}

fn horizontal_rhs(c: &GeneralConnection, z: &[f64]) -> Result<Vec<f64>> {
    let n = c.dimension();
    let p = TangentBundlePoint::new(z[..n].to_vec(), z[2 * n..].to_vec());
    let (nm, dy) = c.spray_data(&p)?;
    let u = &z[n..2 * n];
    let mut out = u.to_vec();
    for a in 0..n {
        let mut acc = 0.0;
        for b in 0..n {
            for k in 0..n {
                acc += dy[a][b][k] * u[b] * u[k];
            }
        }
        out.push(-acc);
    }
    for a in 0..n {
        out.push(-(0..n).map(|b| nm[a][b] * u[b]).sum::<f64>());
    }
    Ok(out)
}

/// Horizontal Berwald autoparallel with `x(0) = x0`, `ẋ(0) = u`, `y(0) = v`.
pub fn integrate_horizontal_autoparallel(
    c: &GeneralConnection,
    x0: &[f64],
    u: &[f64],
    v: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_seed(c, x0, v)?;
    if u.len() != c.dimension() {
        return Err(Error::DimensionMismatch {
            expected: c.dimension(),
            got: u.len(),
        });
    }
    let n = c.dimension();
    let z0: Vec<f64> = x0.iter().chain(u).chain(v).copied().collect();
    let sol = integrate(|_t, z| horizontal_rhs(c, z), 0.0, z0, t_end, cfg)?;
    let mut traj = build_trajectory(TrajectoryKind::HorizontalAutoparallel, n, sol, cfg, 0.0, t_end);

    let mut worst: f64 = 0.0;
    for sample in &traj.samples {
        let tm = sample.t;
        let seg = match traj.segments.iter().find(|s| s.contains(tm)).or(traj.segments.last()) {
            Some(seg) => seg,
            None => break,
        };
        let z = seg.state(tm);
        let dz = seg.derivative(tm);
        let p = TangentBundlePoint::new(z[..n].to_vec(), z[2 * n..].to_vec());
        let nm = c.nonlinear(&p).map_err(|e| excluded(tm, e))?;
        let xdot = &dz[..n];
        let mut res: f64 = 0.0;
        let mut mag: f64 = 0.0;
        for a in 0..n {
            let nx: f64 = (0..n).map(|b| nm[a][b] * xdot[b]).sum();
            res = res.max((dz[2 * n + a] + nx).abs());
            mag = mag.max(nx.abs());
        }
        worst = worst.max(res / (1.0 + mag));
    }
    traj.diagnostics.max_horizontality_residual = Some(worst);
    Ok(traj)
}

/// Seed of the tangent bundle exponential map at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpInput {
    pub base: Vec<f64>,
    /// Velocity seed.
    pub u: Vec<f64>,
    /// Fibre seed; must avoid the excluded set.
    pub v: Vec<f64>,
}

/// `EXP_p(U, V)`: the time-one point of the horizontal Berwald
/// autoparallel.
pub fn exp_map(c: &GeneralConnection, input: &ExpInput, cfg: &IntegratorConfig) -> Result<TangentBundlePoint> {
    let traj = integrate_horizontal_autoparallel(c, &input.base, &input.u, &input.v, 1.0, cfg)?;
    Ok(traj.final_sample().point.clone())
}

/// `EXP_p(U, V)` together with the directional derivative
/// `∂E_x/∂U^p W^p`, obtained by integrating the variational equations
/// alongside the flow. With a fixed step count the result is the exact
/// derivative of the discrete map.
pub fn exp_map_tangent(
    c: &GeneralConnection,
    input: &ExpInput,
    w: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(TangentBundlePoint, Vec<f64>)> {
    check_seed(c, &input.base, &input.v)?;
    let n = c.dimension();
    for v in [&input.u[..], w] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
    }
    // state (x, u, y, δx, δu, δy)
    let z0: Vec<f64> = input
        .base
        .iter()
        .chain(&input.u)
        .chain(&input.v)
        .copied()
        .chain(std::iter::repeat(0.0).take(n))
        .chain(w.iter().copied())
        .chain(std::iter::repeat(0.0).take(n))
        .collect();
    let rhs = |_t: f64, z: &[f64]| -> Result<Vec<f64>> {
        let p = TangentBundlePoint::new(z[..n].to_vec(), z[2 * n..3 * n].to_vec());
        let so = c.second_order(&p)?;
        let u = &z[n..2 * n];
        let (dx, du, dy) = (&z[3 * n..4 * n], &z[4 * n..5 * n], &z[5 * n..]);
        let mut out = vec![0.0; 6 * n];
        out[..n].copy_from_slice(u);
        out[3 * n..4 * n].copy_from_slice(du);
        for a in 0..n {
            let mut acc = 0.0;
            let mut dacc = 0.0;
            let mut yv = 0.0;
            let mut dyv = 0.0;
            for b in 0..n {
                yv += so.n[a][b] * u[b];
                let mut dn = so.n[a][b] * du[b];
                for e in 0..n {
                    dn += (so.dn_x[a][b][e] * dx[e] + so.dn_y[a][b][e] * dy[e]) * u[b];
                }
                dyv += dn;
                for k in 0..n {
                    let d = so.dn_y[a][b][k];
                    acc += d * u[b] * u[k];
                    let mut dd = 0.0;
                    for e in 0..n {
                        dd += so.dn_yx[a][b][k][e] * dx[e] + so.dn_yy[a][b][k][e] * dy[e];
                    }
                    dacc += dd * u[b] * u[k] + d * (du[b] * u[k] + u[b] * du[k]);
                }
            }
            out[n + a] = -acc;
            out[2 * n + a] = -yv;
            out[4 * n + a] = -dacc;
            out[5 * n + a] = -dyv;
        }
        Ok(out)
    };
    let sol = integrate(rhs, 0.0, z0, 1.0, cfg)?;
    let z = &sol.nodes.last().expect("at least one node").1;
    Ok((
        TangentBundlePoint::new(z[..n].to_vec(), z[2 * n..3 * n].to_vec()),
        z[3 * n..4 * n].to_vec(),
    ))
}

/// Derivative blocks of `EXP_p` at `(0, V)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpDerivatives {
    #[serde(rename = "dEx_du")]
    pub d_ex_du: Matrix,
    #[serde(rename = "dEy_du")]
    pub d_ey_du: Matrix,
    #[serde(rename = "dEx_dv")]
    pub d_ex_dv: Matrix,
    #[serde(rename = "dEy_dv")]
    pub d_ey_dv: Matrix,
    /// `[q][b][c]`
    #[serde(rename = "d2Ex_duu")]
    pub d2_ex_duu: Tensor3,
    /// `[q][b][c]`
    #[serde(rename = "d2Ey_duu")]
    pub d2_ey_duu: Tensor3,
    /// `[q][b][c][d]`
    #[serde(rename = "d3Ex_duuu")]
    pub d3_ex_duuu: Tensor4,
}

impl ExpDerivatives {
    /// Determinant of the first-derivative block matrix
    /// `[[dEx_du, dEx_dv], [dEy_du, dEy_dv]]`.
    pub fn jacobian_determinant(&self) -> f64 {
        let n = self.d_ex_du.len();
        let m = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.d_ex_du[i][j],
            (true, false) => self.d_ex_dv[i][j - n],
            (false, true) => self.d_ey_du[i - n][j],
            (false, false) => self.d_ey_dv[i - n][j - n],
        });
        m.determinant()
    }
}

/// Closed-form derivatives of `EXP_p` at `(0, V)`:
///
/// ```text
/// ∂Ex/∂U = 1, ∂Ey/∂U = −N, ∂Ex/∂V = 0, ∂Ey/∂V = 1
/// ∂²Ex/∂U^b∂U^c = −S^q_bc,            S^q_bc = ∂̄_(c N^q_b)
/// ∂²Ey/∂U^b∂U^c = −δ_(c N^q_b) + N^q_a S^a_bc
/// ∂³Ex/∂U^b∂U^c∂U^d = sym_bcd(−δ_d S^q_bc + 2 S^q_rc S^r_bd)
/// ```
pub fn exp_derivatives(c: &GeneralConnection, base: &[f64], v: &[f64]) -> Result<ExpDerivatives> {
    let n = c.dimension();
    let p = TangentBundlePoint::new(base.to_vec(), v.to_vec());
    p.check_dimension(n)?;
    let so = c.second_order(&p)?;
    let identity: Matrix = (0..n)
        .map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut s = zeros3(n);
    let mut delta = zeros3(n);
    for q in 0..n {
        for b in 0..n {
            for k in 0..n {
                s[q][b][k] = 0.5 * (so.dn_y[q][b][k] + so.dn_y[q][k][b]);
                let mut dv = so.dn_x[q][b][k];
                for m in 0..n {
                    dv -= so.n[m][k] * so.dn_y[q][b][m];
                }
                delta[q][b][k] = dv;
            }
        }
    }

    let mut d2x = zeros3(n);
    let mut d2y = zeros3(n);
    for q in 0..n {
        for b in 0..n {
            for k in 0..n {
                d2x[q][b][k] = -s[q][b][k];
                let mut v = -0.5 * (delta[q][b][k] + delta[q][k][b]);
                for a in 0..n {
                    v += so.n[q][a] * s[a][b][k];
                }
                d2y[q][b][k] = v;
            }
        }
    }

    // T[q][b][c][d] = −δ_d S^q_bc + 2 S^q_rc S^r_bd
    let mut t = zeros4(n);
    for q in 0..n {
        for b in 0..n {
            for k in 0..n {
                for d in 0..n {
                    let ds_x = 0.5 * (so.dn_yx[q][b][k][d] + so.dn_yx[q][k][b][d]);
                    let mut delta_s = ds_x;
                    for m in 0..n {
                        let ds_y = 0.5 * (so.dn_yy[q][b][k][m] + so.dn_yy[q][k][b][m]);
                        delta_s -= so.n[m][d] * ds_y;
                    }
                    let mut quad = 0.0;
                    for r in 0..n {
                        quad += s[q][r][k] * s[r][b][d];
                    }
                    t[q][b][k][d] = -delta_s + 2.0 * quad;
                }
            }
        }
    }
    let mut d3x = zeros4(n);
    for q in 0..n {
        for b in 0..n {
            for k in 0..n {
                for d in 0..n {
                    let tq = &t[q];
                    d3x[q][b][k][d] = (tq[b][k][d]
                        + tq[b][d][k]
                        + tq[k][b][d]
                        + tq[k][d][b]
                        + tq[d][b][k]
                        + tq[d][k][b])
                        / 6.0;
                }
            }
        }
    }

    Ok(ExpDerivatives {
        d_ex_du: identity.clone(),
        d_ey_du: so.n.iter().map(|row| row.iter().map(|v| -v).collect()).collect(),
        d_ex_dv: vec![vec![0.0; n]; n],
        d_ey_dv: identity,
        d2_ex_duu: d2x,
        d2_ey_duu: d2y,
        d3_ex_duuu: d3x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::builtin;
    use std::f64::consts::{FRAC_PI_4, SQRT_2};

    fn cartan(name: &str) -> GeneralConnection {
        GeneralConnection::cartan(builtin(name).unwrap().lagrangian)
    }

    #[test]
    fn exponential_growth_matches_closed_form() {
        let cfg = IntegratorConfig::default();
        let sol = integrate(|_t, y| Ok(vec![y[0], -2.0 * y[1]]), 0.0, vec![1.0, 1.0], 2.0, &cfg).unwrap();
        let (t, y) = sol.nodes.last().unwrap();
        assert_eq!(*t, 2.0);
        assert!((y[0] - 2f64.exp()).abs() < 1e-9 * 2f64.exp());
        assert!((y[1] - (-4f64).exp()).abs() < 1e-11);
        // dense output in the interior
        let seg = &sol.segments[sol.segments.len() / 2];
        let tm = seg.t0 + 0.37 * seg.h;
        let ym = seg.state(tm);
        assert!((ym[0] - tm.exp()).abs() < 1e-8 * tm.exp());
        let dm = seg.derivative(tm);
        assert!((dm[0] - tm.exp()).abs() < 1e-6 * tm.exp());
    }

    #[test]
    fn backward_and_fixed_integration() {
        let sol = integrate(|_t, y| Ok(vec![y[0]]), 0.0, vec![1.0], -1.0, &IntegratorConfig::default()).unwrap();
        assert!((sol.nodes.last().unwrap().1[0] - (-1f64).exp()).abs() < 1e-10);
        let sol = integrate(|_t, y| Ok(vec![y[0]]), 0.0, vec![1.0], 1.0, &IntegratorConfig::fixed(50)).unwrap();
        assert_eq!(sol.accepted, 50);
        assert_eq!(sol.nodes.last().unwrap().0, 1.0);
        assert!((sol.nodes.last().unwrap().1[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn flat_autoparallel_is_a_straight_line() {
        let c = cartan("flat4d");
        let traj = integrate_autoparallel(&c, &[0.0; 4], &[1.0, 2.0, 0.0, 0.0], 3.0, &IntegratorConfig::default())
            .unwrap();
        for s in &traj.samples {
            assert!((s.point.x[0] - s.t).abs() < 1e-12);
            assert!((s.point.x[1] - 2.0 * s.t).abs() < 1e-12);
        }
        let h = integrate_horizontal_autoparallel(
            &c,
            &[0.0; 4],
            &[1.0, 0.5, 0.0, -1.0],
            &[1.0, 0.0, 2.0, 0.0],
            1.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let last = &h.final_sample().point;
        assert_eq!(last.y, vec![1.0, 0.0, 2.0, 0.0]);
        assert!((last.x[3] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn polar_autoparallel_follows_cartesian_line() {
        let c = cartan("polar2d");
        let traj =
            integrate_autoparallel(&c, &[1.0, 0.0], &[0.0, 1.0], 1.0, &IntegratorConfig::default()).unwrap();
        let end = &traj.final_sample().point;
        assert!((end.x[0] - SQRT_2).abs() < 1e-8);
        assert!((end.x[1] - FRAC_PI_4).abs() < 1e-8);
        let l = c.lagrangian().unwrap();
        let l0 = l.evaluate(&traj.samples[0].point).unwrap();
        for s in &traj.samples {
            let v = l.evaluate(&s.point).unwrap();
            assert!((v - l0).abs() <= 1e-9 * l0);
        }
    }

    #[test]
    fn polar_exponential_map_oracle() {
        let c = cartan("polar2d");
        let input = ExpInput {
            base: vec![1.0, 0.0],
            u: vec![0.0, 1.0],
            v: vec![0.0, 1.0],
        };
        let p = exp_map(&c, &input, &IntegratorConfig::default()).unwrap();
        // Cartesian: x(t) = (1, t), y = (0, 1) constant; in polar at r = √2, θ = π/4
        let want = [SQRT_2, FRAC_PI_4, SQRT_2 / 2.0, 0.5];
        let got = [p.x[0], p.x[1], p.y[0], p.y[1]];
        for k in 0..4 {
            assert!((got[k] - want[k]).abs() < 1e-8, "{got:?}");
        }
    }

    #[test]
    fn exp_at_zero_velocity_is_identity_on_fibre() {
        let c = cartan("sphere2d");
        let input = ExpInput {
            base: vec![1.0, 0.3],
            u: vec![0.0, 0.0],
            v: vec![0.4, -1.1],
        };
        let p = exp_map(&c, &input, &IntegratorConfig::default()).unwrap();
        assert_eq!(p.x, input.base);
        assert!(p.max_abs_diff(&TangentBundlePoint::new(input.base.clone(), input.v.clone())) <= 1e-12);
    }

    #[test]
    fn horizontal_lift_of_geodesic_and_residual() {
        let c = cartan("randers2d");
        let cfg = IntegratorConfig::default();
        let u = [0.6, -0.4];
        let geo = integrate_autoparallel(&c, &[0.1, 0.0], &u, 1.5, &cfg).unwrap();
        let hor = integrate_horizontal_autoparallel(&c, &[0.1, 0.0], &u, &u, 1.5, &cfg).unwrap();
        for t in [0.3, 0.9, 1.5] {
            let a = geo.sample_at(t).unwrap().point;
            let b = hor.sample_at(t).unwrap().point;
            assert!(a.max_abs_diff(&b) < 1e-9, "t = {t}");
        }
        assert!(hor.diagnostics.max_horizontality_residual.unwrap() < 1e-8);
    }

    #[test]
    fn polar_derivative_blocks() {
        let c = cartan("polar2d");
        let d = exp_derivatives(&c, &[2.0, 0.0], &[1.0, 1.0]).unwrap();
        let want = [[0.0, 2.0], [-0.5, -0.5]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((d.d_ey_du[a][b] - want[a][b]).abs() < 1e-14);
                assert_eq!(d.d_ex_du[a][b], if a == b { 1.0 } else { 0.0 });
                assert_eq!(d.d_ex_dv[a][b], 0.0);
            }
        }
        assert!((d.jacobian_determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn excluded_seed_is_reported() {
        let c = cartan("sphere2d");
        let err = integrate_horizontal_autoparallel(
            &c,
            &[1.0, 0.0],
            &[1.0, 0.0],
            &[0.0, 0.0],
            1.0,
            &IntegratorConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ExcludedSetEntered { .. }));
    }

    #[test]
    fn csv_layout() {
        let c = cartan("polar2d");
        let cfg = IntegratorConfig {
            output_points: 4,
            ..IntegratorConfig::default()
        };
        let traj = integrate_autoparallel(&c, &[1.0, 0.0], &[0.0, 1.0], 1.0, &cfg).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,y1,y2");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("1.0,"));
    }
}
