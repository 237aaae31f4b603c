//! Mixed partial derivatives of scalar fields on the tangent bundle.
//!
//! Fields are evaluated on truncated multivariate Taylor polynomials
//! ([`Taylor`]) over the `2n` coordinates `(x¹..xⁿ, y¹..yⁿ)`. Every
//! arithmetic operation and elementary function propagates all
//! coefficients up to the truncation order, so the result carries every
//! mixed partial derivative of the field exactly up to roundoff.
//!
//! Coefficients are stored in normalized form `c_α = ∂^α f / α!`. The
//! monomial basis is graded by total degree, so truncating to a lower
//! order is a prefix of the coefficient vector.
//!
//! A [`JetSpace`] may additionally cap the total degree in the `x`
//! variables. Connection coefficients need many fibre derivatives but only
//! one or two base derivatives, and the cap keeps the basis small.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::point::TangentBundlePoint;

/// Highest order accepted by [`eval_jet`].
pub const MAX_JET_ORDER: usize = 4;

/// Highest order the engine itself supports. Third derivatives of the
/// exponential map need second derivatives of the connection, which is
/// five derivatives of the Lagrangian.
pub(crate) const ENGINE_MAX_ORDER: usize = 6;

/// Coordinate selector for partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// `∂_a = ∂/∂x^a`
    X(usize),
    /// `∂̄_a = ∂/∂y^a`
    Y(usize),
}

impl Var {
    fn slot(self, n: usize) -> usize {
        match self {
            Var::X(a) => a,
            Var::Y(a) => n + a,
        }
    }
}

/// Monomial basis and multiplication tables for truncated Taylor
/// polynomials in `2n` variables.
pub struct JetSpace {
    n: usize,
    order: usize,
    max_x_order: usize,
    exponents: Vec<Vec<u8>>,
    /// `prefix[d]` is the number of monomials of total degree `<= d`.
    prefix: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    /// `(i, j, k)` with `m_i * m_j = m_k`, sorted by the degree of `m_k`.
    products: Vec<(u32, u32, u32)>,
    /// `product_prefix[d]` counts the triples whose output degree is `<= d`.
    product_prefix: Vec<usize>,
    /// Per variable: `(src, dst, factor)` with `∂ m_src = factor * m_dst`.
    derivatives: Vec<Vec<(u32, u32, f64)>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("n", &self.n)
            .field("order", &self.order)
            .field("max_x_order", &self.max_x_order)
            .field("monomials", &self.exponents.len())
            .finish()
    }
}

type SpaceKey = (usize, usize, usize);

fn space_cache() -> &'static Mutex<HashMap<SpaceKey, Arc<JetSpace>>> {
    static CACHE: OnceLock<Mutex<HashMap<SpaceKey, Arc<JetSpace>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl JetSpace {
    /// Shared space for dimension `n`, total order `order` and at most
    /// `max_x_order` derivatives in the base coordinates.
    pub fn get(n: usize, order: usize, max_x_order: usize) -> Arc<JetSpace> {
        let max_x_order = max_x_order.min(order);
        let key = (n, order, max_x_order);
        let mut cache = space_cache().lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(JetSpace::build(n, order, max_x_order)))
            .clone()
    }

    fn build(n: usize, order: usize, max_x_order: usize) -> JetSpace {
        assert!(order <= ENGINE_MAX_ORDER, "jet order {order} exceeds engine cap");
        let nv = 2 * n;
        let mut exponents: Vec<Vec<u8>> = Vec::new();
        let mut prefix = Vec::with_capacity(order + 1);
        for d in 0..=order {
            let mut current = vec![0u8; nv];
            enumerate(&mut current, 0, d, &mut |e| {
                let xdeg: usize = e[..n].iter().map(|&v| v as usize).sum();
                if xdeg <= max_x_order {
                    exponents.push(e.to_vec());
                }
            });
            prefix.push(exponents.len());
        }
        let index: HashMap<Vec<u8>, usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let degree: Vec<usize> = exponents
            .iter()
            .map(|e| e.iter().map(|&v| v as usize).sum())
            .collect();

        let mut products: Vec<(u32, u32, u32, usize)> = Vec::new();
        let mut buf = vec![0u8; nv];
        for (i, ei) in exponents.iter().enumerate() {
            for (j, ej) in exponents.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                for v in 0..nv {
                    buf[v] = ei[v] + ej[v];
                }
                if let Some(&k) = index.get(&buf) {
                    products.push((i as u32, j as u32, k as u32, degree[k]));
                }
            }
        }
        products.sort_by_key(|t| (t.3, t.2, t.0, t.1));
        let mut product_prefix = vec![0; order + 1];
        for d in 0..=order {
            product_prefix[d] = products.partition_point(|t| t.3 <= d);
        }
        let products = products.into_iter().map(|t| (t.0, t.1, t.2)).collect();

        let mut derivatives = vec![Vec::new(); nv];
        for (src, e) in exponents.iter().enumerate() {
            for v in 0..nv {
                if e[v] == 0 {
                    continue;
                }
                let mut lowered = e.clone();
                lowered[v] -= 1;
                let dst = index[&lowered];
                derivatives[v].push((src as u32, dst as u32, e[v] as f64));
            }
        }

        JetSpace {
            n,
            order,
            max_x_order,
            exponents,
            prefix,
            index,
            products,
            product_prefix,
            derivatives,
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn max_x_order(&self) -> usize {
        self.max_x_order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
}

fn enumerate(current: &mut [u8], pos: usize, remaining: usize, out: &mut impl FnMut(&[u8])) {
    if pos + 1 == current.len() {
        current[pos] = remaining as u8;
        out(current);
        current[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k as u8;
        enumerate(current, pos + 1, remaining - k, out);
    }
    current[pos] = 0;
}

/// Truncated multivariate Taylor polynomial.
///
/// Constants carry no space and combine with any polynomial.
#[derive(Clone)]
pub struct Taylor {
    space: Option<Arc<JetSpace>>,
    order: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Taylor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.space {
            None => write!(f, "Taylor::constant({})", self.coeffs[0]),
            Some(_) => f
                .debug_struct("Taylor")
                .field("order", &self.order)
                .field("value", &self.coeffs[0])
                .finish(),
        }
    }
}

impl Taylor {
    pub fn constant(value: f64) -> Self {
        Taylor {
            space: None,
            order: usize::MAX,
            coeffs: vec![value],
        }
    }

    /// The coordinate function for variable `var` expanded at `value`.
    pub fn variable(space: &Arc<JetSpace>, var: Var, value: f64) -> Self {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        let slot = var.slot(space.n);
        let is_x = matches!(var, Var::X(_));
        if space.order >= 1 && (!is_x || space.max_x_order >= 1) {
            let mut e = vec![0u8; 2 * space.n];
            e[slot] = 1;
            coeffs[space.index[&e]] = 1.0;
        }
        Taylor {
            space: Some(space.clone()),
            order: space.order,
            coeffs,
        }
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_constant(&self) -> bool {
        self.space.is_none()
    }

    /// Truncation order (`usize::MAX` for constants).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_finite(&self) -> bool {
        self.live().iter().all(|c| c.is_finite())
    }

    fn live(&self) -> &[f64] {
        match &self.space {
            None => &self.coeffs,
            Some(s) => &self.coeffs[..s.prefix[self.order]],
        }
    }

    /// Mixed partial derivative for the multiset of variables `vars`.
    ///
    /// Returns zero for derivatives beyond the truncation or outside the
    /// space (those are not represented, not known to vanish).
    pub fn partial(&self, vars: &[Var]) -> f64 {
        let Some(space) = &self.space else {
            return if vars.is_empty() { self.coeffs[0] } else { 0.0 };
        };
        if vars.len() > self.order {
            return 0.0;
        }
        let mut e = vec![0u8; 2 * space.n];
        for v in vars {
            e[v.slot(space.n)] += 1;
        }
        match space.index.get(&e) {
            Some(&k) => {
                let factorials: f64 = e.iter().map(|&p| factorial(p as usize)).product();
                self.coeffs[k] * factorials
            }
            None => 0.0,
        }
    }

    /// Derivative with respect to `var`; the truncation order drops by one.
    pub fn diff(&self, var: Var) -> Taylor {
        let Some(space) = &self.space else {
            return Taylor::constant(0.0);
        };
        assert!(self.order >= 1, "cannot differentiate an order-0 Taylor polynomial");
        let new_order = self.order - 1;
        let live = space.prefix[new_order];
        let mut coeffs = vec![0.0; space.len()];
        for &(src, dst, factor) in &space.derivatives[var.slot(space.n)] {
            let dst = dst as usize;
            if dst < live {
                coeffs[dst] += factor * self.coeffs[src as usize];
            }
        }
        Taylor {
            space: Some(space.clone()),
            order: new_order,
            coeffs,
        }
    }

    /// Copy truncated to `order`.
    pub fn truncate(&self, order: usize) -> Taylor {
        let Some(space) = &self.space else {
            return self.clone();
        };
        let order = order.min(self.order);
        let mut t = self.clone();
        for c in &mut t.coeffs[space.prefix[order]..] {
            *c = 0.0;
        }
        t.order = order;
        t
    }

    fn map_coeffs(&self, f: impl Fn(f64) -> f64) -> Taylor {
        let mut t = self.clone();
        let live = match &self.space {
            None => 1,
            Some(s) => s.prefix[self.order],
        };
        for c in &mut t.coeffs[..live] {
            *c = f(*c);
        }
        t
    }

    fn scale(&self, s: f64) -> Taylor {
        self.map_coeffs(|c| c * s)
    }

    fn shift(&self, s: f64) -> Taylor {
        let mut t = self.clone();
        t.coeffs[0] += s;
        t
    }

    fn merged_space(a: &Taylor, b: &Taylor) -> (Arc<JetSpace>, usize) {
        match (&a.space, &b.space) {
            (Some(sa), Some(sb)) => {
                assert!(
                    Arc::ptr_eq(sa, sb),
                    "Taylor polynomials from different jet spaces cannot be combined"
                );
                (sa.clone(), a.order.min(b.order))
            }
            _ => unreachable!("merged_space called with a constant operand"),
        }
    }

    fn add_ref(&self, rhs: &Taylor) -> Taylor {
        match (&self.space, &rhs.space) {
            (None, None) => Taylor::constant(self.coeffs[0] + rhs.coeffs[0]),
            (None, Some(_)) => rhs.shift(self.coeffs[0]),
            (Some(_), None) => self.shift(rhs.coeffs[0]),
            _ => {
                let (space, order) = Taylor::merged_space(self, rhs);
                let live = space.prefix[order];
                let mut coeffs = vec![0.0; space.len()];
                for k in 0..live {
                    coeffs[k] = self.coeffs[k] + rhs.coeffs[k];
                }
                Taylor {
                    space: Some(space),
                    order,
                    coeffs,
                }
            }
        }
    }

    fn sub_ref(&self, rhs: &Taylor) -> Taylor {
        self.add_ref(&rhs.scale(-1.0))
    }

    fn mul_ref(&self, rhs: &Taylor) -> Taylor {
        match (&self.space, &rhs.space) {
            (None, None) => Taylor::constant(self.coeffs[0] * rhs.coeffs[0]),
            (None, Some(_)) => rhs.scale(self.coeffs[0]),
            (Some(_), None) => self.scale(rhs.coeffs[0]),
            _ => {
                let (space, order) = Taylor::merged_space(self, rhs);
                let mut coeffs = vec![0.0; space.len()];
                let a = &self.coeffs;
                let b = &rhs.coeffs;
                for &(i, j, k) in &space.products[..space.product_prefix[order]] {
                    coeffs[k as usize] += a[i as usize] * b[j as usize];
                }
                Taylor {
                    space: Some(space),
                    order,
                    coeffs,
                }
            }
        }
    }

    fn div_ref(&self, rhs: &Taylor) -> Taylor {
        match &rhs.space {
            None => self.scale(1.0 / rhs.coeffs[0]),
            Some(_) => self.mul_ref(&rhs.recip()),
        }
    }

    /// Evaluates `f(self)` from the normalized derivatives
    /// `series[k] = f^(k)(a₀) / k!` by Horner's scheme in `h = self - a₀`.
    pub fn compose(&self, series: &[f64]) -> Taylor {
        if self.space.is_none() {
            return Taylor::constant(series[0]);
        }
        let k_max = self.order.min(series.len() - 1);
        let h = self.shift(-self.coeffs[0]);
        let mut acc = Taylor::constant(series[k_max]);
        for k in (0..k_max).rev() {
            acc = acc.mul_ref(&h).shift(series[k]);
        }
        // acc may still be a constant when k_max == 0
        if acc.space.is_none() {
            let mut t = self.scale(0.0);
            t.coeffs[0] = acc.coeffs[0];
            return t;
        }
        acc.order = self.order;
        acc
    }

    fn series_len(&self) -> usize {
        if self.space.is_none() {
            1
        } else {
            self.order.min(ENGINE_MAX_ORDER) + 1
        }
    }

    pub fn recip(&self) -> Taylor {
        let a = self.value();
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / a.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&series)
    }

    pub fn exp(&self) -> Taylor {
        let e = self.value().exp();
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| e / factorial(k))
            .collect();
        self.compose(&series)
    }

    pub fn ln(&self) -> Taylor {
        let a = self.value();
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k == 0 {
                    a.ln()
                } else {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign / (k as f64 * a.powi(k as i32))
                }
            })
            .collect();
        self.compose(&series)
    }

    pub fn sin(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose(&series)
    }

    pub fn cos(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| cycle[k % 4] / factorial(k))
            .collect();
        self.compose(&series)
    }

    /// Real power with generalized binomial coefficients.
    pub fn powf(&self, p: f64) -> Taylor {
        let a = self.value();
        let mut binom = 1.0;
        let series: Vec<f64> = (0..self.series_len())
            .map(|k| {
                if k > 0 {
                    binom *= (p - (k as f64 - 1.0)) / k as f64;
                }
                binom * a.powf(p - k as f64)
            })
            .collect();
        self.compose(&series)
    }

    pub fn powi(&self, n: i32) -> Taylor {
        if self.space.is_none() {
            return Taylor::constant(self.coeffs[0].powi(n));
        }
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut result = Taylor::constant(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_ref(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_ref(&base);
            }
        }
        if result.space.is_none() {
            // n == 0
            let mut t = self.scale(0.0);
            t.coeffs[0] = 1.0;
            return t;
        }
        result
    }

    pub fn sqrt(&self) -> Taylor {
        self.powf(0.5)
    }

    /// `|a|`; smooth away from `a₀ = 0`.
    pub fn abs(&self) -> Taylor {
        if self.value() < 0.0 {
            self.scale(-1.0)
        } else {
            self.clone()
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $inner:ident) => {
        impl $tr<Taylor> for Taylor {
            type Output = Taylor;
            fn $method(self, rhs: Taylor) -> Taylor {
                self.$inner(&rhs)
            }
        }
        impl<'a> $tr<&'a Taylor> for &'a Taylor {
            type Output = Taylor;
            fn $method(self, rhs: &'a Taylor) -> Taylor {
                self.$inner(rhs)
            }
        }
        impl $tr<f64> for Taylor {
            type Output = Taylor;
            fn $method(self, rhs: f64) -> Taylor {
                self.$inner(&Taylor::constant(rhs))
            }
        }
    };
}

forward_binop!(Add, add, add_ref);
forward_binop!(Sub, sub, sub_ref);
forward_binop!(Mul, mul, mul_ref);
forward_binop!(Div, div, div_ref);

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        self.scale(-1.0)
    }
}

impl<'a> Neg for &'a Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        self.scale(-1.0)
    }
}

/// Number types a field can be evaluated on: plain `f64` or [`Taylor`].
pub trait Scalar:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn powi(&self, n: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

impl Scalar for Taylor {
    fn from_f64(v: f64) -> Self {
        Taylor::constant(v)
    }
    fn value(&self) -> f64 {
        Taylor::value(self)
    }
    fn sin(&self) -> Self {
        Taylor::sin(self)
    }
    fn cos(&self) -> Self {
        Taylor::cos(self)
    }
    fn exp(&self) -> Self {
        Taylor::exp(self)
    }
    fn ln(&self) -> Self {
        Taylor::ln(self)
    }
    fn sqrt(&self) -> Self {
        Taylor::sqrt(self)
    }
    fn abs(&self) -> Self {
        Taylor::abs(self)
    }
    fn powf(&self, p: f64) -> Self {
        Taylor::powf(self, p)
    }
    fn powi(&self, n: i32) -> Self {
        Taylor::powi(self, n)
    }
}

/// A scalar field on the tangent bundle, evaluable on plain numbers and on
/// Taylor polynomials.
pub trait ScalarField: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
    fn eval_taylor(&self, x: &[Taylor], y: &[Taylor]) -> Taylor;
}

/// Convenience trait: implement one generic evaluator and get
/// [`ScalarField`] for free.
pub trait GenericField: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval_generic<S: Scalar>(&self, x: &[S], y: &[S]) -> S;
}

impl<T: GenericField> ScalarField for T {
    fn dimension(&self) -> usize {
        GenericField::dimension(self)
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_generic(x, y)
    }
    fn eval_taylor(&self, x: &[Taylor], y: &[Taylor]) -> Taylor {
        self.eval_generic(x, y)
    }
}

/// Dispatches a [`ScalarField`] to the evaluator matching the number type.
pub(crate) trait FieldArg: Scalar {
    fn apply(field: &dyn ScalarField, x: &[Self], y: &[Self]) -> Self;
}

impl FieldArg for f64 {
    fn apply(field: &dyn ScalarField, x: &[f64], y: &[f64]) -> f64 {
        field.eval(x, y)
    }
}

impl FieldArg for Taylor {
    fn apply(field: &dyn ScalarField, x: &[Taylor], y: &[Taylor]) -> Taylor {
        field.eval_taylor(x, y)
    }
}

/// Seeds the coordinate functions of `point` in a fresh space.
pub(crate) fn seed(
    point: &TangentBundlePoint,
    order: usize,
    max_x_order: usize,
) -> (Vec<Taylor>, Vec<Taylor>) {
    let n = point.dimension();
    let space = JetSpace::get(n, order, max_x_order);
    let x = (0..n)
        .map(|a| Taylor::variable(&space, Var::X(a), point.x[a]))
        .collect();
    let y = (0..n)
        .map(|a| Taylor::variable(&space, Var::Y(a), point.y[a]))
        .collect();
    (x, y)
}

/// Evaluates `field` on seeded coordinates, failing on non-finite output.
pub(crate) fn taylor_expand(
    field: &dyn ScalarField,
    point: &TangentBundlePoint,
    order: usize,
    max_x_order: usize,
) -> Result<Taylor> {
    point.check_dimension(field.dimension())?;
    if !point.is_finite() {
        return Err(Error::NonFiniteField);
    }
    let (x, y) = seed(point, order, max_x_order);
    let t = field.eval_taylor(&x, &y);
    if !t.is_finite() {
        return Err(Error::NonFiniteField);
    }
    Ok(t)
}

/// All mixed partials of a scalar field at a tangent bundle point.
#[derive(Debug, Clone)]
pub struct Jet {
    center: TangentBundlePoint,
    taylor: Taylor,
}

impl Jet {
    pub fn center(&self) -> &TangentBundlePoint {
        &self.center
    }

    pub fn order(&self) -> usize {
        self.taylor.order().min(MAX_JET_ORDER)
    }

    pub fn value(&self) -> f64 {
        self.taylor.value()
    }

    /// `∂^vars f` at the center, e.g. `partial(&[Var::X(0), Var::Y(1)])`.
    pub fn partial(&self, vars: &[Var]) -> f64 {
        self.taylor.partial(vars)
    }

    pub fn taylor(&self) -> &Taylor {
        &self.taylor
    }
}

/// Expands `field` around `point` up to `order` (at most [`MAX_JET_ORDER`]).
pub fn eval_jet(field: &dyn ScalarField, point: &TangentBundlePoint, order: usize) -> Result<Jet> {
    if order > MAX_JET_ORDER {
        return Err(Error::OrderUnsupported {
            order,
            max: MAX_JET_ORDER,
        });
    }
    let taylor = taylor_expand(field, point, order, order)?;
    Ok(Jet {
        center: point.clone(),
        taylor,
    })
}

/// Solves `A w = b` for Taylor-valued entries by Gaussian elimination
/// with partial pivoting on the constant terms. `a` is row-major `n × n`.
pub(crate) fn solve(mut a: Vec<Taylor>, mut b: Vec<Taylor>) -> Option<Vec<Taylor>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[j * n + col].value().abs())
            })
            .unwrap();
        if a[pivot * n + col].value() == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = a[col * n + col].recip();
        for row in col + 1..n {
            let factor = &a[row * n + col] * &inv;
            for k in col + 1..n {
                let update = &factor * &a[col * n + k];
                a[row * n + k] = &a[row * n + k] - &update;
            }
            let update = &factor * &b[col];
            b[row] = &b[row] - &update;
        }
    }
    let mut w = vec![Taylor::constant(0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = &acc - &(&a[row * n + k] * &w[k]);
        }
        w[row] = &acc / &a[row * n + row];
    }
    Some(w)
}
