//! Expression trees for Lipschitz scalar fields.
//!
//! Trees are immutable and share subtrees through `Arc`, so composition
//! (chart pullbacks, boundary restriction, half-space reflection) only
//! allocates the spine that actually changes.
//!
//! Derivatives are the almost-everywhere derivatives of the primitives. At
//! kink points, which have measure zero, a fixed convention is used:
//!
//! * `abs` uses `sign(0) = +1`;
//! * `min`/`max` at a tie return the right derivative along the
//!   differentiation axis (the smaller, resp. larger, branch derivative);
//! * piecewise-linear maps use the slope of the segment to the right of a
//!   knot;
//! * `plateau` and `bump` are C1 and need no convention.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Lipschitz constant of `t -> (1 - t^2)^4` on the real line.
///
/// The maximum of `8 t (1 - t^2)^3` is attained at `t^2 = 1/7`.
pub const BUMP_PROFILE_LIP: f64 = 1.904_147_549_154_357_6;

/// A univariate continuous piecewise-linear map, extended linearly past
/// its end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Error::check_dim(xs.len(), ys.len())?;
        if xs.len() < 2 {
            return Err(Error::usage(
                "piecewise-linear map needs at least two knots",
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::usage(
                "piecewise-linear knots must be strictly increasing",
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::usage("piecewise-linear knots must be finite"));
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Segment whose closed-open span `[x_i, x_{i+1})` contains `t`.
    fn segment(&self, t: f64) -> usize {
        let last = self.xs.len() - 2;
        match self.xs.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(last),
        }
    }

    pub fn slope_of(&self, seg: usize) -> f64 {
        (self.ys[seg + 1] - self.ys[seg]) / (self.xs[seg + 1] - self.xs[seg])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = self.segment(t);
        self.ys[s] + self.slope_of(s) * (t - self.xs[s])
    }

    /// Right derivative.
    pub fn slope(&self, t: f64) -> f64 {
        self.slope_of(self.segment(t))
    }

    pub fn max_abs_slope(&self) -> f64 {
        (0..self.xs.len() - 1)
            .map(|s| self.slope_of(s).abs())
            .fold(0.0, f64::max)
    }

    fn range_on(&self, lo: f64, hi: f64) -> Interval {
        let mut r = Interval::point(self.eval(lo)).hull(self.eval(hi));
        for (x, y) in self.knots() {
            if lo < x && x < hi {
                r = r.hull(y);
            }
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Coord(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Scale(f64, Arc<Expr>),
    Pow(Arc<Expr>, u32),
    Min(Arc<Expr>, Arc<Expr>),
    Max(Arc<Expr>, Arc<Expr>),
    Abs(Arc<Expr>),
    Sqrt(Arc<Expr>),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
    Atan2(Arc<Expr>, Arc<Expr>),
    Pwl(Arc<Expr>, Arc<PiecewiseLinear>),
    /// `(1 - |args - center|^2 / radius^2)^4` inside the ball, zero outside.
    Bump {
        args: Vec<Arc<Expr>>,
        center: Vec<f64>,
        radius: f64,
    },
    /// C1 cubic step: 1 for `arg <= inner`, 0 for `arg >= outer`.
    Plateau {
        arg: Arc<Expr>,
        inner: f64,
        outer: f64,
    },
    /// Symmetric Steklov average over the cube `x + [-eps/2, eps/2]^n`.
    Steklov {
        inner: Arc<Expr>,
        eps: f64,
    },
    /// Almost-everywhere partial derivative of `inner` along `axis`.
    Partial {
        inner: Arc<Expr>,
        axis: usize,
    },
    /// `inner(map(x))`; used when a substitution hits a node that cannot be
    /// rewritten in place.
    Compose {
        inner: Arc<Expr>,
        map: Vec<Arc<Expr>>,
    },
}

use Expr::*;

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Const(c) if *c == v)
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Const(c) => Some(*c),
        _ => None,
    }
}

/// Smart constructors. They fold constants and drop multiplicative and
/// additive identities, nothing more.
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(c: f64) -> Arc<Expr> {
        Arc::new(Const(c))
    }

    pub fn coord(j: usize) -> Arc<Expr> {
        Arc::new(Coord(j))
    }

    pub fn add(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(0.0), None) => b,
            (None, Some(0.0)) => a,
            _ => Arc::new(Add(a, b)),
        }
    }

    pub fn sub(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (None, Some(0.0)) => a,
            _ => Arc::new(Sub(a, b)),
        }
    }

    pub fn mul(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(1.0), None) => b,
            (None, Some(1.0)) => a,
            (Some(x), None) => Expr::scale(x, b),
            (None, Some(y)) => Expr::scale(y, a),
            _ => Arc::new(Mul(a, b)),
        }
    }

    pub fn div(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x / y),
            (None, Some(1.0)) => a,
            _ => Arc::new(Div(a, b)),
        }
    }

    pub fn neg(a: Arc<Expr>) -> Arc<Expr> {
        match as_const(&a) {
            Some(x) => Expr::constant(-x),
            None => Arc::new(Neg(a)),
        }
    }

    pub fn scale(c: f64, a: Arc<Expr>) -> Arc<Expr> {
        match as_const(&a) {
            Some(x) => Expr::constant(c * x),
            None if c == 1.0 => a,
            None if c == 0.0 => Expr::constant(0.0),
            None => Arc::new(Scale(c, a)),
        }
    }

    pub fn pow(a: Arc<Expr>, k: u32) -> Arc<Expr> {
        match (as_const(&a), k) {
            (_, 0) => Expr::constant(1.0),
            (_, 1) => a,
            (Some(x), _) => Expr::constant(x.powi(k as i32)),
            _ => Arc::new(Pow(a, k)),
        }
    }

    pub fn min(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x.min(y)),
            _ => Arc::new(Min(a, b)),
        }
    }

    pub fn max(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => Expr::constant(x.max(y)),
            _ => Arc::new(Max(a, b)),
        }
    }

    pub fn abs(a: Arc<Expr>) -> Arc<Expr> {
        match as_const(&a) {
            Some(x) => Expr::constant(x.abs()),
            None => Arc::new(Abs(a)),
        }
    }

    pub fn sqrt(a: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Sqrt(a))
    }

    pub fn sin(a: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Sin(a))
    }

    pub fn cos(a: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Cos(a))
    }

    pub fn exp(a: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Exp(a))
    }

    pub fn atan2(y: Arc<Expr>, x: Arc<Expr>) -> Arc<Expr> {
        Arc::new(Atan2(y, x))
    }

    pub fn pwl(arg: Arc<Expr>, map: PiecewiseLinear) -> Arc<Expr> {
        Arc::new(Pwl(arg, Arc::new(map)))
    }

    pub fn bump(args: Vec<Arc<Expr>>, center: Vec<f64>, radius: f64) -> Result<Arc<Expr>> {
        Error::check_dim(args.len(), center.len())?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::usage(format!(
                "bump radius must be positive, got {radius}"
            )));
        }
        Ok(Arc::new(Bump {
            args,
            center,
            radius,
        }))
    }

    pub fn plateau(arg: Arc<Expr>, inner: f64, outer: f64) -> Result<Arc<Expr>> {
        if !(inner < outer) {
            return Err(Error::usage(format!(
                "plateau needs inner < outer, got {inner} and {outer}"
            )));
        }
        Ok(Arc::new(Plateau { arg, inner, outer }))
    }

    pub fn steklov(inner: Arc<Expr>, eps: f64) -> Arc<Expr> {
        Arc::new(Steklov { inner, eps })
    }
}

fn bump_profile(q: f64) -> f64 {
    if q < 1.0 {
        let u = 1.0 - q;
        let u2 = u * u;
        u2 * u2
    } else {
        0.0
    }
}

fn plateau_value(v: f64, inner: f64, outer: f64) -> f64 {
    let t = ((v - inner) / (outer - inner)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

fn plateau_slope(v: f64, inner: f64, outer: f64) -> f64 {
    let w = outer - inner;
    let t = (v - inner) / w;
    if (0.0..1.0).contains(&t) {
        -6.0 * t * (1.0 - t) / w
    } else {
        0.0
    }
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Const(c) => *c,
            Coord(j) => x[*j],
            Neg(a) => -a.eval(x),
            Add(a, b) => a.eval(x) + b.eval(x),
            Sub(a, b) => a.eval(x) - b.eval(x),
            Mul(a, b) => a.eval(x) * b.eval(x),
            Div(a, b) => a.eval(x) / b.eval(x),
            Scale(c, a) => c * a.eval(x),
            Pow(a, k) => a.eval(x).powi(*k as i32),
            Min(a, b) => a.eval(x).min(b.eval(x)),
            Max(a, b) => a.eval(x).max(b.eval(x)),
            Abs(a) => a.eval(x).abs(),
            Sqrt(a) => a.eval(x).sqrt(),
            Sin(a) => a.eval(x).sin(),
            Cos(a) => a.eval(x).cos(),
            Exp(a) => a.eval(x).exp(),
            Atan2(y, xx) => y.eval(x).atan2(xx.eval(x)),
            Pwl(a, m) => m.eval(a.eval(x)),
            Bump {
                args,
                center,
                radius,
            } => {
                let q: f64 = args
                    .iter()
                    .zip(center)
                    .map(|(a, c)| {
                        let d = (a.eval(x) - c) / radius;
                        d * d
                    })
                    .sum();
                bump_profile(q)
            }
            Plateau { arg, inner, outer } => plateau_value(arg.eval(x), *inner, *outer),
            Steklov { inner, eps } => crate::mollify::cube_average(inner, x, *eps),
            Partial { inner, axis } => inner.partial(*axis, x),
            Compose { inner, map } => {
                let y: Vec<f64> = map.iter().map(|m| m.eval(x)).collect();
                inner.eval(&y)
            }
        }
    }

    /// Value and almost-everywhere derivative along axis `j`.
    pub fn dual(&self, j: usize, x: &[f64]) -> (f64, f64) {
        match self {
            Const(c) => (*c, 0.0),
            Coord(k) => (x[*k], if *k == j { 1.0 } else { 0.0 }),
            Neg(a) => {
                let (v, d) = a.dual(j, x);
                (-v, -d)
            }
            Add(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                (u + v, du + dv)
            }
            Sub(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                (u - v, du - dv)
            }
            Mul(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                (u * v, du * v + u * dv)
            }
            Div(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                (u / v, (du * v - u * dv) / (v * v))
            }
            Scale(c, a) => {
                let (v, d) = a.dual(j, x);
                (c * v, c * d)
            }
            Pow(a, k) => {
                let (v, d) = a.dual(j, x);
                let k = *k as i32;
                (v.powi(k), k as f64 * v.powi(k - 1) * d)
            }
            Min(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                if u < v {
                    (u, du)
                } else if v < u {
                    (v, dv)
                } else {
                    (u, du.min(dv))
                }
            }
            Max(a, b) => {
                let (u, du) = a.dual(j, x);
                let (v, dv) = b.dual(j, x);
                if u > v {
                    (u, du)
                } else if v > u {
                    (v, dv)
                } else {
                    (u, du.max(dv))
                }
            }
            Abs(a) => {
                let (v, d) = a.dual(j, x);
                if v >= 0.0 {
                    (v, d)
                } else {
                    (-v, -d)
                }
            }
            Sqrt(a) => {
                let (v, d) = a.dual(j, x);
                let r = v.sqrt();
                (r, if d == 0.0 { 0.0 } else { d / (2.0 * r) })
            }
            Sin(a) => {
                let (v, d) = a.dual(j, x);
                (v.sin(), v.cos() * d)
            }
            Cos(a) => {
                let (v, d) = a.dual(j, x);
                (v.cos(), -v.sin() * d)
            }
            Exp(a) => {
                let (v, d) = a.dual(j, x);
                let e = v.exp();
                (e, e * d)
            }
            Atan2(y, xx) => {
                let (u, du) = y.dual(j, x);
                let (v, dv) = xx.dual(j, x);
                let r2 = u * u + v * v;
                (
                    u.atan2(v),
                    if r2 == 0.0 {
                        0.0
                    } else {
                        (v * du - u * dv) / r2
                    },
                )
            }
            Pwl(a, m) => {
                let (v, d) = a.dual(j, x);
                (m.eval(v), m.slope(v) * d)
            }
            Bump {
                args,
                center,
                radius,
            } => {
                let r2 = radius * radius;
                let mut q = 0.0;
                let mut dq = 0.0;
                for (a, c) in args.iter().zip(center) {
                    let (v, d) = a.dual(j, x);
                    let off = v - c;
                    q += off * off / r2;
                    dq += 2.0 * off * d / r2;
                }
                if q < 1.0 {
                    let u = 1.0 - q;
                    (u * u * u * u, -4.0 * u * u * u * dq)
                } else {
                    (0.0, 0.0)
                }
            }
            Plateau { arg, inner, outer } => {
                let (v, d) = arg.dual(j, x);
                (
                    plateau_value(v, *inner, *outer),
                    plateau_slope(v, *inner, *outer) * d,
                )
            }
            Steklov { inner, eps } => (
                crate::mollify::cube_average(inner, x, *eps),
                crate::mollify::face_difference(inner, x, *eps, j),
            ),
            Partial { .. } => {
                let h = crate::fields::fd_step(x[j]);
                let mut p = x.to_vec();
                p[j] = x[j] + h;
                let up = self.eval(&p);
                p[j] = x[j] - h;
                let down = self.eval(&p);
                (self.eval(x), (up - down) / (2.0 * h))
            }
            Compose { inner, map } => {
                let mut y = Vec::with_capacity(map.len());
                let mut dy = Vec::with_capacity(map.len());
                for m in map {
                    let (v, d) = m.dual(j, x);
                    y.push(v);
                    dy.push(d);
                }
                let mut d = 0.0;
                for (k, dk) in dy.iter().enumerate() {
                    if *dk != 0.0 {
                        d += inner.partial(k, &y) * dk;
                    }
                }
                (inner.eval(&y), d)
            }
        }
    }

    /// Almost-everywhere partial derivative along axis `j`.
    pub fn partial(&self, j: usize, x: &[f64]) -> f64 {
        match self {
            Steklov { inner, eps } => crate::mollify::face_difference(inner, x, *eps, j),
            _ => self.dual(j, x).1,
        }
    }

    /// Replace every coordinate `x_j` by `map[j]`.
    pub fn substitute(self: &Arc<Self>, map: &[Arc<Expr>]) -> Arc<Expr> {
        let s = |e: &Arc<Expr>| e.substitute(map);
        match &**self {
            Const(_) => self.clone(),
            Coord(j) => map[*j].clone(),
            Neg(a) => Expr::neg(s(a)),
            Add(a, b) => Expr::add(s(a), s(b)),
            Sub(a, b) => Expr::sub(s(a), s(b)),
            Mul(a, b) => Expr::mul(s(a), s(b)),
            Div(a, b) => Expr::div(s(a), s(b)),
            Scale(c, a) => Expr::scale(*c, s(a)),
            Pow(a, k) => Expr::pow(s(a), *k),
            Min(a, b) => Expr::min(s(a), s(b)),
            Max(a, b) => Expr::max(s(a), s(b)),
            Abs(a) => Expr::abs(s(a)),
            Sqrt(a) => Expr::sqrt(s(a)),
            Sin(a) => Expr::sin(s(a)),
            Cos(a) => Expr::cos(s(a)),
            Exp(a) => Expr::exp(s(a)),
            Atan2(y, x) => Expr::atan2(s(y), s(x)),
            Pwl(a, m) => Arc::new(Pwl(s(a), m.clone())),
            Bump {
                args,
                center,
                radius,
            } => Arc::new(Bump {
                args: args.iter().map(s).collect(),
                center: center.clone(),
                radius: *radius,
            }),
            Plateau { arg, inner, outer } => Arc::new(Plateau {
                arg: s(arg),
                inner: *inner,
                outer: *outer,
            }),
            Steklov { .. } | Partial { .. } => Arc::new(Compose {
                inner: self.clone(),
                map: map.to_vec(),
            }),
            Compose { inner, map: m } => Arc::new(Compose {
                inner: inner.clone(),
                map: m.iter().map(s).collect(),
            }),
        }
    }

    fn children(&self) -> Vec<&Arc<Expr>> {
        match self {
            Const(_) | Coord(_) => vec![],
            Neg(a) | Scale(_, a) | Pow(a, _) | Abs(a) | Sqrt(a) | Sin(a) | Cos(a) | Exp(a) => {
                vec![a]
            }
            Pwl(a, _) => vec![a],
            Plateau { arg, .. } => vec![arg],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Min(a, b) | Max(a, b) => vec![a, b],
            Atan2(a, b) => vec![a, b],
            Bump { args, .. } => args.iter().collect(),
            // The inner tree of a Steklov node lives in the same coordinates.
            Steklov { inner, .. } | Partial { inner, .. } => vec![inner],
            Compose { map, .. } => map.iter().collect(),
        }
    }

    /// Number of coordinates the tree reads, i.e. one past the largest
    /// coordinate index (zero for constant trees).
    pub fn coord_span(&self) -> usize {
        match self {
            Coord(j) => j + 1,
            _ => self
                .children()
                .into_iter()
                .map(|c| c.coord_span())
                .max()
                .unwrap_or(0),
        }
    }

    /// True when the tree is built from constants, coordinates, sums and
    /// constant multiples only.
    pub fn is_affine(&self) -> bool {
        match self {
            Const(_) | Coord(_) => true,
            Neg(a) | Scale(_, a) => a.is_affine(),
            Add(a, b) | Sub(a, b) => a.is_affine() && b.is_affine(),
            Mul(a, b) => {
                (matches!(**a, Const(_)) && b.is_affine())
                    || (matches!(**b, Const(_)) && a.is_affine())
            }
            _ => false,
        }
    }

    pub fn is_zero(&self) -> bool {
        is_const(self, 0.0)
    }
}

/// A closed interval, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn entire() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn hull(self, v: f64) -> Self {
        Interval {
            lo: self.lo.min(v),
            hi: self.hi.max(v),
        }
    }

    pub fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value in the interval.
    pub fn mig(self) -> f64 {
        if self.lo <= 0.0 && 0.0 <= self.hi {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    fn contains(self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn map_corners(self, other: Interval, f: impl Fn(f64, f64) -> f64) -> Interval {
        let c = [
            f(self.lo, other.lo),
            f(self.lo, other.hi),
            f(self.hi, other.lo),
            f(self.hi, other.hi),
        ];
        if c.iter().any(|v| v.is_nan()) {
            return Interval::entire();
        }
        Interval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Range of sin or cos (selected by `phase`: 0 for sin, pi/2 for cos).
    fn trig(self, phase: f64) -> Interval {
        if !(self.hi - self.lo < 2.0 * PI) {
            return Interval::new(-1.0, 1.0);
        }
        let f = |t: f64| (t + phase).sin();
        let mut r = Interval::point(f(self.lo)).hull(f(self.hi));
        // Critical points of sin(t + phase) are t = pi/2 - phase + k pi.
        let k0 = ((self.lo + phase - PI / 2.0) / PI).ceil() as i64;
        let mut k = k0;
        loop {
            let t = PI / 2.0 - phase + k as f64 * PI;
            if t > self.hi {
                break;
            }
            r = r.hull(f(t));
            k += 1;
        }
        // The shifted argument is rounded, so widen by a few ulps.
        Interval::new((r.lo - 4e-16).max(-1.0), (r.hi + 4e-16).min(1.0))
    }
}

/// Product of nonnegative bounds with `0 * inf = 0`.
fn prod(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Expr {
    /// Enclosure of the range of the tree over the box `dom`.
    pub fn range_in(&self, dom: &[Interval]) -> Interval {
        match self {
            Const(c) => Interval::point(*c),
            Coord(j) => dom[*j],
            Neg(a) => {
                let r = a.range_in(dom);
                Interval::new(-r.hi, -r.lo)
            }
            Add(a, b) => {
                let (u, v) = (a.range_in(dom), b.range_in(dom));
                Interval::new(u.lo + v.lo, u.hi + v.hi)
            }
            Sub(a, b) => {
                let (u, v) = (a.range_in(dom), b.range_in(dom));
                Interval::new(u.lo - v.hi, u.hi - v.lo)
            }
            Mul(a, b) => a.range_in(dom).map_corners(b.range_in(dom), |p, q| p * q),
            Div(a, b) => {
                let v = b.range_in(dom);
                if v.contains(0.0) {
                    Interval::entire()
                } else {
                    a.range_in(dom).map_corners(v, |p, q| p / q)
                }
            }
            Scale(c, a) => {
                let r = a.range_in(dom);
                Interval::point(c * r.lo).hull(c * r.hi)
            }
            Pow(a, k) => {
                let r = a.range_in(dom);
                let k = *k as i32;
                if k % 2 == 0 {
                    Interval::new(r.mig().powi(k), r.mag().powi(k))
                } else {
                    Interval::new(r.lo.powi(k), r.hi.powi(k))
                }
            }
            Min(a, b) => {
                let (u, v) = (a.range_in(dom), b.range_in(dom));
                Interval::new(u.lo.min(v.lo), u.hi.min(v.hi))
            }
            Max(a, b) => {
                let (u, v) = (a.range_in(dom), b.range_in(dom));
                Interval::new(u.lo.max(v.lo), u.hi.max(v.hi))
            }
            Abs(a) => {
                let r = a.range_in(dom);
                Interval::new(r.mig(), r.mag())
            }
            Sqrt(a) => {
                let r = a.range_in(dom);
                Interval::new(r.lo.max(0.0).sqrt(), r.hi.max(0.0).sqrt())
            }
            Sin(a) => a.range_in(dom).trig(0.0),
            Cos(a) => a.range_in(dom).trig(PI / 2.0),
            Exp(a) => {
                let r = a.range_in(dom);
                Interval::new(r.lo.exp(), r.hi.exp())
            }
            Atan2(..) => Interval::new(-PI, PI),
            Pwl(a, m) => {
                let r = a.range_in(dom);
                if r.lo.is_finite() && r.hi.is_finite() {
                    m.range_on(r.lo, r.hi)
                } else {
                    Interval::entire()
                }
            }
            Bump {
                args,
                center,
                radius,
            } => {
                let mut qlo = 0.0;
                let mut qhi = 0.0;
                for (a, c) in args.iter().zip(center) {
                    let r = a.range_in(dom);
                    let off = Interval::new(r.lo - c, r.hi - c);
                    qlo += (off.mig() / radius).powi(2);
                    qhi += (off.mag() / radius).powi(2);
                }
                Interval::new(bump_profile(qhi), bump_profile(qlo))
            }
            Plateau { arg, inner, outer } => {
                let r = arg.range_in(dom);
                Interval::new(
                    plateau_value(r.hi, *inner, *outer),
                    plateau_value(r.lo, *inner, *outer),
                )
            }
            Steklov { inner, eps } => {
                let grown: Vec<Interval> = dom
                    .iter()
                    .map(|i| Interval::new(i.lo - eps / 2.0, i.hi + eps / 2.0))
                    .collect();
                inner.range_in(&grown)
            }
            Partial { inner, .. } => match &**inner {
                Steklov { .. } => {
                    let l = inner.lipschitz_in(dom);
                    Interval::new(-l, l)
                }
                _ => Interval::entire(),
            },
            Compose { inner, map } => {
                let image: Vec<Interval> = map.iter().map(|m| m.range_in(dom)).collect();
                inner.range_in(&image)
            }
        }
    }

    /// Upper bound on the Euclidean Lipschitz constant over the box `dom`.
    ///
    /// Returns `f64::INFINITY` when no finite bound can be certified (for
    /// instance a division whose denominator range contains zero).
    pub fn lipschitz_in(&self, dom: &[Interval]) -> f64 {
        let lip = |e: &Arc<Expr>| e.lipschitz_in(dom);
        match self {
            Const(_) => 0.0,
            Coord(_) => 1.0,
            Neg(a) | Abs(a) | Sin(a) | Cos(a) => lip(a),
            Add(a, b) | Sub(a, b) => lip(a) + lip(b),
            Min(a, b) | Max(a, b) => lip(a).max(lip(b)),
            Scale(c, a) => prod(c.abs(), lip(a)),
            Mul(a, b) => prod(lip(a), b.range_in(dom).mag()) + prod(a.range_in(dom).mag(), lip(b)),
            Div(a, b) => {
                let v = b.range_in(dom);
                let num = prod(lip(a), v.mag()) + prod(a.range_in(dom).mag(), lip(b));
                if num == 0.0 {
                    0.0
                } else {
                    num / (v.mig() * v.mig())
                }
            }
            Pow(a, k) => {
                let r = a.range_in(dom);
                prod(*k as f64 * r.mag().powi(*k as i32 - 1), lip(a))
            }
            Sqrt(a) => {
                let l = lip(a);
                if l == 0.0 {
                    0.0
                } else {
                    l / (2.0 * a.range_in(dom).lo.max(0.0).sqrt())
                }
            }
            Exp(a) => prod(a.range_in(dom).hi.exp(), lip(a)),
            Atan2(y, x) => {
                let l = lip(y) + lip(x);
                let rmin = (y.range_in(dom).mig().powi(2) + x.range_in(dom).mig().powi(2)).sqrt();
                if l == 0.0 {
                    0.0
                } else {
                    l / rmin
                }
            }
            Pwl(a, m) => prod(m.max_abs_slope(), lip(a)),
            Bump { args, radius, .. } => {
                // Distinct coordinates form a projection, which is 1-Lipschitz.
                let mut seen = Vec::new();
                let projection = args.iter().all(|a| match **a {
                    Coord(k) if !seen.contains(&k) => {
                        seen.push(k);
                        true
                    }
                    _ => false,
                });
                let map_lip = if projection {
                    1.0
                } else {
                    args.iter().map(|a| lip(a).powi(2)).sum::<f64>().sqrt()
                };
                prod(BUMP_PROFILE_LIP / radius, map_lip)
            }
            Plateau { arg, inner, outer } => prod(1.5 / (outer - inner), lip(arg)),
            Steklov { inner, eps } => {
                let grown: Vec<Interval> = dom
                    .iter()
                    .map(|i| Interval::new(i.lo - eps / 2.0, i.hi + eps / 2.0))
                    .collect();
                inner.lipschitz_in(&grown)
            }
            Partial { .. } => f64::INFINITY,
            Compose { inner, map } => {
                let image: Vec<Interval> = map.iter().map(|m| m.range_in(dom)).collect();
                let s: f64 = map.iter().map(|m| m.lipschitz_in(dom).powi(2)).sum();
                prod(inner.lipschitz_in(&image), s.sqrt())
            }
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v == PI {
        "pi".to_string()
    } else if v < 0.0 {
        format!("({v:?})")
    } else {
        format!("{v:?}")
    }
}

/// Prints in the configuration grammar (see [`crate::fields::parse`]), so a
/// printed tree parses back to an equivalent tree. Steklov and composition
/// nodes have no surface syntax and print as pseudo-calls.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(c) => write!(f, "{}", fmt_num(*c)),
            Coord(j) => write!(f, "x{}", j + 1),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Scale(c, a) => write!(f, "({} * {a})", fmt_num(*c)),
            Pow(a, k) => write!(f, "({a}^{k})"),
            Min(a, b) => write!(f, "min({a}, {b})"),
            Max(a, b) => write!(f, "max({a}, {b})"),
            Abs(a) => write!(f, "abs({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Atan2(y, x) => write!(f, "atan2({y}, {x})"),
            Pwl(a, m) => {
                write!(f, "pwl({a}")?;
                for (x, y) in m.knots() {
                    write!(f, ", {}, {}", fmt_num(x), fmt_num(y))?;
                }
                write!(f, ")")
            }
            Bump {
                args,
                center,
                radius,
            } => {
                if args.len() == 1 {
                    write!(f, "bump({}, {:?}, {radius:?})", args[0], center[0])
                } else {
                    let a: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                    let c: Vec<String> = center.iter().map(|v| format!("{v:?}")).collect();
                    write!(
                        f,
                        "bump([{}], [{}], {radius:?})",
                        a.join(", "),
                        c.join(", ")
                    )
                }
            }
            Plateau { arg, inner, outer } => {
                write!(f, "plateau({arg}, {inner:?}, {outer:?})")
            }
            Steklov { inner, eps } => write!(f, "steklov({inner}; {eps:?})"),
            Partial { inner, axis } => write!(f, "partial({inner}; {})", axis + 1),
            Compose { inner, map } => {
                let m: Vec<String> = map.iter().map(|a| a.to_string()).collect();
                write!(f, "compose({inner}; {})", m.join(", "))
            }
        }
    }
}
