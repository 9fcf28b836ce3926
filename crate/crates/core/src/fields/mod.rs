//! Lipschitz scalar fields on `R^n` and their almost-everywhere derivatives.

mod breaks;
pub mod expr;
pub mod parse;
pub mod sample;

use std::fmt;
use std::sync::Arc;

pub(crate) use breaks::{finish, sorted_breaks};
pub use expr::{Expr, Interval, PiecewiseLinear};
pub use parse::{parse_constant, parse_expr};
pub use sample::{BoxRegion, SamplePlan};

use crate::error::{Error, Result};

/// How [`ScalarField::partial`] computes derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Symbolic rules on the tree, with the kink conventions of [`expr`].
    #[default]
    Analytic,
    /// Central difference with step `max(1e-6, 1e-8 (1 + |x_j|))`.
    FiniteDifference,
}

/// Central-difference step for axis value `xj`.
pub fn fd_step(xj: f64) -> f64 {
    1e-6f64.max(1e-8 * (1.0 + xj.abs()))
}

/// An evaluable Lipschitz map `R^n -> R`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    arity: usize,
    expr: Arc<Expr>,
    lip_bound: Option<f64>,
    mode: DerivativeMode,
}

impl ScalarField {
    pub fn new(arity: usize, expr: Arc<Expr>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::usage("fields need at least one coordinate"));
        }
        if expr.coord_span() > arity {
            return Err(Error::usage(format!(
                "expression reads x{} but the field has arity {arity}",
                expr.coord_span()
            )));
        }
        Ok(ScalarField {
            arity,
            expr,
            lip_bound: None,
            mode: DerivativeMode::Analytic,
        })
    }

    pub fn parse(src: &str, arity: usize) -> Result<Self> {
        Self::new(arity, parse_expr(src, arity)?)
    }

    pub fn constant(arity: usize, c: f64) -> Self {
        ScalarField {
            arity,
            expr: Expr::constant(c),
            lip_bound: Some(0.0),
            mode: DerivativeMode::Analytic,
        }
    }

    /// The coordinate function `x_j` (zero-based).
    pub fn coordinate(arity: usize, j: usize) -> Result<Self> {
        if j >= arity {
            return Err(Error::usage(format!(
                "axis {j} out of range for arity {arity}"
            )));
        }
        Ok(ScalarField {
            arity,
            expr: Expr::coord(j),
            lip_bound: Some(1.0),
            mode: DerivativeMode::Analytic,
        })
    }

    pub fn with_lip_bound(mut self, bound: f64) -> Self {
        self.lip_bound = Some(bound);
        self
    }

    /// Declare the certified interval bound over `region` as the Lipschitz
    /// bound.
    pub fn with_certified_lip_bound(self, region: &BoxRegion) -> Result<Self> {
        let l = self.certified_lip_bound(region)?;
        Ok(self.with_lip_bound(l))
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn expr(&self) -> &Arc<Expr> {
        &self.expr
    }

    pub fn lip_bound(&self) -> Option<f64> {
        self.lip_bound
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.arity, x.len())?;
        Ok(self.expr.eval(x))
    }

    /// Almost-everywhere partial derivative along zero-based axis `j`.
    pub fn partial(&self, j: usize, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.arity, x.len())?;
        if j >= self.arity {
            return Err(Error::usage(format!(
                "axis {j} out of range for arity {}",
                self.arity
            )));
        }
        Ok(self.partial_unchecked(j, x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    pub(crate) fn partial_unchecked(&self, j: usize, x: &[f64]) -> f64 {
        match self.mode {
            DerivativeMode::Analytic => self.expr.partial(j, x),
            DerivativeMode::FiniteDifference => {
                let h = fd_step(x[j]);
                let mut p = x.to_vec();
                p[j] = x[j] + h;
                let up = self.expr.eval(&p);
                p[j] = x[j] - h;
                let down = self.expr.eval(&p);
                (up - down) / (2.0 * h)
            }
        }
    }

    /// Interval-arithmetic upper bound on the Lipschitz constant over `region`.
    pub fn certified_lip_bound(&self, region: &BoxRegion) -> Result<f64> {
        Error::check_dim(self.arity, region.dim())?;
        Ok(self.expr.lipschitz_in(&intervals(region)))
    }

    /// Enclosure of the field's values over `region`.
    pub fn range_over(&self, region: &BoxRegion) -> Result<Interval> {
        Error::check_dim(self.arity, region.dim())?;
        Ok(self.expr.range_in(&intervals(region)))
    }

    /// Compose with a map `R^m -> R^n` given by `arity()` component trees
    /// over `m` coordinates.
    pub fn compose(&self, map: &[Arc<Expr>], new_arity: usize) -> Result<Self> {
        Error::check_dim(self.arity, map.len())?;
        ScalarField::new(new_arity, self.expr.substitute(map)).map(|f| f.with_mode(self.mode))
    }

    pub fn is_affine(&self) -> bool {
        self.expr.is_affine()
    }

    pub(crate) fn from_parts(
        arity: usize,
        expr: Arc<Expr>,
        lip_bound: Option<f64>,
        mode: DerivativeMode,
    ) -> Self {
        ScalarField {
            arity,
            expr,
            lip_bound,
            mode,
        }
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

pub(crate) fn intervals(region: &BoxRegion) -> Vec<Interval> {
    region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(&a, &b)| Interval::new(a, b))
        .collect()
}

/// Largest difference quotient `|f(x) - f(y)| / |x - y|` over all pairs of
/// plan points. A lower bound on the Lipschitz constant on the plan's box.
pub fn lipschitz_estimate(f: &ScalarField, plan: &SamplePlan) -> Result<f64> {
    Error::check_dim(f.arity(), plan.region.dim())?;
    let pts = plan.points()?;
    let vals: Vec<f64> = pts.iter().map(|p| f.eval_unchecked(p)).collect();
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for k in i + 1..pts.len() {
            let d2: f64 = pts[i]
                .iter()
                .zip(&pts[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 > 0.0 {
                best = best.max((vals[i] - vals[k]).abs() / d2.sqrt());
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(src: &str, n: usize) -> ScalarField {
        ScalarField::parse(src, n).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(field("abs(x1)", 1).eval(&[-2.0]).unwrap(), 2.0);
        assert_eq!(field("max(x1, x2)", 2).eval(&[1.0, 3.0]).unwrap(), 3.0);
        // 2*5 - min(2, 5) = 10 - 2
        assert_eq!(
            field("x1*x2 - min(x1, x2)", 2).eval(&[2.0, 5.0]).unwrap(),
            8.0
        );
    }

    #[test]
    fn eval_dimension_mismatch() {
        let f = field("x1 + x2", 2);
        assert!(matches!(
            f.eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(ScalarField::new(1, parse_expr("x1 + x2", 2).unwrap()).is_err());
    }

    #[test]
    fn partial_examples() {
        let f = field("abs(x1)", 1);
        assert_eq!(f.partial(0, &[3.0]).unwrap(), 1.0);
        assert_eq!(f.partial(0, &[-3.0]).unwrap(), -1.0);
        let g = field("max(x1, 2*x2)", 2);
        assert_eq!(g.partial(1, &[0.0, 1.0]).unwrap(), 2.0);
        let fd = g.clone().with_mode(DerivativeMode::FiniteDifference);
        assert!((fd.partial(1, &[0.0, 1.0]).unwrap() - 2.0).abs() < 1e-8);
        assert!(matches!(g.partial(2, &[0.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn fd_step_rule() {
        assert_eq!(fd_step(0.0), 1e-6);
        assert_eq!(fd_step(10.0), 1e-6);
        assert!((fd_step(1e3) - 1.001e-5).abs() < 1e-20);
        assert!((fd_step(1e3 * 1e3) - 1e-8 * (1.0 + 1e6)).abs() < 1e-20);
    }

    #[test]
    fn lipschitz_estimate_examples() {
        let plan1 = SamplePlan::new(BoxRegion::cube(1, -1.0, 1.0).unwrap(), 200, 3);
        let l = lipschitz_estimate(&field("3*x1", 1), &plan1).unwrap();
        assert!((3.0 - 1e-9..=3.0 * (1.0 + 1e-12)).contains(&l), "{l}");
        assert!(lipschitz_estimate(&field("abs(x1)", 1), &plan1).unwrap() <= 1.0 + 1e-15);

        let plan2 = SamplePlan::new(BoxRegion::cube(2, -1.0, 1.0).unwrap(), 1000, 11);
        let l = lipschitz_estimate(&field("max(x1, x2)", 2), &plan2).unwrap();
        assert!(l <= 2f64.sqrt() && l >= 1.0 - 1e-6, "{l}");

        let empty = SamplePlan::new(BoxRegion::cube(1, -1.0, 1.0).unwrap(), 0, 3);
        assert!(lipschitz_estimate(&field("x1", 1), &empty).is_err());
    }

    #[test]
    fn certified_bounds_dominate_estimates() {
        let region = BoxRegion::cube(2, -1.0, 1.0).unwrap();
        let plan = SamplePlan::new(region.clone(), 400, 5);
        for src in [
            "max(x1, 2*x2)",
            "abs(x1) * bump([0, 0], 0.8)",
            "x1*x2 - min(x1, x2)",
            "pwl(x1 + x2, -1, 0, 0, 1, 1, 0.5)",
            "plateau(sqrt(x1^2 + x2^2 + 0.01), 0.3, 0.9)",
        ] {
            let f = field(src, 2).with_certified_lip_bound(&region).unwrap();
            let est = lipschitz_estimate(&f, &plan).unwrap();
            assert!(est <= f.lip_bound().unwrap() * (1.0 + 1e-9), "{src}: {est}");
        }
    }

    /// Trees used by the property tests below: a kinked and a smooth family.
    fn sample_trees() -> Vec<(&'static str, bool)> {
        vec![
            ("abs(x1 - 0.1) + max(x2, 0.3*x1)", false),
            ("min(x1, x2) * abs(x2)", false),
            ("pwl(x1, -1, 0, 0, 1, 1, 0.25) * x2", false),
            ("bump([0.1, -0.2], 1.3) * (1 + x1*x2)", true),
            ("sin(x1) * x2^3 + plateau(x1, -0.5, 0.5)", true),
        ]
    }

    proptest! {
        #[test]
        fn analytic_matches_finite_difference_off_kinks(
            x1 in -0.9f64..0.9, x2 in -0.9f64..0.9, axis in 0usize..2,
        ) {
            for (src, smooth) in sample_trees() {
                let f = field(src, 2);
                let fd = f.clone().with_mode(DerivativeMode::FiniteDifference);
                let x = [x1, x2];
                // Skip points within a few FD steps of a kink.
                let mut probe = x.to_vec();
                let near_kink = !crate::fields::sorted_breaks(
                    f.expr(), &mut probe, axis, x[axis] - 1e-5, x[axis] + 1e-5,
                ).is_empty();
                if near_kink {
                    continue;
                }
                let a = f.partial(axis, &x).unwrap();
                let d = fd.partial(axis, &x).unwrap();
                let tol = if smooth { 1e-7 } else { 1e-6 };
                prop_assert!((a - d).abs() < tol, "{}: {} vs {}", src, a, d);
            }
        }

        #[test]
        fn sum_and_product_rules(x1 in -0.9f64..0.9, x2 in -0.9f64..0.9, axis in 0usize..2) {
            let trees = sample_trees();
            let x = [x1, x2];
            for (a_src, _) in &trees {
                for (b_src, _) in &trees {
                    let a = field(a_src, 2);
                    let b = field(b_src, 2);
                    let sum = ScalarField::new(2, Expr::add(a.expr().clone(), b.expr().clone())).unwrap();
                    let prod = ScalarField::new(2, Arc::new(Expr::Mul(a.expr().clone(), b.expr().clone()))).unwrap();
                    let (va, da) = (a.eval(&x).unwrap(), a.partial(axis, &x).unwrap());
                    let (vb, db) = (b.eval(&x).unwrap(), b.partial(axis, &x).unwrap());
                    prop_assert!((sum.partial(axis, &x).unwrap() - (da + db)).abs() <= 1e-10);
                    prop_assert!((prod.partial(axis, &x).unwrap() - (da * vb + va * db)).abs() <= 1e-10);
                }
            }
        }

        #[test]
        fn evaluation_is_deterministic(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
            for (src, _) in sample_trees() {
                let f = field(src, 2);
                let x = [x1, x2];
                prop_assert_eq!(f.eval(&x).unwrap().to_bits(), f.eval(&x).unwrap().to_bits());
                prop_assert_eq!(f.partial(0, &x).unwrap().to_bits(), f.partial(0, &x).unwrap().to_bits());
            }
        }
    }
}
