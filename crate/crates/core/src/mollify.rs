//! Steklov averaging of fields and forms, and the derivative-convergence
//! probe.
//!
//! Cube averages are computed by nested Gauss-Legendre quadrature, one axis
//! at a time. Along each axis the segment is split at the non-smooth points
//! of the integrand on every edge of the remaining sub-box, so kinked
//! piecewise-polynomial integrands are integrated to rounding accuracy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{finish, sorted_breaks, DerivativeMode, Expr, SamplePlan, ScalarField};
use crate::forms::SimpleForm;
use crate::quadrature::gauss_legendre;

/// Gauss order used on each smooth piece of a cube average.
pub const STEKLOV_ORDER: usize = 8;

/// `eps_s = eps0 * ratio^s` for `s = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MollificationSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub count: usize,
}

impl MollificationSchedule {
    pub fn new(eps0: f64, ratio: f64, count: usize) -> Result<Self> {
        let s = MollificationSchedule { eps0, ratio, count };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            return Err(Error::usage(format!(
                "eps0 must be positive, got {}",
                self.eps0
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::usage(format!(
                "ratio must lie in (0, 1) for a strictly decreasing schedule, got {}",
                self.ratio
            )));
        }
        if self.count == 0 {
            return Err(Error::usage("schedule needs at least one epsilon"));
        }
        Ok(())
    }

    pub fn eps(&self, s: usize) -> f64 {
        self.eps0 * self.ratio.powi(s as i32)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|s| self.eps(s)).collect()
    }
}

/// How a field is extended before averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// The field is already defined on all of `R^n`.
    #[default]
    Free,
    /// Even reflection across `x_n = 0`: `f(x', x_n) := f(x', |x_n|)`.
    EvenReflection,
}

fn nested(expr: &Expr, p: &mut [f64], center: &[f64], axes: &[usize], half: f64) -> f64 {
    let Some((&k, rest)) = axes.split_first() else {
        return expr.eval(p);
    };
    let (a, b) = (center[k] - half, center[k] + half);
    let mut cuts = Vec::new();
    for corner in 0..(1usize << rest.len()) {
        for (bit, &ax) in rest.iter().enumerate() {
            p[ax] = if (corner >> bit) & 1 == 1 {
                center[ax] + half
            } else {
                center[ax] - half
            };
        }
        cuts.extend(sorted_breaks(expr, p, k, a, b));
    }
    let cuts = finish(cuts, a, b);
    let rule = gauss_legendre(STEKLOV_ORDER);
    let mut acc = 0.0;
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let hw = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            p[k] = mid + hw * t;
            acc += w * hw * nested(expr, p, center, rest, half);
        }
        lo = hi;
    }
    acc / (b - a)
}

/// Average of `inner` over `x + [-eps/2, eps/2]^n`.
pub(crate) fn cube_average(inner: &Expr, x: &[f64], eps: f64) -> f64 {
    let axes: Vec<usize> = (0..x.len()).collect();
    let mut p = x.to_vec();
    nested(inner, &mut p, x, &axes, 0.5 * eps)
}

/// `[F(x + eps/2 e_j) - F(x - eps/2 e_j)] / eps` with `F` the average over
/// the remaining axes. This is the exact derivative of the cube average.
pub(crate) fn face_difference(inner: &Expr, x: &[f64], eps: f64, j: usize) -> f64 {
    let half = 0.5 * eps;
    let axes: Vec<usize> = (0..x.len()).filter(|&k| k != j).collect();
    let mut p = x.to_vec();
    p[j] = x[j] + half;
    let up = nested(inner, &mut p, x, &axes, half);
    p.copy_from_slice(x);
    p[j] = x[j] - half;
    let down = nested(inner, &mut p, x, &axes, half);
    (up - down) / eps
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "eps must be positive and finite, got {eps}"
        )))
    }
}

/// Even reflection across the last axis.
pub fn reflect_even(f: &ScalarField) -> Result<ScalarField> {
    let n = f.arity();
    if n == 0 {
        return Err(Error::usage("cannot reflect a field of arity zero"));
    }
    let mut map: Vec<Arc<Expr>> = (0..n).map(Expr::coord).collect();
    map[n - 1] = Expr::abs(Expr::coord(n - 1));
    let g = f.compose(&map, n)?;
    Ok(match f.lip_bound() {
        Some(l) => g.with_lip_bound(l),
        None => g,
    })
}

/// `f_eps(x) = eps^-n * integral of f over x + [-eps/2, eps/2]^n`.
///
/// Affine fields are returned unchanged since they are fixed by averaging.
pub fn steklov_average(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    steklov_average_with(f, eps, Extension::Free)
}

pub fn steklov_average_with(f: &ScalarField, eps: f64, ext: Extension) -> Result<ScalarField> {
    check_eps(eps)?;
    let src = match ext {
        Extension::Free => f.clone(),
        Extension::EvenReflection => reflect_even(f)?,
    };
    if src.is_affine() {
        return Ok(src);
    }
    Ok(ScalarField::from_parts(
        src.arity(),
        Expr::steklov(src.expr().clone(), eps),
        src.lip_bound(),
        DerivativeMode::Analytic,
    ))
}

/// `d_j f_eps` by the face-difference formula.
pub fn steklov_partial(f: &ScalarField, eps: f64, j: usize) -> Result<ScalarField> {
    if j >= f.arity() {
        return Err(Error::usage(format!(
            "axis {j} out of range for arity {}",
            f.arity()
        )));
    }
    let avg = steklov_average(f, eps)?;
    let expr = Arc::new(Expr::Partial {
        inner: avg.expr().clone(),
        axis: j,
    });
    Ok(ScalarField::from_parts(
        f.arity(),
        expr,
        None,
        DerivativeMode::Analytic,
    ))
}

/// Average the coefficient and every factor of `omega`.
pub fn mollify_form(omega: &SimpleForm, eps: f64) -> Result<SimpleForm> {
    mollify_form_with(omega, eps, Extension::Free)
}

pub fn mollify_form_with(omega: &SimpleForm, eps: f64, ext: Extension) -> Result<SimpleForm> {
    check_eps(eps)?;
    omega.map_fields(|f| steklov_average_with(f, eps, ext))
}

/// Per-axis result of a derivative-convergence probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub eps: Vec<f64>,
    /// `max_deviation[s][j]`: largest `|d_j f_eps_s - d_j f|` over the points.
    pub max_deviation: Vec<Vec<f64>>,
    /// Fraction of points whose deviation at the last epsilon is below `tol`.
    pub fraction: Vec<f64>,
    pub points: usize,
}

/// Sample `d_j f_eps - d_j f` over `plan` for every epsilon in `schedule`.
pub fn convergence_probe(
    f: &ScalarField,
    schedule: &MollificationSchedule,
    plan: &SamplePlan,
    tol: f64,
) -> Result<ProbeReport> {
    Error::check_dim(f.arity(), plan.region.dim())?;
    let points = plan.points()?;
    let axes: Vec<usize> = (0..f.arity()).collect();
    probe(f, schedule, &points, &axes, tol, Extension::Free)
}

/// Like [`convergence_probe`] at explicit points.
pub fn convergence_probe_at(
    f: &ScalarField,
    schedule: &MollificationSchedule,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ProbeReport> {
    let axes: Vec<usize> = (0..f.arity()).collect();
    probe(f, schedule, points, &axes, tol, Extension::Free)
}

/// Tangential derivatives of the average on the boundary hyperplane.
/// `plan` samples `R^{n-1}`; probe points are `(x', 0)`.
pub fn convergence_probe_boundary(
    f: &ScalarField,
    schedule: &MollificationSchedule,
    plan: &SamplePlan,
    tol: f64,
    ext: Extension,
) -> Result<ProbeReport> {
    let n = f.arity();
    if n < 2 {
        return Err(Error::usage("boundary probe needs dimension at least 2"));
    }
    Error::check_dim(n - 1, plan.region.dim())?;
    let points: Vec<Vec<f64>> = plan
        .points()?
        .into_iter()
        .map(|mut p| {
            p.push(0.0);
            p
        })
        .collect();
    let axes: Vec<usize> = (0..n - 1).collect();
    probe(f, schedule, &points, &axes, tol, ext)
}

fn probe(
    f: &ScalarField,
    schedule: &MollificationSchedule,
    points: &[Vec<f64>],
    axes: &[usize],
    tol: f64,
    ext: Extension,
) -> Result<ProbeReport> {
    schedule.validate()?;
    if points.is_empty() {
        return Err(Error::usage("probe needs at least one point"));
    }
    for p in points {
        Error::check_dim(f.arity(), p.len())?;
    }
    let eps = schedule.values();
    let smoothed = eps
        .iter()
        .map(|&e| steklov_average_with(f, e, ext))
        .collect::<Result<Vec<_>>>()?;
    // dev[i][s][a]
    let dev: Vec<Vec<Vec<f64>>> = points
        .par_iter()
        .map(|p| {
            let exact: Vec<f64> = axes.iter().map(|&j| f.partial_unchecked(j, p)).collect();
            smoothed
                .iter()
                .map(|g| {
                    axes.iter()
                        .zip(&exact)
                        .map(|(&j, d)| (g.partial_unchecked(j, p) - d).abs())
                        .collect()
                })
                .collect()
        })
        .collect();
    let max_deviation = (0..eps.len())
        .map(|s| {
            (0..axes.len())
                .map(|a| dev.iter().map(|d| d[s][a]).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    let last = eps.len() - 1;
    let fraction = (0..axes.len())
        .map(|a| dev.iter().filter(|d| d[last][a] < tol).count() as f64 / points.len() as f64)
        .collect();
    Ok(ProbeReport {
        eps,
        max_deviation,
        fraction,
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BoxRegion;
    use proptest::prelude::*;

    fn field(src: &str, n: usize) -> ScalarField {
        ScalarField::parse(src, n).unwrap()
    }

    #[test]
    fn average_examples() {
        let f = steklov_average(&field("x1", 1), 0.3).unwrap();
        assert_eq!(f.eval(&[0.7]).unwrap(), 0.7);

        let f = steklov_average(&field("abs(x1)", 1), 1.0).unwrap();
        assert!((f.eval(&[0.0]).unwrap() - 0.25).abs() < 1e-14);
        // Far from the kink the average of |x| is |x|.
        assert!((f.eval(&[2.0]).unwrap() - 2.0).abs() < 1e-14);

        let f = steklov_average(&field("max(x1, x2)", 2), 0.4).unwrap();
        // Average of max over a square centred on the diagonal: c + eps/6.
        assert!((f.eval(&[0.1, 0.1]).unwrap() - (0.1 + 0.4 / 6.0)).abs() < 1e-13);
    }

    #[test]
    fn partial_examples() {
        let d = steklov_partial(&field("abs(x1)", 1), 0.2, 0).unwrap();
        assert!((d.eval(&[0.5]).unwrap() - 1.0).abs() < 1e-14);
        let d = steklov_partial(&field("abs(x1)", 1), 1.0, 0).unwrap();
        assert!(d.eval(&[0.0]).unwrap().abs() < 1e-15);
        // Inside the smoothing window: |x|_eps' = 2x/eps.
        assert!((d.eval(&[0.2]).unwrap() - 0.4).abs() < 1e-14);
        assert!(steklov_partial(&field("abs(x1)", 1), 1.0, 1).is_err());
    }

    #[test]
    fn invalid_eps_rejected() {
        let f = field("abs(x1)", 1);
        for e in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(steklov_average(&f, e), Err(Error::Usage(_))));
        }
        assert!(MollificationSchedule::new(0.1, 1.0, 3).is_err());
        assert!(MollificationSchedule::new(0.1, 0.5, 0).is_err());
    }

    #[test]
    fn commutation_kinked_2d() {
        let f = field("abs(x1 - 0.3*x2) + max(x2, 0.2) * x1", 2);
        let eps = 0.37;
        for p in [[0.1, 0.2], [-0.4, 0.05], [0.33, -0.6]] {
            let avg = steklov_average(&f, eps).unwrap();
            for j in 0..2 {
                let face = steklov_partial(&f, eps, j).unwrap().eval(&p).unwrap();
                let h = 1e-5;
                let mut up = p;
                up[j] += h;
                let mut dn = p;
                dn[j] -= h;
                let fd = (avg.eval(&up).unwrap() - avg.eval(&dn).unwrap()) / (2.0 * h);
                assert!((face - fd).abs() < 1e-6, "{face} vs {fd}");
            }
        }
    }

    #[test]
    fn radial_bump_average_matches_polynomial_integral() {
        // bump on the unit disc centred at the origin, averaged over a square
        // well inside it: the integrand is a polynomial there.
        let f = field("bump(0, 1)", 2);
        let g = steklov_average(&f, 0.2).unwrap();
        let x = [0.1, -0.2];
        let poly = |a: f64, b: f64| (1.0 - a * a - b * b).powi(4);
        let rule = gauss_legendre(16);
        let inner = |a: f64| rule.integrate(x[1] - 0.1, x[1] + 0.1, |b| poly(a, b));
        let want = rule.integrate(x[0] - 0.1, x[0] + 0.1, inner) / 0.04;
        assert!((g.eval(&x).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn reflection_is_even() {
        let f = field("x1 * x2 + abs(x2 - 0.1)", 2);
        let r = reflect_even(&f).unwrap();
        assert_eq!(r.eval(&[0.3, -0.2]).unwrap(), f.eval(&[0.3, 0.2]).unwrap());
        let avg = steklov_average_with(&f, 0.2, Extension::EvenReflection).unwrap();
        let a = avg.eval(&[0.4, 0.05]).unwrap();
        let b = avg.eval(&[0.4, -0.05]).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn probe_on_smooth_field_converges() {
        let f = field("sin(x1) * x2 + x1^2", 2);
        let sched = MollificationSchedule::new(0.2, 0.5, 4).unwrap();
        let plan = SamplePlan::new(BoxRegion::cube(2, -1.0, 1.0).unwrap(), 64, 5);
        let r = convergence_probe(&f, &sched, &plan, 1e-2).unwrap();
        assert_eq!(r.fraction, vec![1.0, 1.0]);
        for j in 0..2 {
            for s in 1..4 {
                assert!(r.max_deviation[s][j] <= r.max_deviation[s - 1][j] + 1e-15);
            }
        }
    }

    #[test]
    fn boundary_probe_uses_tangential_axes() {
        let f = field("abs(x1) * (1 + x2)", 2);
        let sched = MollificationSchedule::new(0.1, 0.5, 3).unwrap();
        let plan = SamplePlan::new(BoxRegion::cube(1, 0.2, 0.9).unwrap(), 16, 1);
        let r = convergence_probe_boundary(&f, &sched, &plan, 1e-2, Extension::Free).unwrap();
        assert_eq!(r.fraction.len(), 1);
        assert_eq!(r.fraction[0], 1.0);
        // The reflected average has an O(eps) boundary error: eps/4 * |d1 f|.
        let r =
            convergence_probe_boundary(&f, &sched, &plan, 1e-2, Extension::EvenReflection).unwrap();
        let want = 0.025 / 4.0;
        assert!(
            (r.max_deviation[2][0] - want).abs() < 1e-12,
            "{:?}",
            r.max_deviation
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn contraction(eps in 0.05f64..0.8, c in -1.0f64..1.0) {
            let f = field(&format!("abs(x1 - {c}) + max(x1, x2)"), 2);
            let avg = steklov_average(&f, eps).unwrap();
            let plan = SamplePlan::new(BoxRegion::cube(2, -1.0, 1.0).unwrap(), 40, 3);
            let est = crate::fields::lipschitz_estimate(&avg, &plan).unwrap();
            prop_assert!(est <= 2.0 * (1.0 + 1e-9));
        }

        #[test]
        fn averaging_is_deterministic(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let f = field("min(abs(x1), x2) * bump([x1, x2], [0.2, 0], 0.9)", 2);
            let avg = steklov_average(&f, 0.3).unwrap();
            prop_assert_eq!(avg.eval(&[x, y]).unwrap().to_bits(), avg.eval(&[x, y]).unwrap().to_bits());
        }
    }
}
