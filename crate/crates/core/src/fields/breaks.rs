//! Non-smooth points of a tree restricted to an axis-parallel line.
//!
//! Quadrature over a segment is exact (up to rounding) only if the segment
//! is split where the integrand stops being polynomial. Every non-smooth
//! primitive knows where that happens: `abs(e)` at the zeros of `e`,
//! `min(a, b)` and `max(a, b)` at the zeros of `a - b`, piecewise-linear maps
//! at their knots, `bump` on its sphere and `plateau` at its two radii. Zeros
//! are located by sampling each smooth piece of the argument and refining
//! sign changes with the Illinois variant of regula falsi.

use std::sync::Arc;

use super::expr::Expr;

/// An axis-parallel segment `{point + (s - point[axis]) e_axis : a <= s <= b}`.
pub(crate) struct Line<'a> {
    pub point: &'a mut [f64],
    pub axis: usize,
    pub a: f64,
    pub b: f64,
}

impl Line<'_> {
    fn at(&mut self, e: &Expr, s: f64) -> f64 {
        self.point[self.axis] = s;
        e.eval(self.point)
    }
}

const SAMPLES_PER_PIECE: usize = 4;

fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
) -> f64 {
    for _ in 0..200 {
        let c = b - fb * (b - a) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) {
            c
        } else {
            0.5 * (a + b)
        };
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
        if (b - a).abs() <= 2.0 * f64::EPSILON * (1.0 + b.abs()) {
            break;
        }
    }
    b
}

/// Push the zeros of `f` in `(a, b)` onto `out`. `pieces` lists interior
/// points where `f` may itself be non-smooth.
fn zeros<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, pieces: &[f64], out: &mut Vec<f64>) {
    let mut edges = Vec::with_capacity(pieces.len() + 2);
    edges.push(a);
    edges.extend(pieces.iter().copied().filter(|&p| a < p && p < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);

    let mut prev: Option<(f64, f64)> = None;
    for w in edges.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        for i in 0..=SAMPLES_PER_PIECE {
            if i == 0 && prev.is_some() {
                continue;
            }
            let s = p + (q - p) * i as f64 / SAMPLES_PER_PIECE as f64;
            let v = f(s);
            if v == 0.0 {
                if a < s && s < b {
                    out.push(s);
                }
            } else if let Some((ps, pv)) = prev {
                if pv != 0.0 && pv * v < 0.0 {
                    out.push(refine(&mut f, ps, pv, s, v));
                }
            }
            prev = Some((s, v));
        }
    }
}

impl Expr {
    /// Append candidate non-smooth points of `s -> self(point with x_axis = s)`
    /// on `(a, b)` to `out`. The coordinate `point[axis]` is clobbered.
    pub(crate) fn line_breaks(&self, line: &mut Line<'_>, out: &mut Vec<f64>) {
        use Expr::*;
        let (a, b) = (line.a, line.b);
        match self {
            Const(_) | Coord(_) => {}
            Neg(e) | Scale(_, e) | Pow(e, _) | Sqrt(e) | Sin(e) | Cos(e) | Exp(e) => {
                e.line_breaks(line, out)
            }
            Add(p, q) | Sub(p, q) | Mul(p, q) | Div(p, q) | Atan2(p, q) => {
                p.line_breaks(line, out);
                q.line_breaks(line, out);
            }
            Abs(e) => {
                let child = collect(e, line);
                zeros(|s| line.at(e, s), a, b, &child, out);
                out.extend(child);
            }
            Min(p, q) | Max(p, q) => {
                let mut child = collect(p, line);
                child.extend(collect(q, line));
                zeros(|s| line.at(p, s) - line.at(q, s), a, b, &child, out);
                out.extend(child);
            }
            Pwl(e, m) => {
                let child = collect(e, line);
                for (x, _) in m.knots() {
                    zeros(|s| line.at(e, s) - x, a, b, &child, out);
                }
                out.extend(child);
            }
            Bump {
                args,
                center,
                radius,
            } => {
                let mut child = Vec::new();
                for e in args {
                    child.extend(collect(e, line));
                }
                let r2 = radius * radius;
                zeros(
                    |s| {
                        line.point[line.axis] = s;
                        let q: f64 = args
                            .iter()
                            .zip(center)
                            .map(|(e, c)| (e.eval(line.point) - c).powi(2))
                            .sum();
                        q / r2 - 1.0
                    },
                    a,
                    b,
                    &child,
                    out,
                );
                out.extend(child);
            }
            Plateau { arg, inner, outer } => {
                let child = collect(arg, line);
                zeros(|s| line.at(arg, s) - inner, a, b, &child, out);
                zeros(|s| line.at(arg, s) - outer, a, b, &child, out);
                out.extend(child);
            }
            // Averages are C1 with Lipschitz gradient; composition maps are
            // scanned but the inner tree is not.
            Steklov { .. } | Partial { .. } => {}
            Compose { map, .. } => {
                for e in map {
                    e.line_breaks(line, out);
                }
            }
        }
    }
}

fn collect(e: &Arc<Expr>, line: &mut Line<'_>) -> Vec<f64> {
    let mut v = Vec::new();
    e.line_breaks(line, &mut v);
    v
}

/// Sorted, de-duplicated breakpoints of `expr` along the segment, strictly
/// inside `(a, b)`.
pub(crate) fn sorted_breaks(
    expr: &Expr,
    point: &mut [f64],
    axis: usize,
    a: f64,
    b: f64,
) -> Vec<f64> {
    let saved = point[axis];
    let mut out = Vec::new();
    expr.line_breaks(&mut Line { point, axis, a, b }, &mut out);
    point[axis] = saved;
    finish(out, a, b)
}

pub(crate) fn finish(mut out: Vec<f64>, a: f64, b: f64) -> Vec<f64> {
    let tol = 1e-13 * (b - a).abs().max(1e-300);
    out.retain(|&s| s - a > tol && b - s > tol);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= tol);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::parse::parse_expr;

    fn breaks(src: &str, n: usize, point: &[f64], axis: usize, a: f64, b: f64) -> Vec<f64> {
        let e = parse_expr(src, n).unwrap();
        let mut p = point.to_vec();
        sorted_breaks(&e, &mut p, axis, a, b)
    }

    #[test]
    fn abs_kink_found_exactly() {
        let v = breaks("abs(x1 - 0.3)", 1, &[0.0], 0, -1.0, 1.0);
        assert_eq!(v.len(), 1);
        assert!((v[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn max_diagonal_kink() {
        let v = breaks("max(x1, 2*x2)", 2, &[0.0, 0.25], 0, -1.0, 1.0);
        assert_eq!(v.len(), 1);
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bump_sphere_crossings() {
        let v = breaks("bump([0, 0], 1)", 2, &[0.0, 0.6], 0, -2.0, 2.0);
        assert_eq!(v.len(), 2);
        assert!((v[0] + 0.8).abs() < 1e-13 && (v[1] - 0.8).abs() < 1e-13);
    }

    #[test]
    fn nested_kinks() {
        // abs(abs(x) - 0.5) has kinks at -0.5, 0, 0.5
        let v = breaks("abs(abs(x1) - 0.5)", 1, &[0.0], 0, -1.0, 1.0);
        assert_eq!(v.len(), 3);
        for (got, want) in v.iter().zip([-0.5, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn smooth_tree_has_none() {
        assert!(breaks("x1 * x2 + sin(x1)", 2, &[0.1, 0.2], 1, -1.0, 1.0).is_empty());
    }
}
