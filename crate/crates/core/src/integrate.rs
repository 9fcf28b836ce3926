//! Tensor-grid quadrature of top forms over boxes in `R^n` and `H^n`, and of
//! `(n-1)`-forms over the boundary hyperplane `x_n = 0`.
//!
//! Sums are parallel over slabs of the first axis. Slab sums are collected
//! in order and reduced pairwise, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::BoxRegion;
use crate::forms::FormSum;
use crate::quadrature::{gauss_legendre, MAX_ORDER};

/// Largest dimension accepted by [`Domain::new`].
pub const DEFAULT_MAX_DIM: usize = 4;

/// Coefficients larger than this on an outer face count as a support leak.
pub const LEAK_TOL: f64 = 1e-9;

/// Largest number of lattice intervals per axis used by leak checks.
const LEAK_LATTICE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    FullSpace,
    HalfSpace,
}

/// `R^n` or `H^n = {x_n >= 0}` truncated to a declared support box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    kind: DomainKind,
    support_box: BoxRegion,
    periodic: Vec<bool>,
}

impl Domain {
    pub fn new(kind: DomainKind, support_box: BoxRegion) -> Result<Self> {
        let n = support_box.dim();
        if n == 0 || n > DEFAULT_MAX_DIM {
            return Err(Error::usage(format!(
                "dimension must lie in 1..={DEFAULT_MAX_DIM}, got {n}"
            )));
        }
        if kind == DomainKind::HalfSpace && support_box.lo[n - 1] != 0.0 {
            return Err(Error::usage(format!(
                "half-space support box must start at x{n} = 0, got {}",
                support_box.lo[n - 1]
            )));
        }
        Ok(Domain {
            kind,
            periodic: vec![false; n],
            support_box,
        })
    }

    pub fn full_space(support_box: BoxRegion) -> Result<Self> {
        Domain::new(DomainKind::FullSpace, support_box)
    }

    pub fn half_space(support_box: BoxRegion) -> Result<Self> {
        Domain::new(DomainKind::HalfSpace, support_box)
    }

    /// Mark `axis` as periodic: its two faces are identified and are not
    /// checked for support leaks.
    pub fn with_periodic_axis(mut self, axis: usize) -> Result<Self> {
        let n = self.dim();
        if axis >= n || (self.kind == DomainKind::HalfSpace && axis == n - 1) {
            return Err(Error::usage(format!("axis {axis} cannot be periodic")));
        }
        self.periodic[axis] = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.support_box.dim()
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn support_box(&self) -> &BoxRegion {
        &self.support_box
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    /// The `x_n = 0` face as a box in `R^{n-1}`, for half-spaces with `n >= 2`.
    pub fn boundary_face(&self) -> Option<BoxRegion> {
        match self.kind {
            DomainKind::HalfSpace => self.support_box.face_of_last_axis(),
            DomainKind::FullSpace => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Midpoint,
    Gauss(usize),
}

impl QuadratureRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureRule::Gauss(q) if q == 0 || q > MAX_ORDER => Err(Error::usage(format!(
                "Gauss order must lie in 1..={MAX_ORDER}, got {q}"
            ))),
            _ => Ok(()),
        }
    }

    /// Nodes and weights on `[-1, 1]`.
    fn reference(&self) -> (&'static [f64], &'static [f64]) {
        match *self {
            QuadratureRule::Midpoint => (&[0.0], &[2.0]),
            QuadratureRule::Gauss(q) => {
                let r = gauss_legendre(q);
                (&r.nodes, &r.weights)
            }
        }
    }
}

/// Base cell count, rule and number of doubling levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cells_per_axis: usize,
    pub rule: QuadratureRule,
    pub refinement_levels: usize,
}

impl GridSpec {
    pub fn new(
        cells_per_axis: usize,
        rule: QuadratureRule,
        refinement_levels: usize,
    ) -> Result<Self> {
        let g = GridSpec {
            cells_per_axis,
            rule,
            refinement_levels,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_axis < 2 {
            return Err(Error::usage(format!(
                "need at least 2 cells per axis, got {}",
                self.cells_per_axis
            )));
        }
        if self.refinement_levels == 0 {
            return Err(Error::usage("need at least one refinement level"));
        }
        if self.cells_at(self.refinement_levels - 1).is_none() {
            return Err(Error::usage("cell count overflows"));
        }
        self.rule.validate()
    }

    /// `m * 2^level`.
    pub fn cells_at(&self, level: usize) -> Option<usize> {
        self.cells_per_axis
            .checked_mul(1usize.checked_shl(level as u32)?)
    }

    pub fn finest_cells(&self) -> usize {
        self.cells_at(self.refinement_levels - 1)
            .unwrap_or(usize::MAX)
    }
}

/// Boundary orientation. `Flipped` reverses the sign and exists to check
/// that the test suite catches orientation errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySign {
    #[default]
    Standard,
    Flipped,
}

/// `(-1)^n`: the outward normal `-e_n` followed by the standard frame of
/// `R^{n-1}` is positively oriented exactly when this is `+1`.
pub fn orientation_sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Per-axis breakpoints: `m` uniform cells merged with any extra cuts inside
/// the box.
fn axis_nodes(region: &BoxRegion, m: usize, cuts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..region.dim())
        .map(|a| {
            let (lo, hi) = (region.lo[a], region.hi[a]);
            let mut v: Vec<f64> = (0..=m)
                .map(|i| {
                    if i == m {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / m as f64
                    }
                })
                .collect();
            if let Some(extra) = cuts.get(a) {
                let tol = 1e-12 * (hi - lo);
                v.extend(
                    extra
                        .iter()
                        .copied()
                        .filter(|&c| c - lo > tol && hi - c > tol),
                );
                v.sort_by(f64::total_cmp);
                v.dedup_by(|x, y| (*x - *y).abs() <= tol);
            }
            v
        })
        .collect()
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Tensor quadrature of `f` over the product of the node partitions.
fn tensor_sum<F>(nodes: &[Vec<f64>], rule: QuadratureRule, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = nodes.len();
    if n == 0 {
        return f(&[]);
    }
    let (rn, rw) = rule.reference();
    let q = rn.len();
    let slabs: Vec<f64> = (0..nodes[0].len() - 1)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![0.0; n];
            let mut acc = 0.0;
            // Odometer over the remaining cells and the rule points of every axis.
            let mut cell = vec![0usize; n];
            let mut pt = vec![0usize; n];
            cell[0] = i0;
            'outer: loop {
                let mut w = 1.0;
                for a in 0..n {
                    let (lo, hi) = (nodes[a][cell[a]], nodes[a][cell[a] + 1]);
                    let hw = 0.5 * (hi - lo);
                    x[a] = 0.5 * (lo + hi) + hw * rn[pt[a]];
                    w *= hw * rw[pt[a]];
                }
                acc += w * f(&x);
                // Advance rule points fastest, then cells of axes 1.., never axis 0's cell.
                let mut a = n;
                loop {
                    if a == 0 {
                        break 'outer;
                    }
                    a -= 1;
                    pt[a] += 1;
                    if pt[a] < q {
                        continue 'outer;
                    }
                    pt[a] = 0;
                    if a > 0 {
                        cell[a] += 1;
                        if cell[a] < nodes[a].len() - 1 {
                            continue 'outer;
                        }
                        cell[a] = 0;
                    }
                }
            }
            acc
        })
        .collect();
    pairwise_sum(&slabs)
}

fn face_name(axis: usize, upper: bool, value: f64) -> String {
    format!(
        "x{} = {value} ({} face)",
        axis + 1,
        if upper { "upper" } else { "lower" }
    )
}

/// Sample `coef` on a lattice over each listed face of `region`.
fn check_faces<F>(region: &BoxRegion, faces: &[(usize, bool)], m: usize, coef: F) -> Result<()>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = region.dim();
    let k = m.clamp(1, LEAK_LATTICE);
    for &(axis, upper) in faces {
        let fixed = if upper {
            region.hi[axis]
        } else {
            region.lo[axis]
        };
        let free: Vec<usize> = (0..n).filter(|&a| a != axis).collect();
        let total = (k + 1).pow(free.len() as u32);
        let leak = (0..total).into_par_iter().find_map_first(|mut idx| {
            let mut x = vec![0.0; n];
            x[axis] = fixed;
            for &a in &free {
                let i = idx % (k + 1);
                idx /= k + 1;
                x[a] = region.lo[a] + region.width(a) * i as f64 / k as f64;
            }
            let v = coef(&x);
            (v.abs() > LEAK_TOL || !v.is_finite()).then_some((v, x))
        });
        if let Some((value, point)) = leak {
            return Err(Error::SupportLeak {
                face: face_name(axis, upper, fixed),
                value,
                point,
            });
        }
    }
    Ok(())
}

/// Check that the volume coefficient vanishes on the outer faces of the box.
pub fn check_interior_leak(dw: &FormSum, dom: &Domain, m: usize) -> Result<()> {
    let n = dom.dim();
    let faces: Vec<(usize, bool)> = (0..n)
        .filter(|&a| !dom.is_periodic(a))
        .flat_map(|a| [(a, false), (a, true)])
        .filter(|&(a, upper)| !(dom.kind == DomainKind::HalfSpace && a == n - 1 && !upper))
        .collect();
    let axes: Vec<usize> = (0..n).collect();
    check_faces(&dom.support_box, &faces, m, |x| {
        dw.coefficient_unchecked(&axes, x)
    })
}

/// Check that the tangential coefficient vanishes on the rim of the
/// boundary face.
pub fn check_boundary_leak(w: &FormSum, dom: &Domain, m: usize) -> Result<()> {
    let Some(face) = dom.boundary_face() else {
        return Ok(());
    };
    let n = dom.dim();
    let faces: Vec<(usize, bool)> = (0..n - 1)
        .filter(|&a| !dom.is_periodic(a))
        .flat_map(|a| [(a, false), (a, true)])
        .collect();
    let axes: Vec<usize> = (0..n - 1).collect();
    check_faces(&face, &faces, m, |xb| {
        let mut x = xb.to_vec();
        x.push(0.0);
        w.coefficient_unchecked(&axes, &x)
    })
    .map_err(|e| match e {
        Error::SupportLeak { face, value, point } => Error::SupportLeak {
            face: format!("boundary rim {face}"),
            value,
            point,
        },
        other => other,
    })
}

fn check_degree(form: &FormSum, dom: &Domain, degree: usize) -> Result<()> {
    Error::check_dim(dom.dim(), form.ambient())?;
    if form.degree() != degree {
        return Err(Error::usage(format!(
            "expected a form of degree {degree}, got degree {}",
            form.degree()
        )));
    }
    Ok(())
}

/// Integral of a top form over the support box at the grid's base level.
pub fn integrate_interior(dw: &FormSum, dom: &Domain, grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    integrate_interior_at(dw, dom, grid.cells_per_axis, grid.rule, &[])
}

/// Integral of a top form with `m` cells per axis, merged with the extra
/// per-axis `cuts`.
pub fn integrate_interior_at(
    dw: &FormSum,
    dom: &Domain,
    m: usize,
    rule: QuadratureRule,
    cuts: &[Vec<f64>],
) -> Result<f64> {
    check_degree(dw, dom, dom.dim())?;
    rule.validate()?;
    if m == 0 {
        return Err(Error::usage("need at least one cell per axis"));
    }
    if dw.terms().is_empty() {
        return Ok(0.0);
    }
    check_interior_leak(dw, dom, m)?;
    let nodes = axis_nodes(&dom.support_box, m, cuts);
    let axes: Vec<usize> = (0..dom.dim()).collect();
    Ok(tensor_sum(&nodes, rule, |x| {
        dw.coefficient_unchecked(&axes, x)
    }))
}

/// Oriented integral of an `(n-1)`-form over `x_n = 0` at the grid's base
/// level. Zero on full space.
pub fn integrate_boundary(w: &FormSum, dom: &Domain, grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    integrate_boundary_at(
        w,
        dom,
        grid.cells_per_axis,
        grid.rule,
        &[],
        BoundarySign::Standard,
    )
}

pub fn integrate_boundary_at(
    w: &FormSum,
    dom: &Domain,
    m: usize,
    rule: QuadratureRule,
    cuts: &[Vec<f64>],
    sign: BoundarySign,
) -> Result<f64> {
    let n = dom.dim();
    check_degree(w, dom, n - 1)?;
    rule.validate()?;
    if m == 0 {
        return Err(Error::usage("need at least one cell per axis"));
    }
    if dom.kind == DomainKind::FullSpace || w.terms().is_empty() {
        return Ok(0.0);
    }
    let sigma = orientation_sign(n)
        * match sign {
            BoundarySign::Standard => 1.0,
            BoundarySign::Flipped => -1.0,
        };
    if n == 1 {
        // H^1 = [0, inf) has the single boundary point 0.
        return Ok(sigma * w.coefficient_unchecked(&[], &[0.0]));
    }
    check_boundary_leak(w, dom, m)?;
    let face = dom
        .boundary_face()
        .ok_or_else(|| Error::usage("half-space has no boundary face"))?;
    let nodes = axis_nodes(&face, m, cuts);
    let axes: Vec<usize> = (0..n - 1).collect();
    let total = tensor_sum(&nodes, rule, |xb| {
        let mut x = [0.0; DEFAULT_MAX_DIM];
        x[..n - 1].copy_from_slice(xb);
        w.coefficient_unchecked(&axes, &x[..n])
    });
    Ok(sigma * total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRow {
    pub m: usize,
    pub value: f64,
}

/// Values at `m, 2m, 4m, ...` and the successive differences between them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub rows: Vec<RefinementRow>,
    pub differences: Vec<f64>,
}

pub fn refine_sequence<F>(mut op: F, m0: usize, levels: usize) -> Result<Refinement>
where
    F: FnMut(usize) -> Result<f64>,
{
    if levels < 2 {
        return Err(Error::usage("refinement needs at least two levels"));
    }
    let mut rows = Vec::with_capacity(levels);
    let mut m = m0;
    for _ in 0..levels {
        rows.push(RefinementRow { m, value: op(m)? });
        m = m
            .checked_mul(2)
            .ok_or_else(|| Error::usage("cell count overflows"))?;
    }
    let differences = rows.windows(2).map(|w| w[1].value - w[0].value).collect();
    Ok(Refinement { rows, differences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::SimpleForm;

    fn top(f: &str, n: usize) -> FormSum {
        let axes: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = axes.iter().map(String::as_str).collect();
        SimpleForm::parse(f, &refs, n).unwrap().into()
    }

    fn cube(n: usize, lo: f64, hi: f64) -> Domain {
        Domain::full_space(BoxRegion::cube(n, lo, hi).unwrap()).unwrap()
    }

    fn h2(lo: f64, hi: f64, top: f64) -> Domain {
        Domain::half_space(BoxRegion::new(vec![lo, 0.0], vec![hi, top]).unwrap()).unwrap()
    }

    /// Integral of the bump profile `(1 - t^2)^4` over `[-1, 1]` by 1-D
    /// Gauss quadrature.
    fn beta_integral() -> f64 {
        gauss_legendre(16).integrate(-1.0, 1.0, |t| (1.0 - t * t).powi(4))
    }

    #[test]
    fn beta_oracle_matches_closed_form() {
        assert!((beta_integral() - 256.0 / 315.0).abs() < 1e-15);
    }

    #[test]
    fn grid_and_domain_validation() {
        assert!(GridSpec::new(1, QuadratureRule::Midpoint, 2).is_err());
        assert!(GridSpec::new(4, QuadratureRule::Gauss(0), 2).is_err());
        assert!(GridSpec::new(4, QuadratureRule::Midpoint, 0).is_err());
        assert_eq!(
            GridSpec::new(4, QuadratureRule::Midpoint, 3)
                .unwrap()
                .finest_cells(),
            16
        );
        assert!(Domain::half_space(BoxRegion::cube(2, -1.0, 1.0).unwrap()).is_err());
        assert!(Domain::full_space(BoxRegion::cube(5, -1.0, 1.0).unwrap()).is_err());
        assert!(h2(-1.0, 1.0, 1.0).with_periodic_axis(1).is_err());
    }

    #[test]
    fn orientation_signs() {
        assert_eq!(orientation_sign(1), -1.0);
        assert_eq!(orientation_sign(2), 1.0);
        assert_eq!(orientation_sign(3), -1.0);
    }

    #[test]
    fn zero_coefficient_gives_zero() {
        let grid = GridSpec::new(8, QuadratureRule::Midpoint, 1).unwrap();
        assert_eq!(
            integrate_interior(&top("0", 2), &cube(2, -1.0, 1.0), &grid).unwrap(),
            0.0
        );
        let empty = FormSum::zero(2, 2).unwrap();
        assert_eq!(
            integrate_interior(&empty, &cube(2, -1.0, 1.0), &grid).unwrap(),
            0.0
        );
    }

    #[test]
    fn exact_form_on_full_space_vanishes() {
        let w = SimpleForm::parse("bump(0, 1)", &["x1"], 2).unwrap();
        let dw: FormSum = w.exterior_derivative().unwrap().into();
        let dom = cube(2, -2.0, 2.0);
        let grid = GridSpec::new(64, QuadratureRule::Midpoint, 1).unwrap();
        let v = integrate_interior(&dw, &dom, &grid).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
        assert_eq!(integrate_boundary(&w.into(), &dom, &grid).unwrap(), 0.0);
    }

    #[test]
    fn orientation_anchor_pair() {
        let w = SimpleForm::parse("bump(x1, 0, 1) * max(0, 1 - x2)", &["x1"], 2).unwrap();
        let dw: FormSum = w.exterior_derivative().unwrap().into();
        let dom = h2(-2.0, 2.0, 2.0);
        let grid = GridSpec::new(64, QuadratureRule::Gauss(8), 1).unwrap();
        let b = integrate_boundary(&w.into(), &dom, &grid).unwrap();
        let i = integrate_interior(&dw, &dom, &grid).unwrap();
        assert!((b - beta_integral()).abs() < 1e-12, "{b}");
        assert!((i - beta_integral()).abs() < 1e-12, "{i}");
    }

    #[test]
    fn boundary_of_x2_dx1_vanishes() {
        let w: FormSum = SimpleForm::parse("x2", &["x1"], 2).unwrap().into();
        let dom = h2(-1.0, 1.0, 1.0);
        let m = 4;
        assert_eq!(
            integrate_boundary_at(
                &w,
                &dom,
                m,
                QuadratureRule::Midpoint,
                &[],
                BoundarySign::Standard
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn half_line_boundary_is_minus_value_at_zero() {
        let w: FormSum = SimpleForm::parse("max(0, 1 - x1)", &[], 1).unwrap().into();
        let dom = Domain::half_space(BoxRegion::new(vec![0.0], vec![2.0]).unwrap()).unwrap();
        let grid = GridSpec::new(8, QuadratureRule::Midpoint, 1).unwrap();
        assert_eq!(integrate_boundary(&w, &dom, &grid).unwrap(), -1.0);
        let dw = w.exterior_derivative().unwrap();
        assert!((integrate_interior(&dw, &dom, &grid).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn support_leak_detected() {
        let dw = top("1", 2);
        let grid = GridSpec::new(8, QuadratureRule::Midpoint, 1).unwrap();
        match integrate_interior(&dw, &cube(2, -1.0, 1.0), &grid) {
            Err(Error::SupportLeak { face, .. }) => assert!(face.contains("x1")),
            other => panic!("{other:?}"),
        }
        let w: FormSum = SimpleForm::parse("1", &["x1"], 2).unwrap().into();
        assert!(matches!(
            integrate_boundary(&w, &h2(-1.0, 1.0, 1.0), &grid),
            Err(Error::SupportLeak { .. })
        ));
    }

    #[test]
    fn constant_integrand_is_level_independent() {
        let dw = top("bump([x1, x2], [0, 0], 10) * 0 + 2.5", 2);
        let dom = cube(2, -1.0, 1.0)
            .with_periodic_axis(0)
            .unwrap()
            .with_periodic_axis(1)
            .unwrap();
        let r = refine_sequence(
            |m| integrate_interior_at(&dw, &dom, m, QuadratureRule::Midpoint, &[]),
            4,
            4,
        )
        .unwrap();
        for row in &r.rows {
            assert!((row.value - 10.0).abs() < 1e-14);
        }
        assert!(refine_sequence(|_| Ok(0.0), 4, 1).is_err());
    }

    #[test]
    fn midpoint_exact_on_affine() {
        let dw = top("1 + 3*x1 - 2*x2 + x3", 3);
        let dom = cube(3, -1.0, 1.0)
            .with_periodic_axis(0)
            .unwrap()
            .with_periodic_axis(1)
            .unwrap()
            .with_periodic_axis(2)
            .unwrap();
        let v = integrate_interior_at(&dw, &dom, 5, QuadratureRule::Midpoint, &[]).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn abs_first_order_decay() {
        let dw = top("abs(x1 - 1/3)", 1);
        let dom = cube(1, -1.0, 1.0).with_periodic_axis(0).unwrap();
        let exact = 0.5 * (4.0 / 9.0 + 16.0 / 9.0);
        let r = refine_sequence(
            |m| integrate_interior_at(&dw, &dom, m, QuadratureRule::Midpoint, &[]),
            3,
            6,
        )
        .unwrap();
        let errs: Vec<f64> = r.rows.iter().map(|row| (row.value - exact).abs()).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(errs[5] < 1e-3);
        // Aligned kink: exact.
        let dw = top("abs(x1)", 1);
        let v = integrate_interior_at(&dw, &dom, 8, QuadratureRule::Midpoint, &[]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cuts_make_gauss_exact_on_kinks() {
        let dw = top("abs(x1 - 1/3) * x2^2", 2);
        let dom = cube(2, -1.0, 1.0)
            .with_periodic_axis(0)
            .unwrap()
            .with_periodic_axis(1)
            .unwrap();
        let exact = (4.0 / 9.0 + 16.0 / 9.0) * 0.5 * (2.0 / 3.0);
        let v = integrate_interior_at(&dw, &dom, 3, QuadratureRule::Gauss(2), &[vec![1.0 / 3.0]])
            .unwrap();
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn linearity() {
        let dom = cube(2, -1.0, 1.0)
            .with_periodic_axis(0)
            .unwrap()
            .with_periodic_axis(1)
            .unwrap();
        let a = SimpleForm::parse("abs(x1) * x2", &["x1", "x2"], 2).unwrap();
        let b = SimpleForm::parse("max(x1, x2)", &["x1", "x2"], 2).unwrap();
        let alpha = -1.7;
        let scaled = a
            .with_coefficient(crate::fields::ScalarField::parse("-1.7 * abs(x1) * x2", 2).unwrap())
            .unwrap();
        let sum = FormSum::new(2, 2, vec![scaled, b.clone()]).unwrap();
        let i = |w: FormSum| {
            integrate_interior_at(&w, &dom, 17, QuadratureRule::Gauss(3), &[]).unwrap()
        };
        let lhs = i(sum);
        let rhs = alpha * i(a.into()) + i(b.into());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn results_are_bit_reproducible() {
        let dw = top("sin(3*x1) * cos(x2) * x3 + abs(x1 - x2)", 3);
        let dom = cube(3, -1.0, 1.0)
            .with_periodic_axis(0)
            .unwrap()
            .with_periodic_axis(1)
            .unwrap()
            .with_periodic_axis(2)
            .unwrap();
        let a = integrate_interior_at(&dw, &dom, 12, QuadratureRule::Gauss(2), &[]).unwrap();
        let b = integrate_interior_at(&dw, &dom, 12, QuadratureRule::Gauss(2), &[]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
