//! Charts, pullbacks, partitions of unity and atlas-level Stokes checks.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{BoxRegion, Expr, SamplePlan, ScalarField};
use crate::forms::{determinant, FormSum, SimpleForm, MAX_AMBIENT};
use crate::integrate::{
    integrate_boundary_at, integrate_interior_at, BoundarySign, Domain, GridSpec,
};
use crate::report::{LevelRow, StokesReport};

/// Round-trip tolerance for chart inverses.
pub const INVERSE_TOL: f64 = 1e-10;

/// A chart `phi: U -> R^n or H^n` with an explicit inverse `psi`.
#[derive(Debug, Clone)]
pub struct Chart {
    pub label: String,
    forward: Vec<Arc<Expr>>,
    inverse: Vec<Arc<Expr>>,
    target: Domain,
}

impl Chart {
    pub fn new(
        label: impl Into<String>,
        forward: Vec<Arc<Expr>>,
        inverse: Vec<Arc<Expr>>,
        target: Domain,
    ) -> Result<Self> {
        let n = target.dim();
        Error::check_dim(n, forward.len())?;
        Error::check_dim(n, inverse.len())?;
        if forward.iter().chain(&inverse).any(|e| e.coord_span() > n) {
            return Err(Error::usage(format!(
                "chart components may only read x1..x{n}"
            )));
        }
        Ok(Chart {
            label: label.into(),
            forward,
            inverse,
            target,
        })
    }

    pub fn identity(label: impl Into<String>, target: Domain) -> Self {
        let id: Vec<Arc<Expr>> = (0..target.dim()).map(Expr::coord).collect();
        Chart {
            label: label.into(),
            forward: id.clone(),
            inverse: id,
            target,
        }
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &Domain {
        &self.target
    }

    pub fn forward(&self) -> &[Arc<Expr>] {
        &self.forward
    }

    pub fn inverse(&self) -> &[Arc<Expr>] {
        &self.inverse
    }

    pub fn apply_forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward.iter().map(|e| e.eval(x)).collect()
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        self.inverse.iter().map(|e| e.eval(y)).collect()
    }

    /// `det D psi (y)`.
    pub fn inverse_jacobian_det(&self, y: &[f64]) -> f64 {
        let n = self.dim();
        let mut buf = [0.0; MAX_AMBIENT * MAX_AMBIENT];
        for (r, e) in self.inverse.iter().enumerate() {
            for c in 0..n {
                buf[r * n + c] = e.partial(c, y);
            }
        }
        determinant(&mut buf[..n * n], n)
    }

    /// Largest round-trip error of `phi(psi(y))` and `psi(phi(psi(y)))` over
    /// the chart-coordinate points of `plan`. Errors when it exceeds
    /// [`INVERSE_TOL`].
    pub fn check_inverse(&self, plan: &SamplePlan) -> Result<f64> {
        Error::check_dim(self.dim(), plan.region.dim())?;
        let mut worst = 0.0f64;
        for y in plan.points()? {
            let x = self.apply_inverse(&y);
            let y2 = self.apply_forward(&x);
            let x2 = self.apply_inverse(&y2);
            let e = dist(&y, &y2).max(dist(&x, &x2));
            if !(e <= INVERSE_TOL) {
                return Err(Error::Config(format!(
                    "chart '{}': forward and inverse disagree by {e:e} at {y:?}",
                    self.label
                )));
            }
            worst = worst.max(e);
        }
        Ok(worst)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `(f o psi) d(g_1 o psi) ^ ... ^ d(g_k o psi)` with `psi` the chart inverse.
pub fn pullback(chart: &Chart, omega: &SimpleForm) -> Result<SimpleForm> {
    Error::check_dim(chart.dim(), omega.ambient())?;
    omega.map_fields(|f| f.compose(chart.inverse(), chart.dim()))
}

pub fn pullback_sum(chart: &Chart, omega: &FormSum) -> Result<FormSum> {
    Error::check_dim(chart.dim(), omega.ambient())?;
    omega.map_terms(|t| pullback(chart, t))
}

/// Multiply the coefficient of `omega` by `rho`. With a support box, a
/// Lipschitz bound for the new coefficient is propagated when both inputs
/// carry one.
pub fn scale_by_bump(
    rho: &ScalarField,
    omega: &SimpleForm,
    support: Option<&BoxRegion>,
) -> Result<SimpleForm> {
    Error::check_dim(omega.ambient(), rho.arity())?;
    let f = omega.coefficient_field();
    let mut g = ScalarField::new(rho.arity(), Expr::mul(rho.expr().clone(), f.expr().clone()))?
        .with_mode(f.mode());
    if let (Some(region), Some(lr), Some(lf)) = (support, rho.lip_bound(), f.lip_bound()) {
        let sup_f = f.range_over(region)?.mag();
        let sup_r = rho.range_over(region)?.mag();
        let bound = lr * sup_f + sup_r * lf;
        if bound.is_finite() {
            g = g.with_lip_bound(bound);
        }
    }
    omega.with_coefficient(g)
}

pub fn scale_sum_by_bump(rho: &ScalarField, omega: &FormSum) -> Result<FormSum> {
    omega.map_terms(|t| scale_by_bump(rho, t, None))
}

/// Charts with a partition of unity `rho_alpha` in ambient coordinates.
#[derive(Debug, Clone)]
pub struct Atlas {
    charts: Vec<Chart>,
    bumps: Vec<ScalarField>,
}

impl Atlas {
    pub fn new(charts: Vec<Chart>, bumps: Vec<ScalarField>) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::Partition("atlas has no charts".into()));
        }
        if charts.len() != bumps.len() {
            return Err(Error::Partition(format!(
                "{} charts but {} partition functions",
                charts.len(),
                bumps.len()
            )));
        }
        let n = charts[0].dim();
        for (c, b) in charts.iter().zip(&bumps) {
            Error::check_dim(n, c.dim())?;
            Error::check_dim(n, b.arity())?;
        }
        Ok(Atlas { charts, bumps })
    }

    /// One identity chart with `rho = 1`.
    pub fn single(chart: Chart) -> Self {
        let n = chart.dim();
        Atlas {
            charts: vec![chart],
            bumps: vec![ScalarField::constant(n, 1.0)],
        }
    }

    pub fn dim(&self) -> usize {
        self.charts[0].dim()
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn bumps(&self) -> &[ScalarField] {
        &self.bumps
    }

    /// Largest `|sum rho - 1|` over the ambient points of `plan`. Fails with a
    /// partition error beyond `tol` or on a negative `rho`.
    pub fn check_partition(&self, plan: &SamplePlan, tol: f64) -> Result<f64> {
        Error::check_dim(self.dim(), plan.region.dim())?;
        let mut worst = 0.0f64;
        for x in plan.points()? {
            let mut sum = 0.0;
            for (c, rho) in self.charts.iter().zip(&self.bumps) {
                let v = rho.eval_unchecked(&x);
                if !(v >= -tol) {
                    return Err(Error::Partition(format!(
                        "partition function of chart '{}' is {v:e} at {x:?}",
                        c.label
                    )));
                }
                sum += v;
            }
            let dev = (sum - 1.0).abs();
            if !(dev <= tol) {
                return Err(Error::Partition(format!(
                    "partition sums to {sum} at {x:?}"
                )));
            }
            worst = worst.max(dev);
        }
        Ok(worst)
    }

    /// `pullback(chart_alpha, rho_alpha omega)` for every chart.
    pub fn localize(&self, omega: &FormSum) -> Result<Vec<FormSum>> {
        Error::check_dim(self.dim(), omega.ambient())?;
        self.charts
            .iter()
            .zip(&self.bumps)
            .map(|(c, rho)| pullback_sum(c, &scale_sum_by_bump(rho, omega)?))
            .collect()
    }
}

/// Partition-sum tolerance used by [`stokes_manifold`].
pub const PARTITION_TOL: f64 = 1e-9;

/// Options for [`stokes_manifold`] beyond the grid.
#[derive(Debug, Clone, Default)]
pub struct AtlasOptions {
    /// Ambient points where the partition of unity is checked.
    pub partition_plan: Option<SamplePlan>,
    /// Extra quadrature cuts per chart, indexed like the charts.
    pub cuts: Vec<Vec<Vec<f64>>>,
    pub sign: BoundarySign,
}

/// Chart-by-chart boundary and interior integrals at `m` cells per axis.
pub fn atlas_integrals(
    atlas: &Atlas,
    local: &[FormSum],
    m: usize,
    grid: &GridSpec,
    opts: &AtlasOptions,
) -> Result<(f64, f64)> {
    let parts: Vec<Result<(f64, f64)>> = atlas
        .charts
        .par_iter()
        .zip(local)
        .enumerate()
        .map(|(i, (chart, w))| {
            let cuts = opts.cuts.get(i).map(Vec::as_slice).unwrap_or(&[]);
            let b = integrate_boundary_at(w, chart.target(), m, grid.rule, cuts, opts.sign)?;
            let i = if w.degree() < w.ambient() {
                integrate_interior_at(
                    &w.exterior_derivative()?,
                    chart.target(),
                    m,
                    grid.rule,
                    cuts,
                )?
            } else {
                0.0
            };
            Ok((b, i))
        })
        .collect();
    let mut boundary = 0.0;
    let mut interior = 0.0;
    for p in parts {
        let (b, i) = p?;
        boundary += b;
        interior += i;
    }
    Ok((boundary, interior))
}

/// Sum of the chart-local Stokes integrals over the grid's refinement levels.
pub fn stokes_manifold(
    name: &str,
    atlas: &Atlas,
    omega: &FormSum,
    grid: &GridSpec,
    opts: &AtlasOptions,
) -> Result<StokesReport> {
    grid.validate()?;
    if let Some(plan) = &opts.partition_plan {
        atlas.check_partition(plan, PARTITION_TOL)?;
    }
    let local = atlas.localize(omega)?;
    let mut rows = Vec::with_capacity(grid.refinement_levels);
    for level in 0..grid.refinement_levels {
        let m = grid
            .cells_at(level)
            .ok_or_else(|| Error::usage("cell count overflows"))?;
        let (b, i) = atlas_integrals(atlas, &local, m, grid, opts)?;
        rows.push(LevelRow::new(level, m, b, i));
    }
    StokesReport::from_levels(name, rows)
}

/// Largest `|vol(d psi^* omega)(y) - vol(d omega)(psi(y)) det D psi(y)|`
/// over `points` in chart coordinates.
pub fn naturality_defect(chart: &Chart, omega: &SimpleForm, points: &[Vec<f64>]) -> Result<f64> {
    let n = chart.dim();
    if omega.degree() + 1 != n {
        return Err(Error::usage("naturality check needs an (n-1)-form"));
    }
    let lhs = pullback(chart, omega)?.exterior_derivative()?;
    let dw = omega.exterior_derivative()?;
    let mut worst = 0.0f64;
    for y in points {
        Error::check_dim(n, y.len())?;
        let a = lhs.volume_coefficient(y)?;
        let x = chart.apply_inverse(y);
        let b = dw.volume_coefficient(&x)? * chart.inverse_jacobian_det(y);
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::parse_expr;
    use crate::integrate::{integrate_boundary, integrate_interior, QuadratureRule};
    use std::f64::consts::PI;

    fn exprs(src: &[&str], n: usize) -> Vec<Arc<Expr>> {
        src.iter().map(|s| parse_expr(s, n).unwrap()).collect()
    }

    fn collar() -> Chart {
        let target = Domain::half_space(BoxRegion::new(vec![-PI, 0.0], vec![PI, 0.5]).unwrap())
            .unwrap()
            .with_periodic_axis(0)
            .unwrap();
        Chart::new(
            "collar",
            exprs(&["atan2(x2, x1)", "1 - sqrt(x1^2 + x2^2)"], 2),
            exprs(&["(1 - x2) * cos(x1)", "(1 - x2) * sin(x1)"], 2),
            target,
        )
        .unwrap()
    }

    fn plan(lo: [f64; 2], hi: [f64; 2], count: usize, seed: u64) -> SamplePlan {
        SamplePlan::new(
            BoxRegion::new(lo.to_vec(), hi.to_vec()).unwrap(),
            count,
            seed,
        )
    }

    #[test]
    fn identity_pullback_is_pointwise_equal() {
        let id = Chart::identity(
            "id",
            Domain::full_space(BoxRegion::cube(2, -1.0, 1.0).unwrap()).unwrap(),
        );
        let w = SimpleForm::parse("abs(x1) * x2", &["max(x1, x2)"], 2).unwrap();
        let p = pullback(&id, &w).unwrap();
        let i = crate::forms::MultiIndex::new(vec![0], 2).unwrap();
        for y in plan([-1.0, -1.0], [1.0, 1.0], 40, 2).points().unwrap() {
            assert_eq!(
                p.coefficient(&i, &y).unwrap(),
                w.coefficient(&i, &y).unwrap()
            );
        }
    }

    #[test]
    fn translation_pullback() {
        let dom = Domain::full_space(BoxRegion::cube(2, -1.0, 1.0).unwrap()).unwrap();
        let t = Chart::new(
            "shift",
            exprs(&["x1 - 0.5", "x2 + 2"], 2),
            exprs(&["x1 + 0.5", "x2 - 2"], 2),
            dom,
        )
        .unwrap();
        let w = SimpleForm::parse("x1", &["x2"], 2).unwrap();
        let p = pullback(&t, &w).unwrap();
        let i = crate::forms::MultiIndex::new(vec![1], 2).unwrap();
        assert_eq!(p.coefficient(&i, &[0.25, 0.0]).unwrap(), 0.75);
        assert!(
            t.check_inverse(&plan([-1.0, -1.0], [1.0, 1.0], 20, 1))
                .unwrap()
                < 1e-15
        );
    }

    #[test]
    fn polar_pullback_matches_chain_rule_oracle() {
        let c = collar();
        let w = SimpleForm::parse("x1", &["x2"], 2).unwrap();
        let p = pullback(&c, &w).unwrap();
        for y in plan([-3.0, 0.0], [3.0, 0.5], 50, 9).points().unwrap() {
            let (t, s) = (y[0], y[1]);
            // x1 = (1 - s) cos t, x2 = (1 - s) sin t, so the coefficient of
            // dy_j is x1 * d x2 / d y_j.
            let x1 = (1.0 - s) * t.cos();
            let oracle = [x1 * (1.0 - s) * t.cos(), x1 * -t.sin()];
            for (j, want) in oracle.iter().enumerate() {
                let i = crate::forms::MultiIndex::new(vec![j], 2).unwrap();
                assert!((p.coefficient(&i, &y).unwrap() - want).abs() < 1e-8);
            }
        }
        assert!(
            c.check_inverse(&plan([-3.1, 0.0], [3.1, 0.5], 100, 4))
                .unwrap()
                < 1e-12
        );
    }

    #[test]
    fn naturality_smooth_and_kinked() {
        let c = collar();
        let pts = plan([-3.0, 0.01], [3.0, 0.49], 50, 3).points().unwrap();
        let smooth = SimpleForm::parse("x1 * exp(x2)", &["x2^2 + x1"], 2).unwrap();
        assert!(naturality_defect(&c, &smooth, &pts).unwrap() < 1e-8);
        let kinked = SimpleForm::parse("abs(x1 - 0.1)", &["max(x1, x2)"], 2).unwrap();
        assert!(naturality_defect(&c, &kinked, &pts).unwrap() < 1e-5);
    }

    #[test]
    fn bad_inverse_rejected() {
        let dom = Domain::full_space(BoxRegion::cube(1, -1.0, 1.0).unwrap()).unwrap();
        let c = Chart::new("bad", exprs(&["2 * x1"], 1), exprs(&["x1"], 1), dom).unwrap();
        let p = SamplePlan::new(BoxRegion::cube(1, -1.0, 1.0).unwrap(), 10, 0);
        assert!(matches!(c.check_inverse(&p), Err(Error::Config(_))));
    }

    #[test]
    fn scale_by_bump_examples() {
        let w = SimpleForm::parse("x1 + 1", &["x2"], 2).unwrap();
        let one = ScalarField::constant(2, 1.0);
        let same = scale_by_bump(&one, &w, None).unwrap();
        assert!(Arc::ptr_eq(
            same.coefficient_field().expr(),
            w.coefficient_field().expr()
        ));
        let zero = scale_by_bump(&ScalarField::constant(2, 0.0), &w, None).unwrap();
        assert!(zero.coefficient_field().expr().is_zero());

        let dx1 = SimpleForm::parse("1", &["x1"], 2).unwrap();
        let rho = ScalarField::parse("bump(0, 1)", 2).unwrap();
        let s = scale_by_bump(&rho, &dx1, None).unwrap();
        let i = crate::forms::MultiIndex::new(vec![0], 2).unwrap();
        assert_eq!(
            s.coefficient(&i, &[0.3, 0.1]).unwrap(),
            rho.eval(&[0.3, 0.1]).unwrap()
        );

        let region = BoxRegion::cube(2, -1.0, 1.0).unwrap();
        let rho = rho.with_lip_bound(2.0);
        let f = SimpleForm::new(
            ScalarField::parse("x1", 2).unwrap().with_lip_bound(1.0),
            vec![ScalarField::coordinate(2, 1).unwrap()],
        )
        .unwrap();
        let s = scale_by_bump(&rho, &f, Some(&region)).unwrap();
        let b = s.coefficient_field().lip_bound().unwrap();
        assert!((2.0..=3.0 + 1e-12).contains(&b), "{b}");
    }

    #[test]
    fn single_identity_chart_is_bit_identical() {
        let dom =
            Domain::half_space(BoxRegion::new(vec![-2.0, 0.0], vec![2.0, 2.0]).unwrap()).unwrap();
        let w: FormSum = SimpleForm::parse("bump(x1, 0, 1) * max(0, 1 - x2)", &["x1"], 2)
            .unwrap()
            .into();
        let grid = GridSpec::new(32, QuadratureRule::Midpoint, 2).unwrap();
        let atlas = Atlas::single(Chart::identity("id", dom.clone()));
        let rep = stokes_manifold("single", &atlas, &w, &grid, &AtlasOptions::default()).unwrap();
        for (level, row) in rep.levels.iter().enumerate() {
            let g = GridSpec {
                cells_per_axis: grid.cells_at(level).unwrap(),
                ..grid
            };
            let b = integrate_boundary(&w, &dom, &g).unwrap();
            let i = integrate_interior(&w.exterior_derivative().unwrap(), &dom, &g).unwrap();
            assert_eq!(row.boundary_integral.to_bits(), b.to_bits());
            assert_eq!(row.interior_integral.to_bits(), i.to_bits());
        }
    }

    fn disk_atlas(r_in: (f64, f64), r_out: (f64, f64)) -> Atlas {
        let inner = format!(
            "plateau(x1^2 + x2^2, {}, {})",
            r_in.0 * r_in.0,
            r_in.1 * r_in.1
        );
        let outer = format!(
            "plateau(-(x1^2 + x2^2), {}, {})",
            -r_out.1 * r_out.1,
            -r_out.0 * r_out.0
        );
        let total = format!("({inner}) + ({outer})");
        let rho_in = ScalarField::parse(&format!("({inner}) / ({total})"), 2).unwrap();
        let rho_out = ScalarField::parse(&format!("({outer}) / ({total})"), 2).unwrap();
        let interior = Chart::identity(
            "interior",
            Domain::full_space(BoxRegion::cube(2, -1.0, 1.0).unwrap()).unwrap(),
        );
        Atlas::new(vec![interior, collar()], vec![rho_in, rho_out]).unwrap()
    }

    #[test]
    fn disk_area_by_two_charts() {
        let atlas = disk_atlas((0.6, 0.8), (0.55, 0.7));
        let p = plan([-0.7, -0.7], [0.7, 0.7], 400, 5);
        assert!(atlas.check_partition(&p, 1e-12).unwrap() <= 1e-12);
        let w: FormSum = SimpleForm::parse("x1", &["x2"], 2).unwrap().into();
        let grid = GridSpec::new(32, QuadratureRule::Gauss(4), 2).unwrap();
        let rep = stokes_manifold("disk", &atlas, &w, &grid, &AtlasOptions::default()).unwrap();
        assert!(
            (rep.boundary_integral - PI).abs() < 1e-10,
            "{}",
            rep.boundary_integral
        );
        assert!(
            (rep.interior_integral - PI).abs() < 1e-3,
            "{}",
            rep.interior_integral
        );
        assert!(rep.relative_residual < 1e-3);
    }

    #[test]
    fn partition_errors() {
        let dom = Domain::full_space(BoxRegion::cube(2, -1.0, 1.0).unwrap()).unwrap();
        let c = Chart::identity("id", dom);
        let atlas = Atlas::new(vec![c.clone()], vec![ScalarField::constant(2, 0.9)]).unwrap();
        let p = plan([-0.5, -0.5], [0.5, 0.5], 10, 1);
        assert!(matches!(
            atlas.check_partition(&p, 1e-9),
            Err(Error::Partition(_))
        ));
        assert!(matches!(
            Atlas::new(vec![c], vec![]),
            Err(Error::Partition(_))
        ));
    }
}
