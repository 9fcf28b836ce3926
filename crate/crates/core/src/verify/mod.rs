//! Scenario runner and the built-in verification suite.

pub mod catalog;
pub mod scenario;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{sorted_breaks, BoxRegion, ScalarField};
use crate::forms::FormSum;
use crate::integrate::{
    integrate_boundary_at, integrate_interior_at, BoundarySign, DomainKind, GridSpec,
    QuadratureRule,
};
use crate::manifold::{stokes_manifold, AtlasOptions};
use crate::mollify::{mollify_form_with, reflect_even, Extension};
use crate::report::{LevelRow, MollificationRow, StokesReport};

pub use scenario::{Expected, MollificationSpec, Scenario, Setting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_LEAK: i32 = 3;

/// Residual changes below this are treated as rounding noise when checking
/// that residuals do not increase under refinement.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Largest `|interior|` accepted for exact forms on full space.
pub const EXACT_FORM_TOL: f64 = 1e-6;

/// Largest deviation of the final mollified integrals from the unmollified ones.
pub const MOLLIFIED_LIMIT_TOL: f64 = 5e-3;

/// Gauss order for mollified integrals, which are exact on each piece
/// between kink cuts.
const MOLLIFIED_RULE: QuadratureRule = QuadratureRule::Gauss(8);

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SupportLeak { .. } => EXIT_LEAK,
        _ => EXIT_CONFIG,
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub levels: Option<usize>,
    pub cells: Option<usize>,
    pub seed: Option<u64>,
    pub sign: BoundarySign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// A report and the checks applied to it.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub report: StokesReport,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_TOLERANCE
        }
    }
}

/// Load and run a scenario file with default options.
pub fn run_scenario(path: &Path) -> Result<StokesReport> {
    let s = Scenario::load(path)?;
    Ok(verify_scenario(&s, &RunOptions::default())?.report)
}

fn effective_grid(s: &Scenario, opts: &RunOptions) -> Result<GridSpec> {
    let g = GridSpec {
        cells_per_axis: opts.cells.unwrap_or(s.grid.cells_per_axis),
        refinement_levels: opts.levels.unwrap_or(s.grid.refinement_levels),
        rule: s.grid.rule,
    };
    g.validate()?;
    Ok(g)
}

/// Boundary and interior integrals over the refinement ladder, plus the
/// mollification rows when the scenario has a schedule.
pub fn compute_report(s: &Scenario, opts: &RunOptions) -> Result<StokesReport> {
    let grid = effective_grid(s, opts)?;
    let report = match &s.setting {
        Setting::Flat(dom) => {
            let dw = s.form.exterior_derivative()?;
            let mut rows = Vec::with_capacity(grid.refinement_levels);
            for level in 0..grid.refinement_levels {
                let m = grid
                    .cells_at(level)
                    .ok_or_else(|| Error::usage("cell count overflows"))?;
                let b = integrate_boundary_at(&s.form, dom, m, grid.rule, &[], opts.sign)?;
                let i = integrate_interior_at(&dw, dom, m, grid.rule, &[])?;
                rows.push(LevelRow::new(level, m, b, i));
            }
            StokesReport::from_levels(&s.name, rows)?
        }
        Setting::Atlas { atlas, .. } => {
            let mut plan = s.partition_plan();
            if let (Some(p), Some(seed)) = (plan.as_mut(), opts.seed) {
                p.jitter_seed = seed;
            }
            let aopts = AtlasOptions {
                partition_plan: plan,
                cuts: Vec::new(),
                sign: opts.sign,
            };
            stokes_manifold(&s.name, atlas, &s.form, &grid, &aopts)?
        }
    };
    match &s.mollification {
        Some(spec) => {
            let (reference, rows) = mollification_rows(s, spec, opts.sign)?;
            Ok(report.with_mollification(reference, rows))
        }
        None => Ok(report),
    }
}

/// Quadrature cuts along each axis at the kinks of `fields` and at the
/// kinks shifted by `+-eps/2`, where averaged integrands change pieces.
///
/// Kinks are located along a lattice of axis-parallel lines through the box.
pub fn kink_cuts(fields: &[ScalarField], region: &BoxRegion, eps: f64) -> Vec<Vec<f64>> {
    const LINES: usize = 4;
    let n = region.dim();
    (0..n)
        .map(|axis| {
            let others: Vec<usize> = (0..n).filter(|&a| a != axis).collect();
            let lines = LINES.pow(others.len() as u32);
            let (lo, hi) = (region.lo[axis] - eps, region.hi[axis] + eps);
            let mut cuts = Vec::new();
            for mut idx in 0..lines {
                let mut p = vec![0.0; n];
                for &a in &others {
                    let i = idx % LINES;
                    idx /= LINES;
                    p[a] = region.lo[a] + region.width(a) * (i as f64 + 0.5) / LINES as f64;
                }
                for f in fields {
                    for c in sorted_breaks(f.expr(), &mut p, axis, lo, hi) {
                        cuts.extend([c, c - 0.5 * eps, c + 0.5 * eps]);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts
        })
        .collect()
}

/// Integrals of `omega_s` and `d omega_s` for every epsilon of the schedule,
/// and of the unmollified form with the same quadrature.
pub fn mollification_rows(
    s: &Scenario,
    spec: &MollificationSpec,
    sign: BoundarySign,
) -> Result<(MollificationRow, Vec<MollificationRow>)> {
    let dom = s
        .flat_domain()
        .ok_or_else(|| Error::Config("mollification needs a flat scenario".into()))?;
    let region = dom.support_box();
    let fields = match spec.extension {
        Extension::Free => s.fields(),
        Extension::EvenReflection => s
            .fields()
            .iter()
            .map(reflect_even)
            .collect::<Result<Vec<_>>>()?,
    };
    let integrals = |w: &FormSum, cuts: &[Vec<f64>]| -> Result<(f64, f64)> {
        let b = integrate_boundary_at(w, dom, spec.cells, MOLLIFIED_RULE, cuts, sign)?;
        let i = integrate_interior_at(
            &w.exterior_derivative()?,
            dom,
            spec.cells,
            MOLLIFIED_RULE,
            cuts,
        )?;
        Ok((b, i))
    };
    let (b0, i0) = integrals(&s.form, &kink_cuts(&fields, region, 0.0))?;
    let rows = spec
        .schedule
        .values()
        .into_iter()
        .map(|eps| {
            let w = s
                .form
                .map_terms(|t| mollify_form_with(t, eps, spec.extension))?;
            let (b, i) = integrals(&w, &kink_cuts(&fields, region, eps))?;
            Ok(MollificationRow::new(eps, b, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((MollificationRow::new(0.0, b0, i0), rows))
}

/// Deviations `|boundary_s - boundary|` and `|interior_s - interior|`.
pub fn mollified_deviations(report: &StokesReport) -> Option<(Vec<f64>, Vec<f64>)> {
    let r = report.unmollified.as_ref()?;
    Some((
        report
            .mollification
            .iter()
            .map(|m| (m.boundary_integral - r.boundary_integral).abs())
            .collect(),
        report
            .mollification
            .iter()
            .map(|m| (m.interior_integral - r.interior_integral).abs())
            .collect(),
    ))
}

/// True when the last three entries never increase.
fn approaches(dev: &[f64]) -> bool {
    dev[dev.len().saturating_sub(3)..]
        .windows(2)
        .all(|w| w[1] <= w[0])
}

/// Run a scenario and apply its checks.
pub fn verify_scenario(s: &Scenario, opts: &RunOptions) -> Result<Verdict> {
    let report = compute_report(s, opts)?;
    let mut checks = Vec::new();
    checks.push(Check::new(
        "residual",
        report.relative_residual <= s.tolerance,
        format!(
            "relative residual {:.3e} (tolerance {:.0e})",
            report.relative_residual, s.tolerance
        ),
    ));
    let flat = matches!(s.setting, Setting::Flat(_));
    if flat && report.levels.len() >= 3 {
        checks.push(Check::new(
            "refinement",
            report.residuals_settle(3, RESIDUAL_FLOOR * (1.0 + report.interior_integral.abs())),
            format!(
                "last three relative residuals {:?}",
                tail(&report.relative_residuals(), 3)
            ),
        ));
    }
    if let Setting::Flat(dom) = &s.setting {
        if dom.kind() == DomainKind::FullSpace {
            checks.push(Check::new(
                "exact form",
                report.boundary_integral == 0.0 && report.interior_integral.abs() <= EXACT_FORM_TOL,
                format!(
                    "boundary {:e}, interior {:e}",
                    report.boundary_integral, report.interior_integral
                ),
            ));
        }
    }
    if let Some(e) = &s.expected {
        for (what, want, got) in [
            ("boundary", e.boundary, report.boundary_integral),
            ("interior", e.interior, report.interior_integral),
        ] {
            if let Some(want) = want {
                checks.push(Check::new(
                    &format!("expected {what}"),
                    (got - want).abs() <= e.tolerance,
                    format!("{got:.12} vs {want:.12}"),
                ));
            }
        }
    }
    if let Some((db, di)) = mollified_deviations(&report) {
        let (lb, li) = (*db.last().unwrap_or(&0.0), *di.last().unwrap_or(&0.0));
        checks.push(Check::new(
            "mollified limit",
            lb <= MOLLIFIED_LIMIT_TOL
                && li <= MOLLIFIED_LIMIT_TOL
                && approaches(&db)
                && approaches(&di),
            format!("final deviations {lb:.3e} (boundary), {li:.3e} (interior)"),
        ));
    }
    Ok(Verdict { report, checks })
}

fn tail(v: &[f64], k: usize) -> Vec<f64> {
    v[v.len().saturating_sub(k)..].to_vec()
}

/// One line of the suite table.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub name: String,
    pub dimension: usize,
    pub setting: &'static str,
    pub passed: bool,
    pub exit_code: i32,
    pub relative_residual: Option<f64>,
    pub seconds: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
    pub seconds: f64,
}

impl SuiteSummary {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn exit_code(&self) -> i32 {
        self.rows
            .iter()
            .map(|r| r.exit_code)
            .find(|&c| c != EXIT_OK)
            .unwrap_or(EXIT_OK)
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<24} {:>3} {:<10} {:>12} {:>8}  {}\n",
            "scenario", "n", "setting", "rel.resid", "seconds", "status"
        );
        for r in &self.rows {
            let rel = r
                .relative_residual
                .map(|v| format!("{v:.3e}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<24} {:>3} {:<10} {:>12} {:>8.2}  {}{}\n",
                r.name,
                r.dimension,
                r.setting,
                rel,
                r.seconds,
                if r.passed { "PASS" } else { "FAIL" },
                if r.message.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", r.message)
                }
            ));
        }
        out.push_str(&format!(
            "{} of {} passed in {:.1} s\n",
            self.rows.iter().filter(|r| r.passed).count(),
            self.rows.len(),
            self.seconds
        ));
        out
    }
}

fn setting_name(s: &Scenario) -> &'static str {
    match &s.setting {
        Setting::Flat(d) if d.kind() == DomainKind::HalfSpace => "half",
        Setting::Flat(_) => "full",
        Setting::Atlas { .. } => "atlas",
    }
}

/// Run every catalog scenario whose name contains `filter`.
pub fn run_suite(filter: Option<&str>, opts: &RunOptions) -> Result<SuiteSummary> {
    let start = Instant::now();
    let scenarios: Vec<Scenario> = catalog::scenarios()?
        .into_iter()
        .filter(|s| filter.is_none_or(|f| s.name.contains(f)))
        .collect();
    let rows = scenarios
        .par_iter()
        .map(|s| {
            let t = Instant::now();
            let (passed, exit_code, rel, message) = match verify_scenario(s, opts) {
                Ok(v) => {
                    let failed: Vec<String> = v
                        .checks
                        .iter()
                        .filter(|c| !c.passed)
                        .map(|c| format!("{}: {}", c.name, c.detail))
                        .collect();
                    (
                        v.passed(),
                        v.exit_code(),
                        Some(v.report.relative_residual),
                        failed.join("; "),
                    )
                }
                Err(e) => (false, exit_code(&e), None, e.to_string()),
            };
            SuiteRow {
                name: s.name.clone(),
                dimension: s.dimension,
                setting: setting_name(s),
                passed,
                exit_code,
                relative_residual: rel,
                seconds: t.elapsed().as_secs_f64(),
                message,
            }
        })
        .collect();
    Ok(SuiteSummary {
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}
