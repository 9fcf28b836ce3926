//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! name = "h2_anchor"
//! dimension = 2
//! domain = "half_space"              # or "full_space"
//! support_box = { lo = [-2, 0], hi = [2, 2] }
//! periodic = []                      # 1-based axes whose faces are identified
//! tolerance = 1e-3                   # on the finest relative residual
//! seed = 0                           # jitter seed for sampled checks
//!
//! [grid]
//! cells = 32                         # at the coarsest level
//! levels = 4                         # cells double per level
//! rule = "midpoint"                  # or "gauss:<order>"
//!
//! [[form]]                           # omega is the sum of all [[form]] terms
//! coefficient = "bump(x1, 0, 1) * max(0, 1 - x2)"
//! factors = ["x1"]
//!
//! [mollification]                    # optional
//! eps0 = 0.5
//! ratio = 0.5
//! count = 8
//! cells = 16
//!
//! [expected]                         # optional
//! boundary = "256/315"
//! interior = "256/315"
//! tolerance = 1e-6
//! ```
//!
//! Atlas scenarios replace `domain`, `support_box` and `periodic` by an
//! `[atlas]` table with one `[[atlas.chart]]` per chart, each carrying
//! `forward`, `inverse`, `domain`, `support_box`, `periodic` and its
//! `partition` function in ambient coordinates, plus an optional
//! `partition_region` and `partition_points` for the partition check.
//! Numbers in boxes and expected values may be constant expressions such as
//! `"pi"` or `"256/315"`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fields::{parse_constant, parse_expr, BoxRegion, SamplePlan, ScalarField};
use crate::forms::{FormSum, SimpleForm};
use crate::integrate::{Domain, DomainKind, GridSpec, QuadratureRule};
use crate::manifold::{Atlas, Chart};
use crate::mollify::{Extension, MollificationSchedule};

pub const SCHEMA_VERSION: u32 = 1;

/// Default tolerance on the finest relative residual.
pub const FLAT_TOLERANCE: f64 = 1e-3;
pub const ATLAS_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Num {
    Float(f64),
    Text(String),
}

impl Num {
    fn value(&self, ctx: &str) -> Result<f64> {
        match self {
            Num::Float(v) => Ok(*v),
            Num::Text(s) => parse_constant(s).map_err(|e| config(ctx, e)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    lo: Vec<Num>,
    hi: Vec<Num>,
}

impl BoxFile {
    fn build(&self, ctx: &str) -> Result<BoxRegion> {
        let vals = |v: &[Num], side: &str| {
            v.iter()
                .enumerate()
                .map(|(i, x)| x.value(&format!("{ctx}.{side}[{i}]")))
                .collect::<Result<Vec<_>>>()
        };
        BoxRegion::new(vals(&self.lo, "lo")?, vals(&self.hi, "hi")?).map_err(|e| config(ctx, e))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    cells: usize,
    levels: usize,
    #[serde(default = "default_rule")]
    rule: String,
}

fn default_rule() -> String {
    "midpoint".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormFile {
    coefficient: String,
    #[serde(default)]
    factors: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MollificationFile {
    eps0: f64,
    ratio: f64,
    count: usize,
    #[serde(default = "default_moll_cells")]
    cells: usize,
    extension: Option<Extension>,
}

fn default_moll_cells() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectedFile {
    boundary: Option<Num>,
    interior: Option<Num>,
    tolerance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartFile {
    label: String,
    forward: Vec<String>,
    inverse: Vec<String>,
    domain: DomainKind,
    support_box: BoxFile,
    #[serde(default)]
    periodic: Vec<usize>,
    partition: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtlasFile {
    #[serde(rename = "chart")]
    charts: Vec<ChartFile>,
    partition_region: Option<BoxFile>,
    #[serde(default = "default_partition_points")]
    partition_points: usize,
}

fn default_partition_points() -> usize {
    400
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    dimension: usize,
    domain: Option<DomainKind>,
    support_box: Option<BoxFile>,
    #[serde(default)]
    periodic: Vec<usize>,
    tolerance: Option<f64>,
    #[serde(default)]
    seed: u64,
    grid: GridFile,
    #[serde(default, rename = "form")]
    forms: Vec<FormFile>,
    mollification: Option<MollificationFile>,
    expected: Option<ExpectedFile>,
    atlas: Option<AtlasFile>,
}

fn config(ctx: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{ctx}: {e}"))
}

/// Mollification settings of a scenario.
#[derive(Debug, Clone)]
pub struct MollificationSpec {
    pub schedule: MollificationSchedule,
    pub cells: usize,
    pub extension: Extension,
}

#[derive(Debug, Clone)]
pub struct Expected {
    pub boundary: Option<f64>,
    pub interior: Option<f64>,
    pub tolerance: f64,
}

/// Where the form lives.
#[derive(Debug, Clone)]
pub enum Setting {
    Flat(Domain),
    Atlas {
        atlas: Atlas,
        partition_region: Option<BoxRegion>,
        partition_points: usize,
    },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub dimension: usize,
    pub setting: Setting,
    pub form: FormSum,
    pub grid: GridSpec,
    pub tolerance: f64,
    pub seed: u64,
    pub mollification: Option<MollificationSpec>,
    pub expected: Option<Expected>,
}

fn parse_rule(s: &str) -> Result<QuadratureRule> {
    let s = s.trim();
    if s == "midpoint" {
        return Ok(QuadratureRule::Midpoint);
    }
    if let Some(order) = s.strip_prefix("gauss:") {
        let q: usize = order
            .trim()
            .parse()
            .map_err(|_| config("grid.rule", format!("bad Gauss order '{order}'")))?;
        let r = QuadratureRule::Gauss(q);
        r.validate().map_err(|e| config("grid.rule", e))?;
        return Ok(r);
    }
    Err(config(
        "grid.rule",
        format!("unknown rule '{s}', expected 'midpoint' or 'gauss:<order>'"),
    ))
}

fn build_domain(
    kind: DomainKind,
    support: &BoxFile,
    periodic: &[usize],
    n: usize,
    ctx: &str,
) -> Result<Domain> {
    let region = support.build(&format!("{ctx}support_box"))?;
    if region.dim() != n {
        return Err(config(
            &format!("{ctx}support_box"),
            format!("box has dimension {}, scenario has {n}", region.dim()),
        ));
    }
    let mut dom = Domain::new(kind, region).map_err(|e| config(&format!("{ctx}domain"), e))?;
    for &a in periodic {
        if a == 0 {
            return Err(config(
                &format!("{ctx}periodic"),
                "axes are numbered from 1",
            ));
        }
        dom = dom
            .with_periodic_axis(a - 1)
            .map_err(|e| config(&format!("{ctx}periodic"), e))?;
    }
    Ok(dom)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        Scenario::build(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Scenario::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn build(file: ScenarioFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(config(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    file.schema_version
                ),
            ));
        }
        let n = file.dimension;
        if n == 0 {
            return Err(config("dimension", "must be at least 1"));
        }
        let rule = parse_rule(&file.grid.rule)?;
        let grid = GridSpec::new(file.grid.cells, rule, file.grid.levels)
            .map_err(|e| config("grid", e))?;

        let mut terms = Vec::with_capacity(file.forms.len());
        for (i, f) in file.forms.iter().enumerate() {
            let ctx = format!("form[{i}]");
            let coef = ScalarField::parse(&f.coefficient, n)
                .map_err(|e| config(&format!("{ctx}.coefficient"), e))?;
            let factors = f
                .factors
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    ScalarField::parse(g, n).map_err(|e| config(&format!("{ctx}.factors[{k}]"), e))
                })
                .collect::<Result<Vec<_>>>()?;
            if factors.len() + 1 != n {
                return Err(config(
                    &ctx,
                    format!(
                        "needs {} factors for an (n-1)-form, got {}",
                        n - 1,
                        factors.len()
                    ),
                ));
            }
            terms.push(SimpleForm::new(coef, factors).map_err(|e| config(&ctx, e))?);
        }
        let form = FormSum::new(n, n - 1, terms).map_err(|e| config("form", e))?;

        let (setting, default_tol) = match (&file.atlas, &file.domain, &file.support_box) {
            (Some(a), None, None) => (build_atlas(a, n, file.seed)?, ATLAS_TOLERANCE),
            (None, Some(kind), Some(b)) => (
                Setting::Flat(build_domain(*kind, b, &file.periodic, n, "")?),
                FLAT_TOLERANCE,
            ),
            (Some(_), _, _) => {
                return Err(config(
                    "atlas",
                    "atlas scenarios may not set domain or support_box",
                ))
            }
            _ => {
                return Err(config(
                    "domain",
                    "flat scenarios need domain and support_box",
                ))
            }
        };

        let mollification = match &file.mollification {
            None => None,
            Some(m) => {
                let Setting::Flat(dom) = &setting else {
                    return Err(config("mollification", "only supported for flat scenarios"));
                };
                let schedule = MollificationSchedule::new(m.eps0, m.ratio, m.count)
                    .map_err(|e| config("mollification", e))?;
                if m.cells == 0 {
                    return Err(config("mollification.cells", "must be positive"));
                }
                let extension = m.extension.unwrap_or(match dom.kind() {
                    DomainKind::HalfSpace => Extension::EvenReflection,
                    DomainKind::FullSpace => Extension::Free,
                });
                Some(MollificationSpec {
                    schedule,
                    cells: m.cells,
                    extension,
                })
            }
        };

        let expected = match &file.expected {
            None => None,
            Some(x) => Some(Expected {
                boundary: x
                    .boundary
                    .as_ref()
                    .map(|v| v.value("expected.boundary"))
                    .transpose()?,
                interior: x
                    .interior
                    .as_ref()
                    .map(|v| v.value("expected.interior"))
                    .transpose()?,
                tolerance: x.tolerance,
            }),
        };

        let tolerance = file.tolerance.unwrap_or(default_tol);
        if !(tolerance >= 0.0) {
            return Err(config("tolerance", "must be non-negative"));
        }
        Ok(Scenario {
            name: file.name,
            description: file.description,
            dimension: n,
            setting,
            form,
            grid,
            tolerance,
            seed: file.seed,
            mollification,
            expected,
        })
    }

    /// Every coefficient and factor field of the form.
    pub fn fields(&self) -> Vec<ScalarField> {
        self.form
            .terms()
            .iter()
            .flat_map(|t| std::iter::once(t.coefficient_field()).chain(t.factors()))
            .cloned()
            .collect()
    }

    pub fn flat_domain(&self) -> Option<&Domain> {
        match &self.setting {
            Setting::Flat(d) => Some(d),
            Setting::Atlas { .. } => None,
        }
    }

    pub fn partition_plan(&self) -> Option<SamplePlan> {
        match &self.setting {
            Setting::Atlas {
                partition_region: Some(r),
                partition_points,
                ..
            } => Some(SamplePlan::new(r.clone(), *partition_points, self.seed)),
            _ => None,
        }
    }
}

fn build_atlas(a: &AtlasFile, n: usize, seed: u64) -> Result<Setting> {
    let mut charts = Vec::with_capacity(a.charts.len());
    let mut bumps = Vec::with_capacity(a.charts.len());
    for (i, c) in a.charts.iter().enumerate() {
        let ctx = format!("atlas.chart[{i}]");
        let comps = |v: &[String], what: &str| {
            v.iter()
                .enumerate()
                .map(|(k, s)| {
                    parse_expr(s, n).map_err(|e| config(&format!("{ctx}.{what}[{k}]"), e))
                })
                .collect::<Result<Vec<_>>>()
        };
        let dom = build_domain(c.domain, &c.support_box, &c.periodic, n, &format!("{ctx}."))?;
        let chart = Chart::new(
            c.label.clone(),
            comps(&c.forward, "forward")?,
            comps(&c.inverse, "inverse")?,
            dom,
        )
        .map_err(|e| config(&ctx, e))?;
        // Round trip on the chart box, pulled in slightly from periodic seams.
        let region = chart.target().support_box().clone();
        let shrunk = BoxRegion::new(
            region
                .lo
                .iter()
                .zip(&region.hi)
                .map(|(l, h)| l + 1e-3 * (h - l))
                .collect(),
            region
                .lo
                .iter()
                .zip(&region.hi)
                .map(|(l, h)| h - 1e-3 * (h - l))
                .collect(),
        )?;
        chart
            .check_inverse(&SamplePlan::new(shrunk, 100, seed))
            .map_err(|e| config(&ctx, e))?;
        bumps.push(
            ScalarField::parse(&c.partition, n)
                .map_err(|e| config(&format!("{ctx}.partition"), e))?,
        );
        charts.push(chart);
    }
    let atlas = Atlas::new(charts, bumps)?;
    let partition_region = a
        .partition_region
        .as_ref()
        .map(|b| b.build("atlas.partition_region"))
        .transpose()?;
    Ok(Setting::Atlas {
        atlas,
        partition_region,
        partition_points: a.partition_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "t"
dimension = 2
domain = "half_space"
support_box = { lo = [-2, 0], hi = ["2", "2*1"] }
[grid]
cells = 8
levels = 2
[[form]]
coefficient = "bump(x1, 0, 1) * max(0, 1 - x2)"
factors = ["x1"]
"#;

    #[test]
    fn parses_minimal() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.dimension, 2);
        assert_eq!(s.tolerance, FLAT_TOLERANCE);
        assert_eq!(s.grid.rule, QuadratureRule::Midpoint);
        assert_eq!(s.fields().len(), 2);
        assert_eq!(s.flat_domain().unwrap().support_box().hi, vec![2.0, 2.0]);
    }

    #[test]
    fn errors_name_the_offending_element() {
        let bad = MINIMAL.replace("max(0, 1 - x2)", "max(0, 1 - x3)");
        match Scenario::from_toml(&bad) {
            Err(Error::Config(m)) => assert!(m.contains("form[0].coefficient"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(
            matches!(Scenario::from_toml(&bad), Err(Error::Config(m)) if m.contains("schema_version"))
        );
        let bad = MINIMAL.replace("levels = 2", "levels = 2\nrule = \"simpson\"");
        assert!(
            matches!(Scenario::from_toml(&bad), Err(Error::Config(m)) if m.contains("grid.rule"))
        );
        let bad = MINIMAL.replace("factors = [\"x1\"]", "factors = []");
        assert!(
            matches!(Scenario::from_toml(&bad), Err(Error::Config(m)) if m.contains("form[0]"))
        );
        assert!(matches!(
            Scenario::from_toml("not toml ["),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gauss_rule_and_constants() {
        let s =
            Scenario::from_toml(&MINIMAL.replace("levels = 2", "levels = 2\nrule = \"gauss:4\""))
                .unwrap();
        assert_eq!(s.grid.rule, QuadratureRule::Gauss(4));
        let with_expected =
            format!("{MINIMAL}\n[expected]\nboundary = \"256/315\"\ntolerance = 1e-6\n");
        let s = Scenario::from_toml(&with_expected).unwrap();
        let e = s.expected.unwrap();
        assert_eq!(e.boundary, Some(256.0 / 315.0));
        assert_eq!(e.interior, None);
    }

    #[test]
    fn mollification_defaults_to_reflection_on_half_space() {
        let text = format!("{MINIMAL}\n[mollification]\neps0 = 0.5\nratio = 0.5\ncount = 3\n");
        let s = Scenario::from_toml(&text).unwrap();
        let m = s.mollification.unwrap();
        assert_eq!(m.extension, Extension::EvenReflection);
        assert_eq!(m.cells, 16);
        let bad = format!("{MINIMAL}\n[mollification]\neps0 = 0.5\nratio = 1.5\ncount = 3\n");
        assert!(Scenario::from_toml(&bad).is_err());
    }
}
