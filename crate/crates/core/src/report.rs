//! Stokes reports and their CSV and JSON forms.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// `|residual| / (1 + |interior|)`.
pub fn relative_residual(boundary: f64, interior: f64) -> f64 {
    (boundary - interior).abs() / (1.0 + interior.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub m: usize,
    pub boundary_integral: f64,
    pub interior_integral: f64,
    pub residual: f64,
}

impl LevelRow {
    pub fn new(level: usize, m: usize, boundary: f64, interior: f64) -> Self {
        LevelRow {
            level,
            m,
            boundary_integral: boundary,
            interior_integral: interior,
            residual: boundary - interior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollificationRow {
    pub eps: f64,
    pub boundary_integral: f64,
    pub interior_integral: f64,
    pub residual: f64,
}

impl MollificationRow {
    pub fn new(eps: f64, boundary: f64, interior: f64) -> Self {
        MollificationRow {
            eps,
            boundary_integral: boundary,
            interior_integral: interior,
            residual: boundary - interior,
        }
    }
}

/// Both sides of Stokes' theorem over a refinement ladder, and optionally
/// over a mollification schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StokesReport {
    pub name: String,
    pub boundary_integral: f64,
    pub interior_integral: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub levels: Vec<LevelRow>,
    pub mollification: Vec<MollificationRow>,
    /// The unmollified integrals computed with the same quadrature as the
    /// mollification rows.
    pub unmollified: Option<MollificationRow>,
}

impl StokesReport {
    /// Summary values are taken from the finest (last) level.
    pub fn from_levels(name: impl Into<String>, levels: Vec<LevelRow>) -> Result<Self> {
        let last = levels
            .last()
            .ok_or_else(|| Error::usage("report needs at least one level"))?;
        Ok(StokesReport {
            name: name.into(),
            boundary_integral: last.boundary_integral,
            interior_integral: last.interior_integral,
            residual: last.residual,
            relative_residual: relative_residual(last.boundary_integral, last.interior_integral),
            mollification: Vec::new(),
            unmollified: None,
            levels,
        })
    }

    pub fn with_mollification(
        mut self,
        reference: MollificationRow,
        rows: Vec<MollificationRow>,
    ) -> Self {
        self.unmollified = Some(reference);
        self.mollification = rows;
        self
    }

    /// Relative residual of every level, coarsest first.
    pub fn relative_residuals(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|r| relative_residual(r.boundary_integral, r.interior_integral))
            .collect()
    }

    /// True when the residuals of the last `k` levels never increase by
    /// more than `floor`.
    pub fn residuals_settle(&self, k: usize, floor: f64) -> bool {
        let rel = self.relative_residuals();
        let tail = &rel[rel.len().saturating_sub(k)..];
        tail.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "level",
            "m",
            "boundary_integral",
            "interior_integral",
            "residual",
        ])
        .map_err(csv_err)?;
        for r in &self.levels {
            w.write_record([
                r.level.to_string(),
                r.m.to_string(),
                format!("{:e}", r.boundary_integral),
                format!("{:e}", r.interior_integral),
                format!("{:e}", r.residual),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> StokesReport {
        StokesReport::from_levels(
            "t",
            vec![
                LevelRow::new(0, 8, 1.0, 0.9),
                LevelRow::new(1, 16, 1.0, 0.99),
            ],
        )
        .unwrap()
    }

    #[test]
    fn summary_from_last_level() {
        let r = report();
        assert_eq!(r.boundary_integral, 1.0);
        assert_eq!(r.residual, 1.0 - 0.99);
        assert!((r.relative_residual - 0.01 / 1.99).abs() < 1e-15);
        assert!(StokesReport::from_levels("e", vec![]).is_err());
    }

    #[test]
    fn residual_consistency() {
        let r = report();
        for row in &r.levels {
            assert!(
                (row.residual - (row.boundary_integral - row.interior_integral)).abs() <= 1e-15
            );
        }
    }

    #[test]
    fn csv_columns() {
        let mut buf = Vec::new();
        report().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "level,m,boundary_integral,interior_integral,residual"
        );
        assert!(lines.next().unwrap().starts_with("0,8,1e0,9e-1,"));
    }

    #[test]
    fn json_mirrors_fields() {
        let v: serde_json::Value = serde_json::from_str(&report().to_json().unwrap()).unwrap();
        for key in [
            "boundary_integral",
            "interior_integral",
            "residual",
            "relative_residual",
            "levels",
            "mollification",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn settling_allows_noise_floor() {
        let mut r = report();
        r.levels.push(LevelRow::new(2, 32, 1.0, 1.0 - 1e-14));
        r.levels.push(LevelRow::new(3, 64, 1.0, 1.0 - 2e-14));
        assert!(!r.residuals_settle(2, 0.0));
        assert!(r.residuals_settle(3, 1e-12));
    }
}
