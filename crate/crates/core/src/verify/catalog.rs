//! Scenarios shipped with the crate.

use crate::error::Result;

use super::scenario::Scenario;

/// `(file name, contents)` of every built-in scenario.
pub const SOURCES: &[(&str, &str)] = &[
    (
        "h1_kinked.toml",
        include_str!("../../scenarios/h1_kinked.toml"),
    ),
    (
        "h1_smooth.toml",
        include_str!("../../scenarios/h1_smooth.toml"),
    ),
    (
        "h2_anchor.toml",
        include_str!("../../scenarios/h2_anchor.toml"),
    ),
    (
        "h2_smooth.toml",
        include_str!("../../scenarios/h2_smooth.toml"),
    ),
    (
        "h2_minmax.toml",
        include_str!("../../scenarios/h2_minmax.toml"),
    ),
    (
        "h2_diagonal.toml",
        include_str!("../../scenarios/h2_diagonal.toml"),
    ),
    (
        "h3_mixed.toml",
        include_str!("../../scenarios/h3_mixed.toml"),
    ),
    (
        "r2_exact_full.toml",
        include_str!("../../scenarios/r2_exact_full.toml"),
    ),
    (
        "r3_exact_full.toml",
        include_str!("../../scenarios/r3_exact_full.toml"),
    ),
    ("r2_zero.toml", include_str!("../../scenarios/r2_zero.toml")),
    (
        "disk_atlas.toml",
        include_str!("../../scenarios/disk_atlas.toml"),
    ),
];

pub fn scenarios() -> Result<Vec<Scenario>> {
    SOURCES
        .iter()
        .map(|(_, text)| Scenario::from_toml(text))
        .collect()
}
