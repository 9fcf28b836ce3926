use std::path::PathBuf;

use lipstokes::verify::{
    self, catalog, RunOptions, Scenario, EXIT_CONFIG, EXIT_LEAK, EXIT_OK, EXIT_TOLERANCE,
};
use lipstokes::BoundarySign;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn catalog_scenario(name: &str) -> Scenario {
    catalog::scenarios()
        .unwrap()
        .into_iter()
        .find(|s| s.name == name)
        .unwrap()
}

#[test]
fn files_on_disk_match_the_embedded_catalog() {
    for (file, text) in catalog::SOURCES {
        let on_disk = std::fs::read_to_string(scenario_path(file)).unwrap();
        assert_eq!(&on_disk, text, "{file}");
    }
}

#[test]
fn zero_form_gives_zero_report() {
    let r = verify::run_scenario(&scenario_path("r2_zero.toml")).unwrap();
    assert!(r
        .levels
        .iter()
        .all(|l| l.boundary_integral == 0.0 && l.interior_integral == 0.0));
    assert_eq!(r.relative_residual, 0.0);
}

#[test]
fn anchor_matches_closed_form() {
    let r = verify::run_scenario(&scenario_path("h2_anchor.toml")).unwrap();
    let want = 256.0 / 315.0;
    assert_eq!(r.levels.last().unwrap().m, 256);
    assert!((r.boundary_integral - want).abs() < 1e-9);
    assert!((r.interior_integral - want).abs() < 1e-9);
    assert!(r.relative_residual <= 1e-3);
}

#[test]
fn reports_are_reproducible() {
    for name in ["h2_minmax", "disk_atlas"] {
        let s = catalog_scenario(name);
        let a = verify::compute_report(&s, &RunOptions::default()).unwrap();
        let b = verify::compute_report(&s, &RunOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{name}");
    }
}

#[test]
fn flipped_sign_fails_the_anchor() {
    let s = catalog_scenario("h2_anchor");
    let opts = RunOptions {
        sign: BoundarySign::Flipped,
        ..RunOptions::default()
    };
    let v = verify::verify_scenario(&s, &opts).unwrap();
    assert_eq!(v.exit_code(), EXIT_TOLERANCE);
    let r = &v.report;
    assert!((r.residual + 2.0 * r.interior_integral).abs() < 1e-9);
}

#[test]
fn overrides_change_the_ladder() {
    let s = catalog_scenario("h2_smooth");
    let opts = RunOptions {
        levels: Some(2),
        cells: Some(8),
        ..RunOptions::default()
    };
    let r = verify::compute_report(&s, &opts).unwrap();
    let ms: Vec<usize> = r.levels.iter().map(|l| l.m).collect();
    assert_eq!(ms, [8, 16]);
}

#[test]
fn suite_filter() {
    let opts = RunOptions::default();
    let none = verify::run_suite(Some("no such scenario"), &opts).unwrap();
    assert!(none.rows.is_empty());
    assert_eq!(none.exit_code(), EXIT_OK);
    let h1 = verify::run_suite(Some("h1_"), &opts).unwrap();
    assert_eq!(h1.rows.len(), 2);
    assert!(h1.passed());
    assert!(h1.table().contains("h1_kinked"));
}

#[test]
fn error_exit_codes() {
    let bad = "schema_version = 1\nname = \"x\"\ndimension = 2\n";
    let e = Scenario::from_toml(bad).unwrap_err();
    assert_eq!(verify::exit_code(&e), EXIT_CONFIG);

    let leaking = r#"
schema_version = 1
name = "leak"
dimension = 2
domain = "half_space"
support_box = { lo = [-1, 0], hi = [1, 1] }
[grid]
cells = 8
levels = 2
[[form]]
coefficient = "max(0, 1 - x2)"
factors = ["x1"]
"#;
    let s = Scenario::from_toml(leaking).unwrap();
    let e = verify::verify_scenario(&s, &RunOptions::default()).unwrap_err();
    assert_eq!(verify::exit_code(&e), EXIT_LEAK);
    assert!(e.to_string().contains("x1"), "{e}");
}
