use std::path::PathBuf;

use bilinear_mor_oracles::{fixtures, run_on, run_oracles};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn shipped_fixtures_pass() {
    let report = run_oracles(&fixture_dir()).unwrap();
    for o in &report.outcomes {
        println!("{:<28} {:<16} dev={:.2e} tol={:.0e} {}", o.oracle, o.fixture, o.deviation, o.tolerance, if o.passed { "ok" } else { "FAIL" });
    }
    assert!(report.outcomes.len() > 20);
    assert!(report.passed());
}

#[test]
fn corrupted_expected_value_names_the_oracle() {
    let mut fx = fixtures::load_dir(&fixture_dir()).unwrap();
    fx.retain(|f| f.name == "scalar");
    fx[0].expected[0].value = 0.7;
    let report = run_on(&fx);
    let failed: Vec<_> = report.outcomes.iter().filter(|o| !o.passed).map(|o| o.oracle.as_str()).collect();
    assert_eq!(failed, ["expected:p0[0,0]"]);
}

#[test]
fn corrupted_system_fails_to_load() {
    let mut fx = fixtures::load_dir(&fixture_dir()).unwrap();
    fx.retain(|f| f.name == "diag2");
    fx[0].system.A[0][0] = 1.0;
    let report = run_on(&fx);
    assert!(report.outcomes.iter().any(|o| o.oracle == "load" && !o.passed));
}

#[test]
fn empty_set_is_vacuous_with_warning() {
    let report = run_on(&[]);
    assert!(report.passed());
    assert_eq!(report.warnings.len(), 1);
}
