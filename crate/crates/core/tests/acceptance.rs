//! Acceptance gate: every criterion prints one line and must pass.

use grwsim_core::acceptance::{run_criterion, AcceptanceSettings, BUNDLED_REFERENCE, CRITERIA};
use grwsim_core::oracle::ReferenceValues;

#[test]
fn acceptance_criteria() {
    let settings = AcceptanceSettings::default();
    let reference = ReferenceValues::from_json(BUNDLED_REFERENCE).expect("bundled reference values");
    let mut failed = Vec::new();
    for (id, _, _) in CRITERIA {
        let outcome = run_criterion(id, &settings, &reference);
        println!("{}", outcome.line());
        if !outcome.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
