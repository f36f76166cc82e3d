//! Acceptance suite: one PASS/FAIL line per criterion.

use std::io::Write;

use geovortex::selftest::run_all;

#[test]
fn acceptance_criteria() {
    let outcomes = run_all();
    // Written to the process stdout so the lines survive output capture.
    let mut out = std::io::stdout().lock();
    for o in &outcomes {
        writeln!(out, "{o}").unwrap();
    }
    out.flush().unwrap();
    drop(out);
    assert_eq!(outcomes.len(), 11);
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
