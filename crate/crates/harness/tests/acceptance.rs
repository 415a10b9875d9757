//! Acceptance criteria 1-12, run through the same entry point as `wcopt verify`.

use std::io::Write;

use wcopt_harness::verify::{summary_lines, verify, DEFAULT_SEED};

#[test]
fn acceptance_suite() {
    let report = verify(DEFAULT_SEED, Some(2)).expect("suite ran");
    // Written past the test harness capture so the summary always shows.
    let mut out = std::io::stdout().lock();
    for line in summary_lines(&report) {
        writeln!(out, "{line}").unwrap();
    }
    assert_eq!(report.criteria.len(), 12);
    let failed: Vec<_> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
