//! All eight acceptance criteria. Writes one verdict line per criterion to
//! stderr (bypassing libtest capture, so the lines show on passing runs too),
//! prints per-check detail to the captured stdout, and fails if any
//! criterion fails.

use std::io::Write;

use hcsim::suites::{run_criterion, Lab};

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

#[test]
fn acceptance_criteria() {
    let lab = Lab::new();
    let mut results = Vec::new();
    for id in 1..=8 {
        match run_criterion(&lab, id) {
            Ok(c) => {
                report(&c.verdict());
                results.push((id, c.pass(), c.to_string()));
            }
            Err(e) => {
                report(&format!("[FAIL] criterion {id}: error: {e:#}"));
                results.push((id, false, format!("{e:#}\n")));
            }
        }
    }
    for (_, _, detail) in &results {
        print!("{detail}");
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
