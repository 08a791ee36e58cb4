//! Acceptance criteria, one PASS/FAIL line each. Failing criteria are
//! reported, not turned into a failing test binary; `cheeger check` exits
//! nonzero on them instead.

use std::time::Instant;

use cheeger_core::checks::Suite;

fn main() {
    let start = Instant::now();
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let mut suite = Suite::new(fixtures, |line| eprintln!("{line}"));
    let checks = match suite.acceptance() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("acceptance: {e}");
            std::process::exit(3);
        }
    };
    println!("acceptance criteria:");
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria pass ({:.0} s)", checks.len(), start.elapsed().as_secs_f64());
}
