//! Acceptance suite: one line per criterion, then two negative controls.
//!
//! Criterion 4 is a known failure and is reported without failing the run.
//! Set `ACCEPTANCE_ONLY=1,8` to run a subset.

use isac_tune::bench::validate::{check, run_selected, ValidationHooks, CRITERIA};
use isac_tune::bench::BenchConfig;
use std::process::ExitCode;

const KNOWN_FAILING: [usize; 1] = [4];

fn selected() -> Vec<usize> {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(s) if !s.trim().is_empty() => s.split(',').map(|x| x.trim().parse().expect("criterion id")).collect(),
        _ => CRITERIA.iter().map(|c| c.0).collect(),
    }
}

fn main() -> ExitCode {
    let cfg = BenchConfig::default();
    let ids = selected();
    let mut unexpected = Vec::new();

    let results = run_selected(&cfg, ValidationHooks::default(), &ids, |r| println!("{}", r.line()))
        .expect("acceptance run");
    for r in &results {
        if !r.passed && !KNOWN_FAILING.contains(&r.id) {
            unexpected.push(format!("criterion {} failed", r.id));
        }
    }

    let controls = [
        (1, ValidationHooks { tamper_ledger: true, ..Default::default() }, "tampered ledger"),
        (9, ValidationHooks { corrupt_covariance: true, ..Default::default() }, "corrupted covariance"),
    ];
    for (id, hooks, what) in controls {
        if !ids.contains(&id) {
            continue;
        }
        let r = check(id, &cfg, hooks).expect("negative control");
        println!("[{}] control {id} with {what}: criterion reports {}", if r.passed { "FAIL" } else { "PASS" }, if r.passed { "pass" } else { "fail" });
        if r.passed {
            unexpected.push(format!("criterion {id} did not detect {what}"));
        }
    }

    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed; known failing: {KNOWN_FAILING:?}", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        for u in &unexpected {
            eprintln!("{u}");
        }
        ExitCode::FAILURE
    }
}
