//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Values are checked against oracles written here, not against
//! the engines' own helpers.

mod engines;
mod http;
mod service;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// Result of one criterion.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Collects sub-checks of one criterion.
#[derive(Default)]
pub struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    pub fn verdict(self) -> Verdict {
        if self.failures.is_empty() {
            Verdict::new(true, self.notes.join("; "))
        } else {
            Verdict::new(false, format!("failed: {}", self.failures.join("; ")))
        }
    }
}

fn main() -> ExitCode {
    // libtest-style filter arguments are accepted and ignored
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("registration recovery", engines::registration_recovery),
        ("icp monotonicity", engines::icp_monotonicity),
        ("tre analytic check", engines::tre_analytic),
        ("semg spectral suite", engines::semg_suite),
        ("spine suite", engines::spine_suite),
        ("mapping suite", engines::mapping_suite),
        ("kinematics suite", engines::kinematics_suite),
        ("inference suite", engines::inference_suite),
        ("service suite", service::service_suite),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {name} ({:.1} s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
