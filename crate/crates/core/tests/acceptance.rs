//! One pass/fail line per acceptance criterion; nonzero exit on any failure.

use std::process::ExitCode;

use prism_core::verify::{run_criterion, VerifyOptions, CRITERIA};

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let mut failed = 0;
    for (id, _) in CRITERIA {
        let report = run_criterion(id, &opts);
        println!("{report}");
        if !report.passed {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
