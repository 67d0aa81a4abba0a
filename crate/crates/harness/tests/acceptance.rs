//! Every acceptance criterion at its pinned tolerance, one line each.

use std::process::ExitCode;
use std::time::Instant;

use hessmc::{verify_suite, SuiteOptions};

fn main() -> ExitCode {
    let start = Instant::now();
    let report = verify_suite(&SuiteOptions::default(), |c| {
        println!("{}", c.line());
        for d in &c.details {
            println!("      {d}");
        }
    });
    let passed = report.criteria.iter().filter(|c| c.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.1} s",
        report.criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
