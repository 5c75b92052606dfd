//! Runs the finite-difference gradient suite over every differentiable op.

use neurocore::gradcheck::run_suite;

fn main() {
    let report = run_suite(20, 0);
    for case in &report.cases {
        println!(
            "{:<24} {:>4} cases  max relative error {:.2e}",
            case.name, case.cases, case.max_relative_error
        );
    }
    println!(
        "worst {:.2e}, passes 1e-4: {}",
        report.worst(),
        report.passes(1e-4)
    );
}
