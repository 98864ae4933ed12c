//! Runs all covariance forms over a batch of random smooth systems and
//! reports how far apart their estimates drift in exact arithmetic terms.
//!
//!     cargo run --release --example filter_equivalence

use cubature_kalman::synthetic::equivalence_report;

fn main() {
    let report = equivalence_report(7, 10, 40, 4, 0.5);

    println!("{} random systems, 40 steps each, all forms seeded identically", report.systems);
    println!();
    println!("max |state estimate difference|:      {:.3e}", report.max_state_deviation);
    println!("max relative covariance difference:   {:.3e}", report.max_covariance_deviation);
    println!("worst case:                           {}", report.worst_case);
    println!("pairs where some form failed:         {}", report.failed_pairs);
    println!();
    println!("the conventional, Cholesky-factored, and SVD-factored updates are algebraic");
    println!("rearrangements of one another, so on well-conditioned systems they agree to");
    println!("roundoff. The factored forms only pull ahead once conditioning collapses.");
}
