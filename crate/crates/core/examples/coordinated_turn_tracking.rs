//! Tracks one coordinated-turn target through the rank-2 sum measurement
//! and prints the estimate against the simulated truth.
//!
//!     cargo run --release --example coordinated_turn_tracking

use cubature_kalman::filters::{run_filter, CovarianceForm, FilterSpec};
use cubature_kalman::harness::{reference_scenario, BenchmarkConfig, POSITION_INDICES};
use cubature_kalman::model::CoordinatedTurnModel;
use cubature_kalman::sde::Scheme;

fn main() {
    let delta_ill = 1e-2;
    let mut config = BenchmarkConfig::default();
    config.scenario.delta_ill = vec![delta_ill];

    // One replication's truth and measurements, drawn exactly as the
    // benchmark harness would draw them.
    let (truth, measurements) = reference_scenario(&config, 0, 0).unwrap();
    let model = CoordinatedTurnModel::with_params(&config.model, delta_ill);
    let spec = FilterSpec::new(Scheme::ItoTaylor15, CovarianceForm::SvdFactored, 64);
    let run = run_filter(
        &model,
        &spec,
        config.scenario.sampling_period,
        0.0,
        &measurements,
    );
    assert!(run.failure.is_none(), "filter diverged: {:?}", run.failure);

    println!("filter {}   delta_ill {delta_ill:.0e}", spec.label());
    println!();
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "t", "pos err [m]", "claimed std", "turn rate", "cond(R_e)");
    let mut sum_sq = 0.0;
    for (k, state) in run.states.iter().enumerate().skip(1) {
        let x_true = &truth.states[k];
        let err_sq: f64 = POSITION_INDICES
            .iter()
            .map(|&i| (x_true[i] - state.mean[i]).powi(2))
            .sum();
        sum_sq += err_sq;
        if k % 15 == 0 || k == 1 {
            let p = state.cov.to_matrix();
            let claimed: f64 = POSITION_INDICES.iter().map(|&i| p[(i, i)]).sum::<f64>().sqrt();
            println!(
                "{:>5.0} {:>12.2} {:>12.2} {:>12.5} {:>12.2e}",
                state.t,
                err_sq.sqrt(),
                claimed,
                state.mean[6].to_degrees(),
                run.diagnostics[k - 1].innovation_condition,
            );
        }
    }
    let rmse = (sum_sq / run.diagnostics.len() as f64).sqrt();
    println!();
    println!("position RMSE over {} steps: {rmse:.2} m", run.diagnostics.len());
    println!(
        "true turn rate stays {:.5} deg/s; the filter has to infer it from two scalar sums",
        truth.states.last().unwrap()[6].to_degrees()
    );
}
