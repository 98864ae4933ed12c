//! Monte Carlo benchmark around the ill-conditioned radar tracking
//! scenario.
//!
//! One sweep crosses a bank of filters with a grid of ill-conditioning
//! parameters `delta_ill`.  For each Monte Carlo run a single reference
//! trajectory is simulated (the target dynamics do not depend on
//! `delta_ill`) and shared across the whole grid; for each grid point a
//! measurement sequence is drawn from that trajectory with the grid point's
//! observation matrix and noise, and shared by every filter.  Accuracy is
//! the position ARMSE over runs and steps; a filter that diverges in any
//! run is reported as failed at that grid point, with the run count.
//!
//! Every random draw comes from a counter-derived stream, so results are a
//! pure function of the configuration — runs can execute on any number of
//! threads in any order and still aggregate to identical output bytes.

pub mod config;
pub mod report;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::filters::{run_filter, FilterRun, FilterSpec};
use crate::model::{CoordinatedTurnModel, StateSpaceModel};
use crate::sde::{
    generate_measurements, sample_initial_state, simulate, Scheme, SdeError,
    SubdivisionGrid, Trajectory,
};

pub use config::{BenchmarkConfig, ConfigError, Scenario, TruthInitial};

/// State-vector indices whose errors enter the position ARMSE: the
/// coordinates of the tracking state layout `[x, ẋ, y, ẏ, z, ż, ω]`.
pub const POSITION_INDICES: [usize; 3] = [0, 2, 4];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("reference trajectory generation failed: {0}")]
    Simulation(#[from] SdeError),
}

/// Independent random streams derived from the base seed.
#[derive(Debug, Clone, Copy)]
enum StreamPurpose {
    InitialState = 1,
    ProcessNoise = 2,
    MeasurementNoise = 3,
}

/// A deterministic RNG for one (purpose, run, grid-point) coordinate.
fn stream_rng(seed: u64, purpose: StreamPurpose, run: u32, delta_index: u32) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = purpose as u8;
    key[9..13].copy_from_slice(&run.to_le_bytes());
    key[13..17].copy_from_slice(&delta_index.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Aggregated outcome of one (filter, delta_ill) grid cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub spec: FilterSpec,
    pub delta_ill: f64,
    /// Position ARMSE over all runs and steps; `None` if any run diverged.
    pub armse_position: Option<f64>,
    /// Number of runs that diverged.
    pub failed_runs: usize,
    /// Earliest measurement step at which a divergence occurred.
    pub first_failure_step: Option<usize>,
    /// Mean innovation condition number over all completed steps.
    pub mean_condition: f64,
}

/// Result of a full sweep, cells ordered filter-major in config order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: BenchmarkConfig,
    pub cells: Vec<CellOutcome>,
}

impl SweepResult {
    pub fn cell(&self, spec: &FilterSpec, delta_ill: f64) -> Option<&CellOutcome> {
        self.cells
            .iter()
            .find(|c| c.spec == *spec && c.delta_ill == delta_ill)
    }
}

/// Per-run, per-cell tallies produced in parallel and folded sequentially.
struct RunCell {
    sum_sq_position: f64,
    condition_sum: f64,
    completed_steps: usize,
    failure_step: Option<usize>,
}

fn tally_run(run: &FilterRun, truth: &Trajectory) -> RunCell {
    let mut sum_sq = 0.0;
    // states[0] is the prior; compare post-update estimates only.
    for (k, state) in run.states.iter().enumerate().skip(1) {
        let x_true = &truth.states[k];
        for &i in &POSITION_INDICES {
            let e = x_true[i] - state.mean[i];
            sum_sq += e * e;
        }
    }
    RunCell {
        sum_sq_position: sum_sq,
        condition_sum: run
            .diagnostics
            .iter()
            .map(|d| d.innovation_condition)
            .sum(),
        completed_steps: run.diagnostics.len(),
        failure_step: run.failure.as_ref().map(|f| f.step),
    }
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<SweepResult, HarnessError> {
    run_benchmark_with_progress(config, |_, _| {})
}

/// Simulates the reference trajectory for one run under the scenario's
/// truth policy.
fn simulate_reference(
    config: &BenchmarkConfig,
    run_idx: u32,
    steps: usize,
) -> Result<Trajectory, HarnessError> {
    let scenario = &config.scenario;
    let mut params = config.model.clone();
    if !scenario.truth_turn_rate_noise {
        params.sigma2 = 0.0;
    }
    // The reference dynamics are independent of delta_ill; any instance
    // serves for simulation.
    let truth_model = CoordinatedTurnModel::with_params(&params, 1.0);
    let grid = SubdivisionGrid::new(scenario.sampling_period, scenario.truth_substeps);
    let x0 = match scenario.truth_initial {
        TruthInitial::Mean => truth_model.initial_mean(),
        TruthInitial::PriorSample => {
            let mut init_rng =
                stream_rng(scenario.seed, StreamPurpose::InitialState, run_idx, 0);
            sample_initial_state(&truth_model, &mut init_rng)?
        }
    };
    let mut process_rng = stream_rng(scenario.seed, StreamPurpose::ProcessNoise, run_idx, 0);
    Ok(simulate(
        &truth_model,
        Scheme::ItoTaylor15,
        &grid,
        0.0,
        &x0,
        steps,
        &mut process_rng,
    )?)
}

/// Runs the sweep, invoking `progress(completed_runs, total_runs)` as Monte
/// Carlo runs finish (from worker threads, in no particular order).
pub fn run_benchmark_with_progress(
    config: &BenchmarkConfig,
    progress: impl Fn(usize, usize) + Sync,
) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    let scenario = &config.scenario;
    let steps = scenario.steps();
    let deltas = &scenario.delta_ill;
    let specs = &config.filters;

    let counter = std::sync::atomic::AtomicUsize::new(0);
    let per_run: Result<Vec<Vec<RunCell>>, HarnessError> = (0..scenario.mc_runs)
        .into_par_iter()
        .map(|run_idx| {
            let run_idx = run_idx as u32;
            let truth = simulate_reference(config, run_idx, steps)?;

            let mut cells = Vec::with_capacity(specs.len() * deltas.len());
            for (di, &delta) in deltas.iter().enumerate() {
                let model = CoordinatedTurnModel::with_params(&config.model, delta);
                let mut measurement_rng = stream_rng(
                    scenario.seed,
                    StreamPurpose::MeasurementNoise,
                    run_idx,
                    di as u32,
                );
                let measurements =
                    generate_measurements(&model, &truth, &mut measurement_rng)
                        .map_err(HarnessError::Simulation)?;
                for spec in specs {
                    let run = run_filter(
                        &model,
                        spec,
                        scenario.sampling_period,
                        0.0,
                        &measurements,
                    );
                    cells.push(tally_run(&run, &truth));
                }
            }
            let done = 1 + counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            progress(done, scenario.mc_runs);
            Ok(cells)
        })
        .collect();
    let per_run = per_run?;

    // Fold sequentially in run order so float sums are reproducible.
    let mut cells = Vec::with_capacity(specs.len() * deltas.len());
    for (si, spec) in specs.iter().enumerate() {
        for (di, &delta) in deltas.iter().enumerate() {
            // Per-run cells are delta-major.
            let flat = di * specs.len() + si;
            let mut sum_sq = 0.0;
            let mut condition_sum = 0.0;
            let mut completed_steps = 0usize;
            let mut failed_runs = 0usize;
            let mut first_failure_step: Option<usize> = None;
            for run_cells in &per_run {
                let cell = &run_cells[flat];
                condition_sum += cell.condition_sum;
                completed_steps += cell.completed_steps;
                match cell.failure_step {
                    Some(step) => {
                        failed_runs += 1;
                        first_failure_step = Some(match first_failure_step {
                            Some(s) => s.min(step),
                            None => step,
                        });
                    }
                    None => sum_sq += cell.sum_sq_position,
                }
            }
            let armse_position = if failed_runs == 0 {
                let denom = (scenario.mc_runs * steps) as f64;
                Some((sum_sq / denom).sqrt())
            } else {
                None
            };
            let mean_condition = if completed_steps > 0 {
                condition_sum / completed_steps as f64
            } else {
                f64::NAN
            };
            cells.push(CellOutcome {
                spec: *spec,
                delta_ill: delta,
                armse_position,
                failed_runs,
                first_failure_step,
                mean_condition,
            });
        }
    }

    Ok(SweepResult {
        config: config.clone(),
        cells,
    })
}

/// Simulates one reference trajectory and its measurement sequence exactly
/// as the benchmark would for the given run index and grid point.
pub fn reference_scenario(
    config: &BenchmarkConfig,
    run_idx: u32,
    delta_index: usize,
) -> Result<(Trajectory, Vec<DVector<f64>>), HarnessError> {
    config.validate()?;
    let scenario = &config.scenario;
    let delta = *scenario
        .delta_ill
        .get(delta_index)
        .ok_or(ConfigError::Invalid("delta index out of range"))?;
    let truth = simulate_reference(config, run_idx, scenario.steps())?;
    let model = CoordinatedTurnModel::with_params(&config.model, delta);
    let mut measurement_rng = stream_rng(
        scenario.seed,
        StreamPurpose::MeasurementNoise,
        run_idx,
        delta_index as u32,
    );
    let measurements = generate_measurements(&model, &truth, &mut measurement_rng)?;
    Ok((truth, measurements))
}
