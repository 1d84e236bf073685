//! Batch execution of independent runs.
//!
//! With the `parallel` feature (on by default) [`par_map`] spreads work over
//! a rayon pool; without it, it is [`seq_map`]. Results keep input order
//! either way, and every run owns its seeded RNG, so output does not depend
//! on the thread count.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{run_to_writer, sha256_hex, RunStatus, Scenario, ScenarioConfig};

pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    seq_map(items, f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub status: RunStatus,
    pub final_time_s: f64,
    pub final_position_m: [f64; 3],
    pub min_reservoir_fraction: f64,
    pub max_energy_balance_error_j: f64,
    pub log_sha256: String,
}

/// Run one scenario in memory.
pub fn summarize(scenario: &Scenario) -> Result<RunSummary> {
    let mut log = Vec::new();
    let outcome = run_to_writer(scenario.clone(), &mut log)?;
    let last = outcome.frames.last().expect("a run always emits its first frame");
    Ok(RunSummary {
        seed: scenario.seed,
        status: outcome.status,
        final_time_s: last.time_s,
        final_position_m: last.position_m,
        min_reservoir_fraction: outcome
            .frames
            .iter()
            .map(|f| f.reservoir.fraction)
            .fold(f64::INFINITY, f64::min),
        max_energy_balance_error_j: outcome
            .frames
            .iter()
            .map(|f| f.energy.balance_error_j.abs())
            .fold(0.0, f64::max),
        log_sha256: sha256_hex(&log),
    })
}

pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<RunSummary>> {
    par_map(scenarios, summarize)
}

pub fn run_batch_sequential(scenarios: &[Scenario]) -> Vec<Result<RunSummary>> {
    seq_map(scenarios, summarize)
}

/// The same config under several seeds.
pub fn seed_sweep(config: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<Scenario>> {
    seeds
        .iter()
        .map(|&s| {
            let mut c = config.clone();
            c.seed = Some(s);
            c.resolve()
        })
        .collect()
}
