//! Scenario runs: configuration, the step loop, telemetry and run logs.

pub mod config;
pub mod sim;
pub mod telemetry;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{Mode, Scenario, ScenarioConfig, ScriptedCommand};
pub use sim::{EnergyLedger, RunStatus, Simulation};
pub use telemetry::{csv_column_names, export_csv, TelemetryFrame};

use crate::error::{Error, Result};

pub const LOG_VERSION: u32 = 1;

/// One line of a JSON-lines run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        log_version: u32,
        crate_version: String,
        config_sha256: String,
        seed: u64,
        dt_s: f64,
        robot: String,
        mode: Mode,
    },
    Frame(Box<TelemetryFrame>),
    End {
        status: RunStatus,
        time_s: f64,
        message: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub frames: Vec<TelemetryFrame>,
    pub message: Option<String>,
    pub log_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

fn write_record<W: Write>(w: &mut W, record: &LogRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Run a resolved scenario to completion, streaming the log to `log`.
///
/// An instability ends the run with status [`RunStatus::Unstable`] after
/// the frames so far and an end record carrying the state dump.
pub fn run_to_writer<W: Write>(scenario: Scenario, mut log: W) -> Result<RunOutcome> {
    write_record(
        &mut log,
        &LogRecord::Header {
            log_version: LOG_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: scenario.config_hash.clone(),
            seed: scenario.seed,
            dt_s: scenario.dt_s,
            robot: scenario.params.name.clone(),
            mode: scenario.mode,
        },
    )?;
    let duration = scenario.duration_s;
    let mut sim = Simulation::new(scenario)?;
    let mut frames = Vec::new();
    let emit = |sim: &Simulation, log: &mut W, frames: &mut Vec<TelemetryFrame>| -> Result<()> {
        let f = sim.frame();
        write_record(log, &LogRecord::Frame(Box::new(f.clone())))?;
        frames.push(f);
        Ok(())
    };
    emit(&sim, &mut log, &mut frames)?;

    let mut status = RunStatus::Completed;
    let mut message = None;
    while sim.time_s() < duration - 0.5 * sim.scenario.dt_s {
        match sim.step() {
            Ok(()) => {}
            Err(e @ Error::Unstable { .. }) => {
                status = RunStatus::Unstable;
                message = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
        if !sim.battery_alive() {
            status = RunStatus::BatteryDepleted;
            message = Some(format!("pack reached cutoff at {:.3} V", sim.pack().voltage()));
            break;
        }
        if sim.frame_due() {
            emit(&sim, &mut log, &mut frames)?;
        }
    }
    if frames.last().map(|f| f.tick) != Some(sim.tick()) {
        emit(&sim, &mut log, &mut frames)?;
    }
    write_record(
        &mut log,
        &LogRecord::End {
            status,
            time_s: sim.time_s(),
            message: message.clone(),
        },
    )?;
    log.flush()?;
    Ok(RunOutcome {
        status,
        frames,
        message,
        log_path: None,
        csv_path: None,
    })
}

/// Run a scenario file's config, writing the log (and CSV, if configured)
/// under `out_dir`. `seed` overrides the config's seed.
pub fn run_scenario(config: &ScenarioConfig, seed: Option<u64>, out_dir: &Path) -> Result<RunOutcome> {
    let mut config = config.clone();
    if seed.is_some() {
        config.seed = seed;
    }
    let scenario = config.resolve()?;
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join(scenario.output.log.as_deref().unwrap_or("run.jsonl"));
    let csv = scenario.output.csv.clone();
    let columns = scenario.output.csv_columns.clone();
    // reject bad column names before spending time on the run
    if let Some(cols) = &columns {
        export_csv(&[], Some(cols), std::io::sink())?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let mut outcome = run_to_writer(scenario, file)?;
    outcome.log_path = Some(log_path);
    if let Some(name) = csv {
        let path = out_dir.join(name);
        export_csv(&outcome.frames, columns.as_deref(), std::fs::File::create(&path)?)?;
        outcome.csv_path = Some(path);
    }
    Ok(outcome)
}

/// Read a run log back.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
