use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gyroegg::{report, server};
use gyroegg_core::harness::{run_scenario, ScenarioConfig};

/// Simulator for a gyro-actuated egg-shaped rolling robot.
#[derive(Parser)]
#[command(name = "gyroegg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and write its log under --out.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Step a scenario in real time and serve it over WebSocket.
    Serve {
        config: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Print derived tables.
    Report {
        #[command(subcommand)]
        which: Report,
    },
}

#[derive(Subcommand)]
enum Report {
    /// Bevel gear geometry and the chosen tooth counts.
    Gears {
        #[arg(long, allow_negative_numbers = true)]
        radius: Option<f64>,
    },
    /// Battery runtime estimates for a scenario's robot and pack.
    Power { config: PathBuf },
}

/// Exit code for bad input: unreadable or invalid config, bad arguments.
const EXIT_USAGE: u8 = 1;

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is taken by unstable runs
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run { config, seed, out } => {
            let config = ScenarioConfig::from_file(&config)?;
            let outcome = run_scenario(&config, seed, &out)?;
            let last = outcome.frames.last().map_or(0.0, |f| f.time_s);
            println!("status {:?} at {last:.4} s", outcome.status);
            if let Some(p) = &outcome.log_path {
                println!("log {}", p.display());
            }
            if let Some(p) = &outcome.csv_path {
                println!("csv {}", p.display());
            }
            if let Some(m) = &outcome.message {
                eprintln!("{m}");
            }
            Ok(ExitCode::from(outcome.status.exit_code() as u8))
        }
        Command::Serve { config, port, host } => {
            let scenario = ScenarioConfig::from_file(&config)?.resolve()?;
            let runtime = tokio::runtime::Runtime::new()?;
            let status = runtime.block_on(async {
                let handle = server::start(scenario, &format!("{host}:{port}")).await?;
                eprintln!("serving on ws://{}", handle.local_addr());
                handle.wait().await
            })?;
            println!("status {status:?}");
            Ok(ExitCode::from(status.exit_code() as u8))
        }
        Command::Report { which: Report::Gears { radius } } => {
            let r = report::gear_report(radius.unwrap_or_else(report::default_gear_radius_m))?;
            println!("{r}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { which: Report::Power { config } } => {
            let scenario = ScenarioConfig::from_file(&config)?.resolve()?;
            println!("{}", report::power_report(&scenario)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
