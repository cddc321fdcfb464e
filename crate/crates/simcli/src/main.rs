use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use simcli::checks::check_run;
use simcli::{replay_log, run_scenario, AppSource, Scenario};
use spatial_relay_core::Config;
use spatial_relay_server::{MonotonicClock, RelayServer, TickMode};

const EXIT_INVALID: u8 = 2;
const EXIT_ASSERT: u8 = 3;

#[derive(Parser)]
#[command(name = "simcli", version, about = "Simulate, replay and serve the spatial-input relay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario on the virtual clock and write its metrics report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the relay receive log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Check run invariants and exit with status 3 if any fail.
        #[arg(long = "assert")]
        assert_mode: bool,
    },
    /// Re-drive an app from a receive log and print its final state.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Scenario the log came from; sets the app and the end time.
        #[arg(long, conflicts_with = "config")]
        scenario: Option<PathBuf>,
        /// Relay config naming the app.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Start the websocket relay with the configured app.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured port.
        #[arg(long)]
        port: Option<u16>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, out, log, assert_mode } => run(&scenario, seed, out, log, assert_mode),
        Command::Replay { log, scenario, config } => replay(&log, scenario, config),
        Command::Serve { config, port } => serve(config, port),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("simcli: {msg}");
    ExitCode::from(code)
}

/// Writes to stdout, tolerating a closed pipe (e.g. `| head`).
fn emit(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|()| out.flush());
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExitCode> {
    std::fs::write(path, bytes).map_err(|e| fail(1, format!("cannot write {}: {e}", path.display())))
}

fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>, log: Option<PathBuf>, assert_mode: bool) -> ExitCode {
    let mut scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = match run_scenario(&scenario) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    let mut report = serde_json::to_vec_pretty(&output.report).expect("reports serialize");
    report.push(b'\n');
    let written = match &out {
        Some(p) => write(p, &report),
        None => {
            emit(&report);
            Ok(())
        }
    };
    if let Err(code) = written.and_then(|()| log.as_deref().map_or(Ok(()), |p| write(p, &output.replay_log))) {
        return code;
    }
    let t = output.report.totals;
    log::info!(
        "sent {} admitted {} rejected {} dropped {} skipped {}; error mean compensated {:.3} naive {:.3}",
        t.sent,
        t.admitted,
        t.rejected,
        t.dropped,
        t.skipped,
        output.report.compensated.mean,
        output.report.naive.mean
    );
    if assert_mode {
        let failures = check_run(&scenario, &output);
        if !failures.is_empty() {
            for f in &failures {
                eprintln!("FAIL {f}");
            }
            return ExitCode::from(EXIT_ASSERT);
        }
        log::info!("all invariants hold");
    }
    ExitCode::SUCCESS
}

fn replay(log: &Path, scenario: Option<PathBuf>, config: Option<PathBuf>) -> ExitCode {
    let bytes = match std::fs::read(log) {
        Ok(b) => b,
        Err(e) => return fail(1, format!("cannot read {}: {e}", log.display())),
    };
    let scenario = match scenario.as_deref().map(Scenario::load).transpose() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    let config = match config.as_deref().map(Config::load).transpose() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    let source = match (&scenario, &config) {
        (Some(s), _) => AppSource::Scenario(s),
        (None, Some(c)) => AppSource::Config(c),
        (None, None) => AppSource::Default,
    };
    match replay_log(&bytes, &source) {
        Ok(state) => {
            let mut text = serde_json::to_vec_pretty(&state).expect("state serializes");
            text.push(b'\n');
            emit(&text);
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, e),
    }
}

fn serve(config: Option<PathBuf>, port: Option<u16>) -> ExitCode {
    let mut config = match config.as_deref().map(Config::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Some(port) = port {
        config.server.port = port;
    }
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return fail(1, e),
    };
    rt.block_on(async {
        let server = match RelayServer::bind(&config, Arc::new(MonotonicClock::new()), TickMode::Interval).await {
            Ok(s) => s,
            Err(e) => return fail(1, e),
        };
        println!("relay listening on {}", server.url());
        if let Err(e) = tokio::signal::ctrl_c().await {
            log::error!("cannot wait for ctrl-c: {e}");
        }
        log::info!("shutting down");
        server.shutdown().await;
        ExitCode::SUCCESS
    })
}
