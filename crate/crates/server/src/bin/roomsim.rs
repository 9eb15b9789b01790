use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use roomsim_core::presets;
use roomsim_server::runner::{load_events, resolve_scenario};
use roomsim_server::{router, run, RunConfig, Shared};
use tracing_subscriber::EnvFilter;

/// Simulate a furniture-moving robot swarm and serve its state live.
#[derive(Debug, Parser)]
#[command(name = "roomsim", version)]
struct Cli {
    /// Bundled scenario name (evaluation, corridor, empty) or a JSON file.
    #[arg(long, env = "ROOMSIM_SCENARIO")]
    scenario: Option<String>,
    /// Overrides the scenario's seed.
    #[arg(long, env = "ROOMSIM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ROOMSIM_PORT", default_value_t = 8765)]
    port: u16,
    /// Run without the network server.
    #[arg(long, env = "ROOMSIM_HEADLESS")]
    headless: bool,
    /// Scripted event file (JSON lines). The evaluation scenario defaults
    /// to its chair walk.
    #[arg(long, env = "ROOMSIM_EVENTS")]
    events: Option<PathBuf>,
    /// Writes the canonical trace here.
    #[arg(long, env = "ROOMSIM_TRACE_OUT")]
    trace_out: Option<PathBuf>,
    /// Sim seconds per wall second, 0 for as fast as possible. Defaults to
    /// 0 headless and 1 when serving.
    #[arg(long, env = "ROOMSIM_REALTIME_FACTOR")]
    realtime_factor: Option<f64>,
    /// Sim seconds to run. Headless runs default to the end of the event
    /// script plus 60 s; the server otherwise runs until interrupted.
    #[arg(long, env = "ROOMSIM_DURATION")]
    duration: Option<f64>,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("ROOMSIM_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut scenario = resolve_scenario(cli.scenario.as_deref())?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    let events = match (&cli.events, cli.scenario.as_deref().unwrap_or("evaluation")) {
        (Some(path), _) => load_events(path)?,
        (None, "evaluation") => presets::evaluation_events(),
        (None, _) => Vec::new(),
    };
    let realtime_factor = cli.realtime_factor.unwrap_or(if cli.headless { 0.0 } else { 1.0 });
    anyhow::ensure!(realtime_factor >= 0.0 && realtime_factor.is_finite(), "--realtime-factor must be >= 0");
    let last_event = events.iter().map(|e| e.t).fold(0.0, f64::max);
    let duration = cli.duration.or(cli.headless.then_some(last_event + 60.0));
    let config = RunConfig { scenario, events, trace_out: cli.trace_out, realtime_factor, duration };

    if cli.headless {
        let summary = run(config, None, &AtomicBool::new(false))?;
        println!("{summary}");
        if summary.violation_ticks > 0 {
            std::process::exit(2);
        }
        return Ok(());
    }

    let shared = Shared::new();
    let stop = Arc::new(AtomicBool::new(false));
    let engine = {
        let shared = shared.clone();
        let stop = stop.clone();
        std::thread::spawn(move || run(config, Some(&shared), &stop))
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", cli.port))
            .await
            .with_context(|| format!("binding port {}", cli.port))?;
        tracing::info!("serving ws://{}/ws", listener.local_addr()?);
        let engine_done = {
            let stop = stop.clone();
            async move {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => stop.store(true, Ordering::Relaxed),
                    _ = async {
                        while !engine.is_finished() {
                            tokio::time::sleep(std::time::Duration::from_millis(100)).await;
                        }
                    } => {}
                }
                engine
            }
        };
        let (tx, rx) = tokio::sync::oneshot::channel();
        let server = axum::serve(listener, router(shared)).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        let serving = tokio::spawn(async move { server.await });
        let engine = engine_done.await;
        let _ = tx.send(());
        serving.await??;
        let summary = engine.join().map_err(|_| anyhow::anyhow!("engine thread panicked"))??;
        println!("{summary}");
        anyhow::Ok(())
    })
}
