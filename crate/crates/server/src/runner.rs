//! Engine loop shared by the headless runner and the live server.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use anyhow::Context;
use roomsim_core::events::{parse_event_script, LogEntry};
use roomsim_core::manipulation::ManipulationEvent;
use roomsim_core::trace::snapshot;
use roomsim_core::{parse_scenario, presets, Scenario, ScheduledEvent, Sim, TraceMode, World};

use crate::protocol::StateUpdate;
use crate::server::Shared;

/// Scenario named on the command line: a bundled name or a JSON file.
pub fn resolve_scenario(arg: Option<&str>) -> anyhow::Result<Scenario> {
    match arg.unwrap_or("evaluation") {
        "evaluation" => Ok(presets::evaluation()),
        "corridor" => Ok(presets::corridor()),
        "empty" => Ok(presets::empty()),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {path}"))?;
            parse_scenario(&text).with_context(|| format!("loading scenario {path}"))
        }
    }
}

pub fn load_events(path: &Path) -> anyhow::Result<Vec<ScheduledEvent>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading events {}", path.display()))?;
    Ok(parse_event_script(&text)?)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub events: Vec<ScheduledEvent>,
    pub trace_out: Option<PathBuf>,
    /// Sim seconds per wall second; 0 runs as fast as possible.
    pub realtime_factor: f64,
    /// Sim seconds to run; `None` runs until stopped.
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub ticks: u64,
    pub sim_seconds: f64,
    pub wall_seconds: f64,
    pub digest: Option<String>,
    pub violation_ticks: u64,
    pub first_violation: Option<String>,
    pub placements: usize,
    pub rejected: usize,
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ticks, {:.1} s simulated in {:.2} s, {} placements, {} rejected events, {} violation ticks",
            self.ticks, self.sim_seconds, self.wall_seconds, self.placements, self.rejected, self.violation_ticks
        )?;
        if let Some(v) = &self.first_violation {
            write!(f, " (first: {v})")?;
        }
        if let Some(d) = &self.digest {
            write!(f, ", trace digest {d}")?;
        }
        Ok(())
    }
}

pub fn state_update(world: &World, events: Vec<LogEntry>) -> StateUpdate {
    StateUpdate { area: world.area, scene: world.scene.clone(), record: snapshot(world, events) }
}

/// Steps the engine until the duration elapses or `stop` is raised,
/// exchanging commands and snapshots with `shared` on control ticks.
pub fn run(config: RunConfig, shared: Option<&Shared>, stop: &AtomicBool) -> anyhow::Result<Summary> {
    let mut world = World::from_scenario(config.scenario)?;
    world.schedule(&config.events);
    let tracing = config.trace_out.is_some();
    let mut sim = Sim::new(world, if tracing { TraceMode::Hash } else { TraceMode::Off });
    if let Some(path) = &config.trace_out {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        sim = sim.with_writer(Box::new(BufWriter::new(file)));
    }
    sim.collect_log = true;
    let end = config.duration.map(|d| sim.world.clock.tick_at(d));
    let start = Instant::now();
    let mut placements = 0;
    let mut rejected = 0;
    while end.is_none_or(|e| sim.world.clock.tick < e) && !stop.load(Ordering::Relaxed) {
        let control = sim.world.clock.is_control_tick();
        if control {
            if let Some(s) = shared {
                for e in s.take_events() {
                    sim.world.inject_event(e);
                }
            }
        }
        sim.step();
        if !control {
            continue;
        }
        let log: Vec<LogEntry> = sim.log.drain(..).map(|(_, e)| e).collect();
        for e in &log {
            match e {
                LogEntry::Manipulation { event: ManipulationEvent::Completed { .. }, .. } => placements += 1,
                LogEntry::Rejected { seq, reason, .. } => {
                    rejected += 1;
                    tracing::warn!(seq, reason, "event rejected");
                }
                _ => {}
            }
        }
        if let Some(s) = shared {
            s.publish(state_update(&sim.world, log));
        }
        if config.realtime_factor > 0.0 {
            let due = Duration::from_secs_f64(sim.world.clock.time() / config.realtime_factor);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    sim.flush();
    Ok(Summary {
        ticks: sim.world.clock.tick,
        sim_seconds: sim.world.clock.time(),
        wall_seconds: start.elapsed().as_secs_f64(),
        digest: tracing.then(|| sim.digest()),
        violation_ticks: sim.violation_ticks,
        first_violation: sim.violations.first().map(|(t, v)| format!("tick {t}: {v:?}")),
        placements,
        rejected,
    })
}
