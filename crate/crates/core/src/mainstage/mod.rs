//! Playback: fold deltas tick by tick, optionally paced to the wall clock,
//! and run a flow-level max-min traffic model over the live state.

mod allocate;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backstage::{apply_delta, BackstageError, ScenarioBundle};
use crate::link_model::LinkMatrix;
use crate::routing::{export_route_commands, RoutingError};

pub use allocate::{allocate_throughput, allocate_throughput_exact, FlowDemand};

#[derive(Debug, Error)]
pub enum MainstageError {
    #[error("flow `{0}` is not configured in the bundle")]
    UnknownFlow(String),
    #[error(transparent)]
    Bundle(#[from] BackstageError),
    #[error(transparent)]
    Routes(#[from] RoutingError),
    #[error("event sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// Traffic demand between two ground segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flow {
    pub id: String,
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub start_s: f64,
    /// Runs to the end of the window when absent.
    #[serde(default)]
    pub duration_s: Option<f64>,
    /// Unlimited when absent.
    #[serde(default)]
    pub demand_mbps: Option<f64>,
    #[serde(default)]
    pub disruption_window_ms: u64,
}

impl Flow {
    pub fn active_at(&self, t_ms: u64) -> bool {
        let t = t_ms as f64 / 1000.0;
        t >= self.start_s && self.duration_s.map_or(true, |d| t < self.start_s + d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub tick: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// One JSON object per line, discriminated by `kind`. Paths are node
/// index sequences; latencies are one-way unless named `rtt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    LinkUp {
        a: u32,
        b: u32,
        latency_ms: f64,
        capacity_mbps: f64,
    },
    LinkDown {
        a: u32,
        b: u32,
    },
    LinkModified {
        a: u32,
        b: u32,
        latency_ms: f64,
        capacity_mbps: f64,
    },
    PathChange {
        flow: String,
        old_path: Vec<u32>,
        new_path: Vec<u32>,
        old_hops: Option<u32>,
        new_hops: Option<u32>,
        old_latency_ms: Option<f64>,
        new_latency_ms: Option<f64>,
    },
    FlowStats {
        flow: String,
        rate_mbps: f64,
        latency_ms: Option<f64>,
        hops: Option<u32>,
    },
    ProbeResult {
        flow: String,
        rtt_ms: Option<f64>,
        lost: bool,
    },
    TickLag {
        processing_ms: f64,
        interval_ms: u64,
        /// How late the tick started relative to its deadline.
        lateness_ms: f64,
    },
    Warning {
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Rtt(f64),
    Loss,
}

/// Sum of link latencies along a path, if every link is known.
pub fn path_latency_ms(path: &[u32], latency: &LinkMatrix) -> Option<f64> {
    if path.len() < 2 {
        return None;
    }
    path.windows(2).map(|w| latency.get(w[0], w[1])).sum()
}

/// Round trip over the current path: twice the one-way sum.
pub fn probe_latency(path: Option<&[u32]>, latency: &LinkMatrix) -> Probe {
    match path.and_then(|p| path_latency_ms(p, latency)) {
        Some(one_way) => Probe::Rtt(2.0 * one_way),
        None => Probe::Loss,
    }
}

/// Ticks with zero reported rate after a path change, counting the change
/// tick itself: `ceil(window / interval)`.
pub fn disruption_ticks(window_ms: u64, interval_ms: u64) -> u64 {
    window_ms.div_ceil(interval_ms.max(1))
}

/// Rate to report at `tick` given the tick of the latest path change.
pub fn apply_disruption(rate: f64, tick: u64, change_tick: Option<u64>, window_ms: u64, interval_ms: u64) -> f64 {
    match change_tick {
        Some(c) if tick >= c && tick < c + disruption_ticks(window_ms, interval_ms) => 0.0,
        _ => rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Realtime,
    Fast,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    /// Write `routes_<unix_millis>.cmd` for every tick here.
    pub route_export: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Fast,
            route_export: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub ticks: u64,
    pub events: u64,
    pub processing_ms: Vec<f64>,
    pub lateness_ms: Vec<f64>,
    pub wall: Duration,
}

fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

impl RunReport {
    pub fn median_processing_ms(&self) -> f64 {
        quantile(&self.processing_ms, 0.5)
    }

    pub fn p95_processing_ms(&self) -> f64 {
        quantile(&self.processing_ms, 0.95)
    }

    pub fn p95_lateness_ms(&self) -> f64 {
        quantile(&self.lateness_ms, 0.95)
    }
}

struct FlowState<'a> {
    flow: &'a Flow,
    pair: (u32, u32),
    path: Option<Vec<u32>>,
    seen: bool,
    /// One-way latency reported at the previous active tick.
    last_latency: Option<f64>,
    last_change: Option<u64>,
}

/// Plays the bundle back, handing every event to `emit` in tick order.
pub fn run(
    bundle: &ScenarioBundle,
    flows: &[Flow],
    opts: &RunOptions,
    emit: &mut dyn FnMut(&SimEvent) -> std::io::Result<()>,
) -> Result<RunReport, MainstageError> {
    let header = &bundle.header;
    let configured = &header.config.applications.flows;
    let mut states = Vec::with_capacity(flows.len());
    for f in flows {
        if !configured.iter().any(|c| c == f) {
            return Err(MainstageError::UnknownFlow(f.id.clone()));
        }
        let node = |id: &str| header.index.ground_node(id).ok_or_else(|| MainstageError::UnknownFlow(f.id.clone()));
        states.push(FlowState {
            flow: f,
            pair: (node(&f.src)?, node(&f.dst)?),
            path: None,
            seen: false,
            last_latency: None,
            last_change: None,
        });
    }

    let interval_ms = header.config.simulation.interval_ms;
    let interval = Duration::from_millis(interval_ms);
    let start_time = header.config.simulation.start;
    let mut report = RunReport::default();
    let mut state = bundle.initial.clone();
    let started = Instant::now();

    for tick in 0..bundle.num_ticks() as u64 {
        let deadline = started + interval * tick as u32;
        if opts.mode == Mode::Realtime {
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
        }
        let tick_start = Instant::now();
        let mut events: Vec<EventKind> = Vec::new();

        if tick == 0 {
            for w in &header.initial_warnings {
                events.push(EventKind::Warning { message: w.clone() });
            }
        } else {
            let delta = &bundle.deltas[tick as usize - 1];
            for w in &delta.warnings {
                events.push(EventKind::Warning { message: w.clone() });
            }
            for c in &delta.added {
                events.push(EventKind::LinkUp {
                    a: c.edge.0,
                    b: c.edge.1,
                    latency_ms: c.latency_ms,
                    capacity_mbps: c.capacity_mbps,
                });
            }
            for e in &delta.removed {
                events.push(EventKind::LinkDown { a: e.0, b: e.1 });
            }
            for c in &delta.modified {
                events.push(EventKind::LinkModified {
                    a: c.edge.0,
                    b: c.edge.1,
                    latency_ms: c.latency_ms,
                    capacity_mbps: c.capacity_mbps,
                });
            }
            apply_delta(&mut state, delta)?;
        }
        let t_ms = state.t_ms;

        for fs in states.iter_mut() {
            if !fs.flow.active_at(t_ms) {
                continue;
            }
            let current = state.routing.paths.get(&fs.pair).filter(|p| p.len() >= 2).cloned();
            if fs.seen && current != fs.path {
                let new = current.clone().unwrap_or_default();
                events.push(EventKind::PathChange {
                    flow: fs.flow.id.clone(),
                    old_hops: fs.path.as_ref().map(|p| p.len() as u32 - 1),
                    new_hops: current.as_ref().map(|p| p.len() as u32 - 1),
                    old_latency_ms: fs.last_latency,
                    new_latency_ms: path_latency_ms(&new, &state.latency),
                    old_path: fs.path.clone().unwrap_or_default(),
                    new_path: new,
                });
                fs.last_change = Some(tick);
            }
            fs.path = current;
            fs.seen = true;
        }

        let active: Vec<usize> = (0..states.len()).filter(|&i| states[i].flow.active_at(t_ms)).collect();
        let demands: Vec<FlowDemand> = active
            .iter()
            .map(|&i| FlowDemand {
                path: states[i].path.as_deref(),
                demand_mbps: states[i].flow.demand_mbps,
            })
            .collect();
        let rates = allocate_throughput(&demands, &state.capacity);
        let mut probes = Vec::new();
        for (k, &i) in active.iter().enumerate() {
            let fs = &mut states[i];
            let rate = apply_disruption(rates[k], tick, fs.last_change, fs.flow.disruption_window_ms, interval_ms);
            let latency = fs.path.as_deref().and_then(|p| path_latency_ms(p, &state.latency));
            events.push(EventKind::FlowStats {
                flow: fs.flow.id.clone(),
                rate_mbps: rate,
                latency_ms: latency,
                hops: fs.path.as_ref().map(|p| p.len() as u32 - 1),
            });
            fs.last_latency = latency;
            let probe = probe_latency(fs.path.as_deref(), &state.latency);
            probes.push(EventKind::ProbeResult {
                flow: fs.flow.id.clone(),
                rtt_ms: match probe {
                    Probe::Rtt(r) => Some(r),
                    Probe::Loss => None,
                },
                lost: probe == Probe::Loss,
            });
        }
        events.extend(probes);

        if let Some(dir) = &opts.route_export {
            let unix_ms = start_time.timestamp_millis() + t_ms as i64;
            export_route_commands(&state.routing, unix_ms, dir)?;
        }

        let processing = tick_start.elapsed().as_secs_f64() * 1000.0;
        let lateness = tick_start.saturating_duration_since(deadline).as_secs_f64() * 1000.0;
        report.processing_ms.push(processing);
        if opts.mode == Mode::Realtime {
            report.lateness_ms.push(lateness);
            events.push(EventKind::TickLag {
                processing_ms: processing,
                interval_ms,
                lateness_ms: lateness,
            });
        }
        for kind in events {
            emit(&SimEvent { tick, t_ms, kind })?;
            report.events += 1;
        }
        report.ticks += 1;
    }

    if opts.mode == Mode::Realtime {
        let end = started + interval * report.ticks as u32;
        let now = Instant::now();
        if end > now {
            std::thread::sleep(end - now);
        }
    }
    report.wall = started.elapsed();
    Ok(report)
}

/// Convenience wrapper collecting all events in memory.
pub fn run_collect(
    bundle: &ScenarioBundle,
    flows: &[Flow],
    opts: &RunOptions,
) -> Result<(Vec<SimEvent>, RunReport), MainstageError> {
    let mut events = Vec::new();
    let report = run(bundle, flows, opts, &mut |e| {
        events.push(e.clone());
        Ok(())
    })?;
    Ok((events, report))
}
