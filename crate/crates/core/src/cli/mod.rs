//! `leosim` command line: precompute a bundle, play it back, and analyse it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::backstage::{apply_delta, load_bundle, precompute, save_bundle, BackstageError, LinkDelta, ScenarioBundle};
use crate::config::{load_scenario, ConfigError};
use crate::link_model::{link_budget, rain_attenuation, LinkError, RfParameters, WeatherSample};
use crate::mainstage::{run, EventKind, MainstageError, Mode, RunOptions};
use crate::routing::{export_route_commands, RoutingError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}
data_error!(BackstageError, ConfigError, MainstageError, RoutingError, std::io::Error, csv::Error);

impl From<LinkError> for CliError {
    fn from(e: LinkError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "leosim", version, about = "LEO constellation network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a scenario bundle from a YAML config.
    Precompute {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Play a bundle back and stream events as JSON lines.
    Run {
        bundle: PathBuf,
        /// Pace ticks to the wall clock.
        #[arg(long, conflicts_with = "fast")]
        realtime: bool,
        /// Run as fast as possible (default).
        #[arg(long)]
        fast: bool,
        /// Event log path; stdout when absent.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Also write route command files here every tick.
        #[arg(long)]
        export_routes: Option<PathBuf>,
    },
    /// ISL churn per simulated minute.
    Churn {
        bundle: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Print a downlink budget term by term.
    Linkbudget(LinkBudgetArgs),
    /// Write route command files for every tick without playback.
    ExportRoutes {
        bundle: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct LinkBudgetArgs {
    /// Slant range, km.
    #[arg(long, default_value_t = 550.0)]
    pub distance: f64,
    /// Carrier frequency, Hz.
    #[arg(long, default_value_t = 12e9)]
    pub freq: f64,
    /// dBW.
    #[arg(long, default_value_t = 50.0)]
    pub eirp: f64,
    /// dB/K.
    #[arg(long, default_value_t = 10.0)]
    pub gt: f64,
    /// Hz.
    #[arg(long, default_value_t = 240e6)]
    pub bw: f64,
    /// Fixed losses, dB.
    #[arg(long, default_value_t = 2.0)]
    pub loss: f64,
    /// Rain rate, mm/h.
    #[arg(long, default_value_t = 0.0)]
    pub rain: f64,
    /// Elevation angle, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub elev: f64,
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChurnClass {
    None,
    Green,
    Orange,
    Red,
}

impl ChurnClass {
    pub fn from_instances(n: u64) -> Self {
        match n {
            0 => ChurnClass::None,
            1 => ChurnClass::Green,
            2 => ChurnClass::Orange,
            _ => ChurnClass::Red,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChurnMinute {
    pub minute: u64,
    pub changes: u64,
    /// Ticks in this minute with at least one ISL change.
    pub instances: u64,
    pub class: ChurnClass,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChurnReport {
    pub isl_total: u32,
    pub minutes: Vec<ChurnMinute>,
}

impl ChurnReport {
    /// Buckets ISL adds and removes by the minute of the tick they occur in.
    /// Every minute spanned by `[0, last_t_ms]` gets a row.
    pub fn from_deltas(deltas: &[LinkDelta], num_satellites: usize, isl_total: u32, last_t_ms: u64) -> Self {
        let mut per: BTreeMap<u64, (u64, u64)> = (0..=last_t_ms / 60_000).map(|m| (m, (0, 0))).collect();
        for d in deltas {
            let n = d.isl_changes(num_satellites) as u64;
            if n > 0 {
                let slot = per.entry(d.t_ms / 60_000).or_default();
                slot.0 += n;
                slot.1 += 1;
            }
        }
        let minutes = per
            .into_iter()
            .map(|(minute, (changes, instances))| ChurnMinute {
                minute,
                changes,
                instances,
                class: ChurnClass::from_instances(instances),
                fraction: if isl_total == 0 { 0.0 } else { changes as f64 / isl_total as f64 },
            })
            .collect();
        Self { isl_total, minutes }
    }

    pub fn from_bundle(bundle: &ScenarioBundle) -> Result<Self, CliError> {
        if bundle.header.relevance_filtered {
            return Err(CliError::Data(
                "bundle deltas are relevance-filtered; rerun precompute with simulation.relevance_filter: false".into(),
            ));
        }
        let last = bundle.deltas.last().map_or(bundle.initial.t_ms, |d| d.t_ms);
        Ok(Self::from_deltas(
            &bundle.deltas,
            bundle.header.index.num_satellites(),
            bundle.header.isl_total,
            last,
        ))
    }

    pub fn total_changes(&self) -> u64 {
        self.minutes.iter().map(|m| m.changes).sum()
    }

    pub fn mean_changes_per_minute(&self) -> f64 {
        if self.minutes.is_empty() {
            0.0
        } else {
            self.total_changes() as f64 / self.minutes.len() as f64
        }
    }

    pub fn mean_fraction(&self) -> f64 {
        if self.isl_total == 0 {
            0.0
        } else {
            self.mean_changes_per_minute() / self.isl_total as f64
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.minutes {
            w.serialize(m)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_table(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "{:>6} {:>8} {:>9} {:>7} {:>9}", "minute", "changes", "instances", "class", "fraction")?;
        for m in &self.minutes {
            let class = serde_json::to_value(m.class).unwrap();
            writeln!(
                out,
                "{:>6} {:>8} {:>9} {:>7} {:>9.5}",
                m.minute,
                m.changes,
                m.instances,
                class.as_str().unwrap_or(""),
                m.fraction
            )?;
        }
        writeln!(out, "isl total: {}", self.isl_total)?;
        writeln!(out, "total changes: {}", self.total_changes())?;
        writeln!(
            out,
            "mean per minute: {:.3} ({:.4}% of ISLs)",
            self.mean_changes_per_minute(),
            100.0 * self.mean_fraction()
        )
    }
}

fn cmd_precompute(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_scenario(config).map_err(|e| CliError::Data(format!("{}: {e}", config.display())))?;
    let bundle = precompute(&cfg)?;
    save_bundle(&bundle, out)?;
    log::info!("wrote {} ticks to {}", bundle.num_ticks(), out.display());
    Ok(())
}

fn cmd_run(
    bundle_path: &Path,
    mode: Mode,
    events: Option<&Path>,
    export_routes: Option<PathBuf>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let bundle = load_bundle(bundle_path)?;
    let flows = bundle.header.config.applications.flows.clone();
    let mut sink: Box<dyn Write> = match events {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(stdout)),
    };
    let opts = RunOptions {
        mode,
        route_export: export_routes,
    };
    let result = run(&bundle, &flows, &opts, &mut |e| {
        serde_json::to_writer(&mut sink, e)?;
        sink.write_all(b"\n")?;
        if matches!(e.kind, EventKind::TickLag { .. }) {
            sink.flush()?;
        }
        Ok(())
    });
    // reader went away (e.g. piped into `head`)
    let report = match result {
        Err(MainstageError::Sink(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
        other => other?,
    };
    match sink.flush() {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    log::info!(
        "{} ticks, {} events, median tick {:.2} ms, p95 lag {:.2} ms",
        report.ticks,
        report.events,
        report.median_processing_ms(),
        report.p95_lateness_ms()
    );
    Ok(())
}

fn cmd_linkbudget(a: &LinkBudgetArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rf = RfParameters {
        eirp_dbw: a.eirp,
        g_over_t_db_k: a.gt,
        bandwidth_hz: a.bw,
        frequency_hz: a.freq,
        fixed_losses_db: a.loss,
        cell_density: a.density,
        ..RfParameters::default()
    };
    rf.validate().map_err(|(field, reason)| CliError::Usage(format!("{field}: {reason}")))?;
    if a.rain < 0.0 {
        return Err(CliError::Usage("rain rate must be non-negative".into()));
    }
    let mut sample = WeatherSample::clear_sky(0.0, 0.0, chrono::DateTime::UNIX_EPOCH);
    sample.rain_rate = a.rain;
    let rain_db = rain_attenuation(&sample, a.freq, a.elev);
    let b = link_budget(&rf, a.distance, rain_db)?;
    let rows = [
        ("eirp_dbw", b.eirp_dbw),
        ("g_over_t_db_k", b.g_over_t_db_k),
        ("fspl_db", b.fspl_db),
        ("fixed_losses_db", b.fixed_losses_db),
        ("rain_db", b.rain_db),
        ("boltzmann_db", b.boltzmann_db),
        ("bandwidth_db", b.bandwidth_db),
        ("snr_db", b.snr_db),
        ("capacity_mbps", b.capacity_mbps),
    ];
    if a.csv {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "value"])?;
        for (k, v) in rows {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush()?;
    } else {
        for (k, v) in rows {
            writeln!(out, "{k:<16} {v:>14.6}")?;
        }
    }
    Ok(())
}

fn cmd_export_routes(bundle_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let bundle = load_bundle(bundle_path)?;
    std::fs::create_dir_all(out_dir)?;
    let start = bundle.header.config.simulation.start.timestamp_millis();
    let mut state = bundle.initial.clone();
    export_route_commands(&state.routing, start + state.t_ms as i64, out_dir)?;
    for d in &bundle.deltas {
        apply_delta(&mut state, d)?;
        export_route_commands(&state.routing, start + state.t_ms as i64, out_dir)?;
    }
    Ok(())
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Precompute { config, out } => cmd_precompute(&config, &out),
        Command::Run {
            bundle,
            realtime,
            fast: _,
            events,
            export_routes,
        } => {
            let mode = if realtime { Mode::Realtime } else { Mode::Fast };
            cmd_run(&bundle, mode, events.as_deref(), export_routes, stdout)
        }
        Command::Churn { bundle, csv } => {
            let report = ChurnReport::from_bundle(&load_bundle(&bundle)?)?;
            if csv {
                report.write_csv(stdout)
            } else {
                Ok(report.write_table(stdout)?)
            }
        }
        Command::Linkbudget(args) => cmd_linkbudget(&args, stdout),
        Command::ExportRoutes { bundle, out } => cmd_export_routes(&bundle, &out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backstage::LinkChange;
    use crate::topology::EdgeKey;

    fn isl_delta(t_ms: u64, n: u32) -> LinkDelta {
        LinkDelta {
            tick: t_ms / 1000,
            t_ms,
            added: (0..n / 2)
                .map(|i| LinkChange {
                    edge: EdgeKey::new(2 * i, 2 * i + 1),
                    latency_ms: 1.0,
                    capacity_mbps: 1.0,
                })
                .collect(),
            removed: (0..n - n / 2).map(|i| EdgeKey::new(100 + i, 200 + i)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn two_instances_of_eight_are_orange() {
        let deltas = vec![isl_delta(1000, 0), isl_delta(12_000, 8), isl_delta(40_000, 8), isl_delta(61_000, 3)];
        let r = ChurnReport::from_deltas(&deltas, 1000, 3168, 61_000);
        assert_eq!(r.minutes.len(), 2);
        assert_eq!(r.minutes[0].changes, 16);
        assert_eq!(r.minutes[0].instances, 2);
        assert_eq!(r.minutes[0].class, ChurnClass::Orange);
        assert_eq!(r.minutes[0].fraction, 16.0 / 3168.0);
        assert_eq!(r.minutes[1].class, ChurnClass::Green);
        assert_eq!(r.total_changes(), 19);
    }

    #[test]
    fn ground_links_do_not_count() {
        let mut d = isl_delta(1000, 0);
        d.removed.push(EdgeKey::new(3, 1500));
        let r = ChurnReport::from_deltas(&[d], 1000, 10, 1000);
        assert_eq!(r.total_changes(), 0);
        assert_eq!(r.minutes[0].class, ChurnClass::None);
    }

    #[test]
    fn classes() {
        let c: Vec<_> = (0..5).map(ChurnClass::from_instances).collect();
        assert_eq!(
            c,
            [ChurnClass::None, ChurnClass::Green, ChurnClass::Orange, ChurnClass::Red, ChurnClass::Red]
        );
    }

    #[test]
    fn csv_columns() {
        let r = ChurnReport::from_deltas(&[isl_delta(5000, 8)], 1000, 100, 5000);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("minute,changes,instances,class,fraction"));
        assert_eq!(lines.next(), Some("0,8,1,green,0.08"));
    }
}
