//! Scenario file: YAML, `schema_version: 1`.
//!
//! ```yaml
//! schema_version: 1
//! constellation: { name: shell1, isl_pattern: grid, max_isl_range_km: 5000 }
//! satellites: { walker: { orbits: 72, sats_per_orbit: 22, altitude_km: 550, inclination_deg: 53, phasing: 1 } }
//! ground_segments:
//!   - { id: london, role: terminal, lat_deg: 51.5, lon_deg: -0.12 }
//! rf: {}
//! simulation: { start: 2024-01-01T00:00:00Z, duration_s: 60 }
//! weather: { mode: clear }
//! applications: { flows: [] }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link_model::RfParameters;
use crate::mainstage::Flow;
use crate::routing::RouteMetric;
use crate::topology::{GroundSegment, HandoverStrategy, IslLimits, IslPattern, TopologySettings};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("flow `{flow}` references undeclared ground segment `{endpoint}`")]
    UnknownEndpoint { flow: String, endpoint: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub constellation: ConstellationConfig,
    pub satellites: SatelliteSource,
    #[serde(default)]
    pub ground_segments: Vec<GroundSegment>,
    #[serde(default)]
    pub rf: RfParameters,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub weather: WeatherConfig,
    #[serde(default)]
    pub applications: Applications,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationConfig {
    pub name: String,
    pub isl_pattern: IslPattern,
    /// `null` disables the range filter.
    #[serde(default = "default_max_range")]
    pub max_isl_range_km: Option<f64>,
    #[serde(default)]
    pub isl_lat_mask_deg: Option<f64>,
    #[serde(default)]
    pub cross_orbit_offset: u32,
    #[serde(default = "default_min_elevation")]
    pub min_elevation_deg: f64,
}

fn default_max_range() -> Option<f64> {
    Some(5000.0)
}

fn default_min_elevation() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSource {
    #[serde(default)]
    pub tle_file: Option<PathBuf>,
    #[serde(default)]
    pub walker: Option<WalkerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerParams {
    pub orbits: u32,
    pub sats_per_orbit: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    #[serde(default)]
    pub phasing: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub start: DateTime<Utc>,
    pub duration_s: f64,
    #[serde(default = "default_interval")]
    pub interval_ms: u64,
    /// Store deltas only for links and nodes on flow paths.
    #[serde(default = "default_true")]
    pub relevance_filter: bool,
    /// Full next-hop tables toward every node (for churn analysis).
    #[serde(default)]
    pub all_pairs_routing: bool,
    #[serde(default = "default_eps_latency")]
    pub eps_latency_ms: f64,
    #[serde(default = "default_eps_capacity")]
    pub eps_capacity_mbps: f64,
}

fn default_interval() -> u64 {
    1000
}
fn default_true() -> bool {
    true
}
fn default_eps_latency() -> f64 {
    0.01
}
fn default_eps_capacity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherMode {
    #[default]
    Clear,
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherConfig {
    #[serde(default)]
    pub mode: WeatherMode,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_fixture_distance")]
    pub fixture_max_distance_km: f64,
    #[serde(default = "default_fixture_gap")]
    pub fixture_max_time_gap_s: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent_requests: usize,
}

fn default_key_env() -> String {
    "WEATHER_API_KEY".into()
}
fn default_fixture_distance() -> f64 {
    100.0
}
fn default_fixture_gap() -> f64 {
    21_600.0
}
fn default_concurrency() -> usize {
    4
}

impl Default for WeatherConfig {
    fn default() -> Self {
        Self {
            mode: WeatherMode::Clear,
            fixture: None,
            api_key_env: default_key_env(),
            fixture_max_distance_km: default_fixture_distance(),
            fixture_max_time_gap_s: default_fixture_gap(),
            max_concurrent_requests: default_concurrency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Applications {
    #[serde(default)]
    pub flows: Vec<Flow>,
    #[serde(default)]
    pub routing_metric: RouteMetric,
    #[serde(default)]
    pub handover: HandoverStrategy,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let probe: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    match probe.get("schema_version").and_then(serde_yaml::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(invalid("schema_version", "missing or not an integer")),
    }
    let cfg: ScenarioConfig = serde_yaml::from_value(probe).map_err(|e| ConfigError::Schema(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a scenario file and resolves relative paths against its directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    let mut cfg = parse_scenario(&text)?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config is always representable")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.satellites.tle_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.weather.fixture.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.constellation;
        if c.name.trim().is_empty() {
            return Err(invalid("constellation.name", "must not be empty"));
        }
        if let Some(r) = c.max_isl_range_km {
            if !(r > 0.0) {
                return Err(invalid("constellation.max_isl_range_km", format!("must be positive, got {r}")));
            }
        }
        if let Some(m) = c.isl_lat_mask_deg {
            if !(0.0..=90.0).contains(&m) {
                return Err(invalid("constellation.isl_lat_mask_deg", format!("must be in [0, 90], got {m}")));
            }
        }
        if !(0.0..90.0).contains(&c.min_elevation_deg) {
            return Err(invalid(
                "constellation.min_elevation_deg",
                format!("must be in [0, 90), got {}", c.min_elevation_deg),
            ));
        }

        match (&self.satellites.tle_file, &self.satellites.walker) {
            (Some(_), None) => {}
            (None, Some(w)) => {
                if w.orbits == 0 || w.sats_per_orbit == 0 {
                    return Err(invalid("satellites.walker", "orbits and sats_per_orbit must be at least 1"));
                }
                if !(300.0..=2000.0).contains(&w.altitude_km) {
                    return Err(invalid(
                        "satellites.walker.altitude_km",
                        format!("must be within 300-2000 km, got {}", w.altitude_km),
                    ));
                }
            }
            _ => return Err(invalid("satellites", "exactly one of `tle_file` or `walker` is required")),
        }

        let mut ids = BTreeSet::new();
        for (i, g) in self.ground_segments.iter().enumerate() {
            if g.id.is_empty() {
                return Err(invalid(format!("ground_segments[{i}].id"), "must not be empty"));
            }
            if !ids.insert(g.id.as_str()) {
                return Err(invalid(format!("ground_segments[{i}].id"), format!("duplicate id `{}`", g.id)));
            }
            if !(-90.0..=90.0).contains(&g.lat_deg) {
                return Err(invalid(
                    format!("ground_segments[{i}].lat_deg"),
                    format!("must be in [-90, 90], got {}", g.lat_deg),
                ));
            }
            if !(-180.0..=180.0).contains(&g.lon_deg) {
                return Err(invalid(
                    format!("ground_segments[{i}].lon_deg"),
                    format!("must be in [-180, 180], got {}", g.lon_deg),
                ));
            }
        }

        if let Err((field, reason)) = self.rf.validate() {
            return Err(invalid(format!("rf.{field}"), reason));
        }

        let s = &self.simulation;
        if s.interval_ms < 1 {
            return Err(invalid("simulation.interval_ms", "must be at least 1 ms"));
        }
        if !(s.duration_s > 0.0) {
            return Err(invalid("simulation.duration_s", format!("must be positive, got {}", s.duration_s)));
        }
        let duration_ms = s.duration_s * 1000.0;
        if (duration_ms - duration_ms.round()).abs() > 1e-6 || (duration_ms.round() as u64) % s.interval_ms != 0 {
            return Err(invalid(
                "simulation.duration_s",
                format!("{} s is not a whole number of {} ms intervals", s.duration_s, s.interval_ms),
            ));
        }
        for (name, v) in [("eps_latency_ms", s.eps_latency_ms), ("eps_capacity_mbps", s.eps_capacity_mbps)] {
            if !(v >= 0.0) {
                return Err(invalid(format!("simulation.{name}"), "must be non-negative"));
            }
        }

        let w = &self.weather;
        if w.mode == WeatherMode::Fixture && w.fixture.is_none() {
            return Err(invalid("weather.fixture", "required when mode is `fixture`"));
        }
        if w.max_concurrent_requests == 0 {
            return Err(invalid("weather.max_concurrent_requests", "must be at least 1"));
        }

        let mut flow_ids = BTreeSet::new();
        for (i, f) in self.applications.flows.iter().enumerate() {
            if !flow_ids.insert(f.id.as_str()) {
                return Err(invalid(format!("applications.flows[{i}].id"), format!("duplicate id `{}`", f.id)));
            }
            for endpoint in [&f.src, &f.dst] {
                if !ids.contains(endpoint.as_str()) {
                    return Err(ConfigError::UnknownEndpoint {
                        flow: f.id.clone(),
                        endpoint: endpoint.clone(),
                    });
                }
            }
            if f.src == f.dst {
                return Err(invalid(format!("applications.flows[{i}]"), "src and dst must differ"));
            }
            if !(f.start_s >= 0.0) {
                return Err(invalid(format!("applications.flows[{i}].start_s"), "must be non-negative"));
            }
            let end = f.start_s + f.duration_s.unwrap_or(0.0);
            if f.duration_s.is_some_and(|d| !(d > 0.0)) || end > s.duration_s {
                return Err(invalid(
                    format!("applications.flows[{i}].duration_s"),
                    "start + duration must be positive and within the simulation window",
                ));
            }
            if f.start_s >= s.duration_s {
                return Err(invalid(format!("applications.flows[{i}].start_s"), "starts after the simulation ends"));
            }
            if f.demand_mbps.is_some_and(|d| !(d > 0.0)) {
                return Err(invalid(format!("applications.flows[{i}].demand_mbps"), "must be positive or omitted"));
            }
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        (self.simulation.duration_s * 1000.0).round() as u64
    }

    /// Number of ticks in the window; the tick at `duration` itself is not
    /// simulated.
    pub fn num_ticks(&self) -> u64 {
        self.duration_ms() / self.simulation.interval_ms
    }

    pub fn tick_offset_ms(&self, tick: u64) -> u64 {
        tick * self.simulation.interval_ms
    }

    pub fn tick_time(&self, tick: u64) -> DateTime<Utc> {
        self.simulation.start + Duration::milliseconds(self.tick_offset_ms(tick) as i64)
    }

    pub fn topology_settings(&self) -> TopologySettings {
        TopologySettings {
            pattern: self.constellation.isl_pattern,
            limits: IslLimits {
                max_range_km: self.constellation.max_isl_range_km,
                lat_mask_deg: self.constellation.isl_lat_mask_deg,
                cross_orbit_offset: self.constellation.cross_orbit_offset,
            },
            min_elevation_deg: self.constellation.min_elevation_deg,
            handover: self.applications.handover,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "
schema_version: 1
constellation:
  name: shell1
  isl_pattern: grid
satellites:
  walker: { orbits: 72, sats_per_orbit: 22, altitude_km: 550, inclination_deg: 53, phasing: 1 }
ground_segments:
  - { id: gs_1, role: terminal, lat_deg: 51.5, lon_deg: -0.12 }
  - { id: gs_2, role: gateway, lat_deg: 40.7, lon_deg: -74.0 }
simulation:
  start: 2024-01-01T00:00:00Z
  duration_s: 60
applications:
  flows:
    - { id: f1, src: gs_1, dst: gs_2 }
";

    #[test]
    fn minimal_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.simulation.interval_ms, 1000);
        assert_eq!(cfg.applications.handover, HandoverStrategy::DistanceBased);
        assert_eq!(cfg.applications.routing_metric, RouteMetric::Latency);
        assert_eq!(cfg.constellation.max_isl_range_km, Some(5000.0));
        assert_eq!(cfg.weather.mode, WeatherMode::Clear);
        assert_eq!(cfg.num_ticks(), 60);
        assert_eq!(cfg.applications.flows.len(), 1);
    }

    #[test]
    fn applications_optional() {
        let text = MINIMAL.split("applications:").next().unwrap();
        let cfg = parse_scenario(text).unwrap();
        assert!(cfg.applications.flows.is_empty());
    }

    #[test]
    fn unknown_endpoint_is_named() {
        let text = MINIMAL.replace("dst: gs_2", "dst: gs_99");
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownEndpoint {
                flow: "f1".into(),
                endpoint: "gs_99".into()
            }
        );
        assert!(err.to_string().contains("gs_99"));
    }

    #[test]
    fn interval_rules() {
        let zero = MINIMAL.replace("duration_s: 60", "duration_s: 60\n  interval_ms: 0");
        assert!(matches!(parse_scenario(&zero), Err(ConfigError::Invalid { field, .. }) if field == "simulation.interval_ms"));
        let ragged = MINIMAL.replace("duration_s: 60", "duration_s: 60\n  interval_ms: 7000");
        assert!(matches!(parse_scenario(&ragged), Err(ConfigError::Invalid { field, .. }) if field == "simulation.duration_s"));
        let neg = MINIMAL.replace("duration_s: 60", "duration_s: -5");
        assert!(parse_scenario(&neg).is_err());
    }

    #[test]
    fn schema_errors_name_the_field() {
        let typo = MINIMAL.replace("isl_pattern: grid", "isl_pattern: grid\n  max_isl_rnage_km: 3");
        let err = parse_scenario(&typo).unwrap_err();
        assert!(err.to_string().contains("max_isl_rnage_km"), "{err}");
        let v2 = MINIMAL.replace("schema_version: 1", "schema_version: 2");
        assert!(matches!(parse_scenario(&v2), Err(ConfigError::Invalid { field, .. }) if field == "schema_version"));
        let bad_lat = MINIMAL.replace("lat_deg: 51.5", "lat_deg: 91");
        assert!(parse_scenario(&bad_lat).unwrap_err().to_string().contains("lat_deg"));
    }

    #[test]
    fn satellite_source_exclusive() {
        let both = MINIMAL.replace("satellites:\n", "satellites:\n  tle_file: x.tle\n");
        assert!(matches!(parse_scenario(&both), Err(ConfigError::Invalid { field, .. }) if field == "satellites"));
    }

    #[test]
    fn fixture_mode_needs_path_and_resolves() {
        let text = format!("{MINIMAL}weather: {{ mode: fixture }}\n");
        assert!(parse_scenario(&text).is_err());
        let text = format!("{MINIMAL}weather: {{ mode: fixture, fixture: wx.csv }}\n");
        let mut cfg = parse_scenario(&text).unwrap();
        cfg.resolve_paths(Path::new("/data"));
        assert_eq!(cfg.weather.fixture.unwrap(), PathBuf::from("/data/wx.csv"));
    }

    #[test]
    fn round_trip_minimal() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(parse_scenario(&cfg.to_yaml()).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn round_trip_stable(
            lat in -90.0f64..=90.0,
            lon in -180.0f64..=180.0,
            ticks in 1u64..500,
            interval in 1u64..5000,
            range in prop::option::of(1.0f64..10_000.0),
            demand in prop::option::of(0.001f64..1e5),
            density in 0.001f64..=1.0,
        ) {
            let duration_s = (ticks * interval) as f64 / 1000.0;
            let text = format!("
schema_version: 1
constellation: {{ name: s, isl_pattern: intra_orbit, max_isl_range_km: {} }}
satellites: {{ walker: {{ orbits: 3, sats_per_orbit: 4, altitude_km: 700, inclination_deg: 60 }} }}
ground_segments:
  - {{ id: a, role: terminal, lat_deg: {lat:?}, lon_deg: {lon:?} }}
  - {{ id: b, role: gateway, lat_deg: 0, lon_deg: 0, alt_m: 12.5 }}
rf: {{ cell_density: {density:?} }}
simulation: {{ start: 2024-05-05T01:02:03.250Z, duration_s: {duration_s:?}, interval_ms: {interval} }}
applications:
  flows:
    - {{ id: f, src: a, dst: b, demand_mbps: {} }}
", range.map_or("null".to_string(), |r| format!("{r:?}")), demand.map_or("null".to_string(), |d| format!("{d:?}")));
            let cfg = parse_scenario(&text).unwrap();
            let again = parse_scenario(&cfg.to_yaml()).unwrap();
            prop_assert_eq!(&again, &cfg);
            prop_assert_eq!(again.to_yaml(), cfg.to_yaml());
        }
    }
}
