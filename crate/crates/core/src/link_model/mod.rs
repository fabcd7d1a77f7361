//! Latency, SNR and capacity for every link in a connectivity matrix.

mod rain;
pub mod weather;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, SatelliteState};
use crate::topology::{ConnectivityMatrix, EdgeKey, GroundSegment, NodeIndex};

pub use rain::{rain_attenuation, rain_coefficients, rain_path_km, specific_attenuation, MAX_RAIN_PATH_KM, RAIN_HEIGHT_KM};
pub use weather::{fetch_weather, ClearSky, FixtureWeather, LiveWeather, WeatherError, WeatherProvider, WeatherSample};

/// km/s
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// −10·log10(k) in dBW/K/Hz.
pub const BOLTZMANN_DB: f64 = 228.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("distance must be positive, got {0} km")]
    Distance(f64),
    #[error("frequency must be positive, got {0} Hz")]
    Frequency(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfParameters {
    #[serde(default = "defaults::eirp")]
    pub eirp_dbw: f64,
    #[serde(default = "defaults::g_over_t")]
    pub g_over_t_db_k: f64,
    #[serde(default = "defaults::bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "defaults::frequency")]
    pub frequency_hz: f64,
    /// Polarization plus misalignment.
    #[serde(default = "defaults::losses")]
    pub fixed_losses_db: f64,
    /// 1 / users per cell.
    #[serde(default = "defaults::density")]
    pub cell_density: f64,
    #[serde(default = "defaults::isl_capacity")]
    pub isl_capacity_mbps: f64,
}

mod defaults {
    pub fn eirp() -> f64 {
        50.0
    }
    pub fn g_over_t() -> f64 {
        10.0
    }
    pub fn bandwidth() -> f64 {
        240e6
    }
    pub fn frequency() -> f64 {
        12e9
    }
    pub fn losses() -> f64 {
        2.0
    }
    pub fn density() -> f64 {
        1.0
    }
    pub fn isl_capacity() -> f64 {
        10_000.0
    }
}

impl Default for RfParameters {
    fn default() -> Self {
        Self {
            eirp_dbw: defaults::eirp(),
            g_over_t_db_k: defaults::g_over_t(),
            bandwidth_hz: defaults::bandwidth(),
            frequency_hz: defaults::frequency(),
            fixed_losses_db: defaults::losses(),
            cell_density: defaults::density(),
            isl_capacity_mbps: defaults::isl_capacity(),
        }
    }
}

impl RfParameters {
    /// Returns the offending field and the reason.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(("bandwidth_hz", format!("must be positive, got {}", self.bandwidth_hz)));
        }
        if !(1e9..=100e9).contains(&self.frequency_hz) {
            return Err(("frequency_hz", format!("must be within 1-100 GHz, got {}", self.frequency_hz)));
        }
        if !(self.cell_density > 0.0 && self.cell_density <= 1.0) {
            return Err(("cell_density", format!("must be in (0, 1], got {}", self.cell_density)));
        }
        if !(self.isl_capacity_mbps >= 0.0) {
            return Err(("isl_capacity_mbps", format!("must be non-negative, got {}", self.isl_capacity_mbps)));
        }
        for (name, v) in [
            ("eirp_dbw", self.eirp_dbw),
            ("g_over_t_db_k", self.g_over_t_db_k),
            ("fixed_losses_db", self.fixed_losses_db),
        ] {
            if !v.is_finite() {
                return Err((name, "must be finite".into()));
            }
        }
        Ok(())
    }
}

pub fn propagation_delay_ms(distance_km: f64) -> Result<f64, LinkError> {
    if !(distance_km > 0.0) {
        return Err(LinkError::Distance(distance_km));
    }
    Ok(distance_km / SPEED_OF_LIGHT_KM_S * 1000.0)
}

/// Free-space path loss, dB.
pub fn fspl_db(distance_km: f64, frequency_hz: f64) -> Result<f64, LinkError> {
    if !(distance_km > 0.0) {
        return Err(LinkError::Distance(distance_km));
    }
    if !(frequency_hz > 0.0) {
        return Err(LinkError::Frequency(frequency_hz));
    }
    let c = SPEED_OF_LIGHT_KM_S * 1000.0;
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_km * 1000.0 * frequency_hz / c).log10())
}

/// Every term of one downlink budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkBudget {
    pub eirp_dbw: f64,
    pub g_over_t_db_k: f64,
    pub fspl_db: f64,
    pub fixed_losses_db: f64,
    pub rain_db: f64,
    pub boltzmann_db: f64,
    pub bandwidth_db: f64,
    pub snr_db: f64,
    pub capacity_mbps: f64,
}

pub fn link_budget(rf: &RfParameters, distance_km: f64, rain_db: f64) -> Result<LinkBudget, LinkError> {
    let fspl = fspl_db(distance_km, rf.frequency_hz)?;
    let bandwidth_db = 10.0 * rf.bandwidth_hz.log10();
    let snr = rf.eirp_dbw + rf.g_over_t_db_k - fspl - rf.fixed_losses_db - rain_db + BOLTZMANN_DB - bandwidth_db;
    Ok(LinkBudget {
        eirp_dbw: rf.eirp_dbw,
        g_over_t_db_k: rf.g_over_t_db_k,
        fspl_db: fspl,
        fixed_losses_db: rf.fixed_losses_db,
        rain_db,
        boltzmann_db: BOLTZMANN_DB,
        bandwidth_db,
        snr_db: snr,
        capacity_mbps: gsl_capacity_mbps(snr, rf.bandwidth_hz, rf.cell_density),
    })
}

/// Downlink SNR, dB.
pub fn snr_db(rf: &RfParameters, distance_km: f64, elevation_deg: f64, weather: &WeatherSample) -> Result<f64, LinkError> {
    let rain = rain_attenuation(weather, rf.frequency_hz, elevation_deg);
    Ok(link_budget(rf, distance_km, rain)?.snr_db)
}

/// Shannon capacity scaled by cell density, Mbps.
pub fn gsl_capacity_mbps(snr_db: f64, bandwidth_hz: f64, cell_density: f64) -> f64 {
    let linear = 10f64.powf(snr_db / 10.0);
    cell_density * bandwidth_hz * (1.0 + linear).log2() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCharacteristics {
    pub latency_ms: f64,
    pub capacity_mbps: f64,
    pub snr_db: Option<f64>,
}

/// Per-edge scalar values, defined exactly on a connectivity support.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub values: BTreeMap<EdgeKey, f64>,
}

impl LinkMatrix {
    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        self.values.get(&EdgeKey::new(i, j)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub type LatencyMatrix = LinkMatrix;
pub type CapacityMatrix = LinkMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Characterization {
    pub latency: LatencyMatrix,
    pub capacity: CapacityMatrix,
    /// GSL entries only.
    pub snr: LinkMatrix,
    pub warnings: Vec<String>,
}

/// Latency for every edge; fixed capacity for ISLs and a weather-aware
/// budget for GSLs. Weather failures fall back to clear sky with a warning.
pub fn characterize(
    conn: &ConnectivityMatrix,
    states: &[SatelliteState],
    index: &NodeIndex,
    grounds: &[GroundSegment],
    rf: &RfParameters,
    weather: &dyn WeatherProvider,
    t: DateTime<Utc>,
) -> Characterization {
    let mut out = Characterization::default();
    let n_sat = index.num_satellites() as u32;
    let mut samples: BTreeMap<u32, WeatherSample> = BTreeMap::new();

    for &edge in &conn.edges {
        let EdgeKey(a, b) = edge;
        if b < n_sat {
            let d = distance(states[a as usize].ecef_km, states[b as usize].ecef_km);
            // coincident satellites cannot happen in a valid shell; clamp anyway
            let latency = propagation_delay_ms(d.max(1e-9)).unwrap_or(0.0);
            out.latency.values.insert(edge, latency);
            out.capacity.values.insert(edge, rf.isl_capacity_mbps);
            continue;
        }
        let (sat, gnode) = if a < n_sat { (a, b) } else { (b, a) };
        let Some(ground) = grounds.get((gnode - n_sat) as usize) else {
            continue;
        };
        let site = ground.site();
        let (elevation, range) = site.look(states[sat as usize].ecef_km);
        let sample = samples.entry(gnode).or_insert_with(|| {
            match weather.sample(ground.lat_deg, ground.lon_deg, t) {
                Ok(s) => s,
                Err(e) => {
                    out.warnings.push(format!(
                        "weather unavailable for {}: {e}; using clear sky",
                        ground.id
                    ));
                    WeatherSample::clear_sky(ground.lat_deg, ground.lon_deg, t)
                }
            }
        });
        let range = range.max(1e-9);
        let rain = rain_attenuation(sample, rf.frequency_hz, elevation);
        let budget = link_budget(rf, range, rain).expect("positive range and validated frequency");
        out.latency.values.insert(edge, propagation_delay_ms(range).unwrap_or(0.0));
        out.capacity.values.insert(edge, budget.capacity_mbps);
        out.snr.values.insert(edge, budget.snr_db);
    }
    out
}
