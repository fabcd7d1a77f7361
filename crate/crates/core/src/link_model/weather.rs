//! Weather sources for link attenuation: clear sky, a CSV fixture, or the
//! OpenWeatherMap current-weather API behind a per-minute cache.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{WeatherConfig, WeatherMode};

const OWM_ENDPOINT: &str = "https://api.openweathermap.org/data/2.5/weather";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeatherError {
    #[error("weather request failed: {0}")]
    Http(String),
    #[error("unexpected weather response: {0}")]
    Decode(String),
    #[error("no fixture record within tolerance of ({lat:.4}, {lon:.4}) at {time}")]
    FixtureMiss { lat: f64, lon: f64, time: DateTime<Utc> },
    #[error("weather fixture: {0}")]
    Fixture(String),
    #[error("environment variable `{0}` with the weather API key is not set")]
    MissingApiKey(String),
}

/// Conditions at one place and time. Rates in mm/h, temperature in °C,
/// humidity in %, pressure in hPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub lat: f64,
    pub lon: f64,
    pub time: DateTime<Utc>,
    pub rain_rate: f64,
    pub snow: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub pressure: f64,
}

impl WeatherSample {
    pub fn clear_sky(lat: f64, lon: f64, time: DateTime<Utc>) -> Self {
        Self {
            lat,
            lon,
            time,
            rain_rate: 0.0,
            snow: 0.0,
            temperature: 15.0,
            humidity: 50.0,
            pressure: 1013.25,
        }
    }
}

pub trait WeatherProvider: Send + Sync {
    fn sample(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<WeatherSample, WeatherError>;
}

pub fn fetch_weather(
    provider: &dyn WeatherProvider,
    lat: f64,
    lon: f64,
    t: DateTime<Utc>,
) -> Result<WeatherSample, WeatherError> {
    provider.sample(lat, lon, t)
}

/// Always dry.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClearSky;

impl WeatherProvider for ClearSky {
    fn sample(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<WeatherSample, WeatherError> {
        Ok(WeatherSample::clear_sky(lat, lon, t))
    }
}

#[derive(Debug, Deserialize)]
struct FixtureRow {
    lat: f64,
    lon: f64,
    iso_time: DateTime<Utc>,
    rain_mm_h: f64,
    snow_mm_h: f64,
    temp_c: f64,
    humidity_pct: f64,
    pressure_hpa: f64,
}

/// Nearest-record lookup over a CSV file with header
/// `lat,lon,iso_time,rain_mm_h,snow_mm_h,temp_c,humidity_pct,pressure_hpa`.
///
/// The nearest location wins first; among records at that location the
/// nearest time wins (earlier on a tie).
#[derive(Debug, Clone)]
pub struct FixtureWeather {
    records: Vec<WeatherSample>,
    max_distance_km: f64,
    max_time_gap_s: f64,
}

impl FixtureWeather {
    pub fn new(records: Vec<WeatherSample>, max_distance_km: f64, max_time_gap_s: f64) -> Self {
        Self {
            records,
            max_distance_km,
            max_time_gap_s,
        }
    }

    pub fn from_csv<R: std::io::Read>(
        reader: R,
        max_distance_km: f64,
        max_time_gap_s: f64,
    ) -> Result<Self, WeatherError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<FixtureRow>() {
            let row = row.map_err(|e| WeatherError::Fixture(e.to_string()))?;
            if row.rain_mm_h < 0.0 || row.snow_mm_h < 0.0 {
                return Err(WeatherError::Fixture(format!(
                    "negative precipitation at ({}, {})",
                    row.lat, row.lon
                )));
            }
            records.push(WeatherSample {
                lat: row.lat,
                lon: row.lon,
                time: row.iso_time,
                rain_rate: row.rain_mm_h,
                snow: row.snow_mm_h,
                temperature: row.temp_c,
                humidity: row.humidity_pct,
                pressure: row.pressure_hpa,
            });
        }
        Ok(Self::new(records, max_distance_km, max_time_gap_s))
    }

    pub fn from_path(path: &Path, max_distance_km: f64, max_time_gap_s: f64) -> Result<Self, WeatherError> {
        let file = std::fs::File::open(path)
            .map_err(|e| WeatherError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_csv(file, max_distance_km, max_time_gap_s)
    }

    pub fn records(&self) -> &[WeatherSample] {
        &self.records
    }
}

fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * crate::geometry::EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

impl WeatherProvider for FixtureWeather {
    fn sample(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<WeatherSample, WeatherError> {
        let miss = || WeatherError::FixtureMiss { lat, lon, time: t };
        let nearest = self
            .records
            .iter()
            .map(|r| great_circle_km(lat, lon, r.lat, r.lon))
            .fold(f64::INFINITY, f64::min);
        if !(nearest <= self.max_distance_km) {
            return Err(miss());
        }
        let best = self
            .records
            .iter()
            .filter(|r| great_circle_km(lat, lon, r.lat, r.lon) == nearest)
            .min_by_key(|r| ((r.time - t).num_milliseconds().abs(), r.time))
            .ok_or_else(miss)?;
        let gap_s = (best.time - t).num_milliseconds().abs() as f64 / 1000.0;
        if gap_s > self.max_time_gap_s {
            return Err(miss());
        }
        Ok(best.clone())
    }
}

/// Minimal GET transport so the live client can be exercised offline.
pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, WeatherError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str) -> Result<String, WeatherError> {
        let resp = self.agent.get(url).call().map_err(|e| WeatherError::Http(e.to_string()))?;
        resp.into_string().map_err(|e| WeatherError::Http(e.to_string()))
    }
}

/// Counting semaphore capping concurrent upstream requests.
struct RequestLimiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl RequestLimiter {
    fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.available.lock().unwrap();
            while *n == 0 {
                n = self.freed.wait(n).unwrap();
            }
            *n -= 1;
        }
        let out = f();
        *self.available.lock().unwrap() += 1;
        self.freed.notify_one();
        out
    }
}

type CacheKey = (i64, i64, i64);
type CacheSlot = Arc<OnceLock<Result<WeatherSample, WeatherError>>>;

/// OpenWeatherMap current-weather client. Responses are cached per
/// (location rounded to 0.1°, UTC minute); concurrent identical queries
/// share one upstream call.
pub struct LiveWeather<T: HttpTransport = UreqTransport> {
    transport: T,
    api_key: String,
    endpoint: String,
    cache: Mutex<HashMap<CacheKey, CacheSlot>>,
    limiter: RequestLimiter,
}

#[derive(Deserialize, Default)]
struct OwmPrecip {
    #[serde(rename = "1h", default)]
    one_hour: f64,
}

#[derive(Deserialize)]
struct OwmMain {
    temp: f64,
    pressure: f64,
    humidity: f64,
}

#[derive(Deserialize)]
struct OwmResponse {
    main: OwmMain,
    #[serde(default)]
    rain: Option<OwmPrecip>,
    #[serde(default)]
    snow: Option<OwmPrecip>,
}

/// Maps an OpenWeatherMap current-weather body (metric units).
pub fn parse_owm_response(body: &str, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<WeatherSample, WeatherError> {
    let r: OwmResponse = serde_json::from_str(body).map_err(|e| WeatherError::Decode(e.to_string()))?;
    Ok(WeatherSample {
        lat,
        lon,
        time: t,
        rain_rate: r.rain.map(|p| p.one_hour).unwrap_or(0.0).max(0.0),
        snow: r.snow.map(|p| p.one_hour).unwrap_or(0.0).max(0.0),
        temperature: r.main.temp,
        humidity: r.main.humidity,
        pressure: r.main.pressure,
    })
}

impl LiveWeather<UreqTransport> {
    pub fn from_env(var: &str, max_concurrent: usize) -> Result<Self, WeatherError> {
        let key = std::env::var(var).map_err(|_| WeatherError::MissingApiKey(var.to_string()))?;
        Ok(Self::with_transport(
            UreqTransport::new(Duration::from_secs(10)),
            key,
            max_concurrent,
        ))
    }
}

impl<T: HttpTransport> LiveWeather<T> {
    pub fn with_transport(transport: T, api_key: String, max_concurrent: usize) -> Self {
        Self {
            transport,
            api_key,
            endpoint: OWM_ENDPOINT.to_string(),
            cache: Mutex::new(HashMap::new()),
            limiter: RequestLimiter::new(max_concurrent),
        }
    }

    pub fn cache_key(lat: f64, lon: f64, t: DateTime<Utc>) -> CacheKey {
        (
            (lat * 10.0).round() as i64,
            (lon * 10.0).round() as i64,
            t.timestamp().div_euclid(60),
        )
    }

    fn request_url(&self, lat: f64, lon: f64) -> String {
        format!(
            "{}?lat={lat:.4}&lon={lon:.4}&appid={}&units=metric",
            self.endpoint, self.api_key
        )
    }
}

impl<T: HttpTransport> WeatherProvider for LiveWeather<T> {
    fn sample(&self, lat: f64, lon: f64, t: DateTime<Utc>) -> Result<WeatherSample, WeatherError> {
        let slot = {
            let mut cache = self.cache.lock().unwrap();
            cache.entry(Self::cache_key(lat, lon, t)).or_default().clone()
        };
        slot.get_or_init(|| {
            self.limiter.run(|| {
                let body = self.transport.get(&self.request_url(lat, lon))?;
                parse_owm_response(&body, lat, lon, t)
            })
        })
        .clone()
    }
}

/// Builds the provider a scenario asks for. Fixture paths must already be
/// resolved.
pub fn provider_from_config(cfg: &WeatherConfig) -> Result<Box<dyn WeatherProvider>, WeatherError> {
    Ok(match cfg.mode {
        WeatherMode::Clear => Box::new(ClearSky),
        WeatherMode::Fixture => {
            let path = cfg
                .fixture
                .as_ref()
                .ok_or_else(|| WeatherError::Fixture("fixture mode needs a fixture path".into()))?;
            Box::new(FixtureWeather::from_path(
                path,
                cfg.fixture_max_distance_km,
                cfg.fixture_max_time_gap_s,
            )?)
        }
        WeatherMode::Live => Box::new(LiveWeather::from_env(&cfg.api_key_env, cfg.max_concurrent_requests)?),
    })
}
