//! Bundle file layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "LEOSIMB\0"
//! version    u32
//! total_len  u64      length of the whole file including the trailer
//! records    { tag: u8, len: u64, payload: [u8; len] }*
//! sha256     32 bytes over everything before it
//! ```
//!
//! Record tags: 1 header, 2 initial snapshot, 3 delta (one per tick, in
//! order). Payloads are bincode with its default fixed-int encoding; every
//! map is ordered, so equal bundles encode to equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackstageError, LinkDelta, RelevanceMask, TopologySnapshot};
use crate::config::{parse_scenario, ScenarioConfig};
use crate::topology::NodeIndex;

pub const BUNDLE_MAGIC: &[u8; 8] = b"LEOSIMB\0";
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

const TAG_HEADER: u8 = 1;
const TAG_INITIAL: u8 = 2;
const TAG_DELTA: u8 = 3;
const PREFIX_LEN: usize = 8 + 4 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct BundleHeader {
    pub config: ScenarioConfig,
    pub index: NodeIndex,
    pub isl_total: u32,
    pub relevance_filtered: bool,
    pub mask: RelevanceMask,
    pub initial_warnings: Vec<String>,
}

/// On-disk header: the config travels as its YAML echo.
#[derive(Serialize, Deserialize)]
struct WireHeader {
    config_yaml: String,
    index: NodeIndex,
    isl_total: u32,
    relevance_filtered: bool,
    mask: RelevanceMask,
    initial_warnings: Vec<String>,
    num_deltas: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub header: BundleHeader,
    pub initial: TopologySnapshot,
    pub deltas: Vec<LinkDelta>,
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    bincode::serialize(value).expect("bundle types always serialize")
}

fn push_record(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

impl ScenarioBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let wire = WireHeader {
            config_yaml: h.config.to_yaml(),
            index: h.index.clone(),
            isl_total: h.isl_total,
            relevance_filtered: h.relevance_filtered,
            mask: h.mask.clone(),
            initial_warnings: h.initial_warnings.clone(),
            num_deltas: self.deltas.len() as u64,
        };
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_SCHEMA_VERSION.to_le_bytes());
        out.extend_from_slice(&[0u8; 8]);
        push_record(&mut out, TAG_HEADER, &encode(&wire));
        push_record(&mut out, TAG_INITIAL, &encode(&self.initial));
        for d in &self.deltas {
            push_record(&mut out, TAG_DELTA, &encode(d));
        }
        let total = (out.len() + DIGEST_LEN) as u64;
        out[12..20].copy_from_slice(&total.to_le_bytes());
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BackstageError> {
        if bytes.len() < 12 {
            return Err(BackstageError::Truncated {
                expected: PREFIX_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if &bytes[..8] != BUNDLE_MAGIC {
            return Err(BackstageError::Format("not a bundle file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_SCHEMA_VERSION {
            return Err(BackstageError::VersionMismatch {
                found: version,
                expected: BUNDLE_SCHEMA_VERSION,
            });
        }
        if bytes.len() < PREFIX_LEN + DIGEST_LEN {
            return Err(BackstageError::Truncated {
                expected: (PREFIX_LEN + DIGEST_LEN) as u64,
                found: bytes.len() as u64,
            });
        }
        let total = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if (bytes.len() as u64) < total {
            return Err(BackstageError::Truncated {
                expected: total,
                found: bytes.len() as u64,
            });
        }
        let body_len = bytes.len() - DIGEST_LEN;
        if Sha256::digest(&bytes[..body_len]).as_slice() != &bytes[body_len..] || bytes.len() as u64 != total {
            return Err(BackstageError::Checksum);
        }

        let mut records = Vec::new();
        let mut pos = PREFIX_LEN;
        while pos < body_len {
            if body_len - pos < 9 {
                return Err(BackstageError::Format("dangling record prefix".into()));
            }
            let tag = bytes[pos];
            let len = u64::from_le_bytes(bytes[pos + 1..pos + 9].try_into().unwrap()) as usize;
            pos += 9;
            if len > body_len - pos {
                return Err(BackstageError::Format("record overruns the file".into()));
            }
            records.push((tag, &bytes[pos..pos + len]));
            pos += len;
        }

        let decode_err = |what: &str, e: bincode::Error| BackstageError::Format(format!("{what}: {e}"));
        let mut it = records.into_iter();
        let wire: WireHeader = match it.next() {
            Some((TAG_HEADER, p)) => bincode::deserialize(p).map_err(|e| decode_err("header", e))?,
            _ => return Err(BackstageError::Format("first record must be the header".into())),
        };
        let initial: TopologySnapshot = match it.next() {
            Some((TAG_INITIAL, p)) => bincode::deserialize(p).map_err(|e| decode_err("initial snapshot", e))?,
            _ => return Err(BackstageError::Format("second record must be the initial snapshot".into())),
        };
        let mut deltas = Vec::with_capacity(wire.num_deltas as usize);
        for (tag, p) in it {
            if tag != TAG_DELTA {
                return Err(BackstageError::Format(format!("unexpected record tag {tag}")));
            }
            deltas.push(bincode::deserialize::<LinkDelta>(p).map_err(|e| decode_err("delta", e))?);
        }
        if deltas.len() as u64 != wire.num_deltas {
            return Err(BackstageError::Format(format!(
                "header announces {} deltas, found {}",
                wire.num_deltas,
                deltas.len()
            )));
        }
        let config = parse_scenario(&wire.config_yaml)?;
        let interval_ms = config.simulation.interval_ms;
        let mut prev = initial.t_ms;
        for d in &deltas {
            if d.t_ms != prev + interval_ms {
                return Err(BackstageError::Format(format!(
                    "delta at {} ms does not follow {} ms by the {interval_ms} ms interval",
                    d.t_ms, prev
                )));
            }
            prev = d.t_ms;
        }
        Ok(Self {
            header: BundleHeader {
                config,
                index: wire.index,
                isl_total: wire.isl_total,
                relevance_filtered: wire.relevance_filtered,
                mask: wire.mask,
                initial_warnings: wire.initial_warnings,
            },
            initial,
            deltas,
        })
    }

    pub fn checksum_hex(&self) -> String {
        let bytes = self.to_bytes();
        bytes[bytes.len() - DIGEST_LEN..].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn num_ticks(&self) -> usize {
        self.deltas.len() + 1
    }
}

pub fn save_bundle(bundle: &ScenarioBundle, path: &Path) -> Result<(), BackstageError> {
    std::fs::write(path, bundle.to_bytes()).map_err(|source| BackstageError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_bundle(path: &Path) -> Result<ScenarioBundle, BackstageError> {
    let bytes = std::fs::read(path).map_err(|source| BackstageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioBundle::from_bytes(&bytes)
}
