//! Dataset manifest: the TOML record written by the range pass.
//!
//! ```toml
//! dataset = "mmi"
//! dataset_range_uv = 1843.5
//! target_rate_hz = 256.0
//! window_s = 60.0
//! stride_s = 60.0
//! scale_mode = "sequence"
//! sequences = 42
//! cache = "mmi.cache"
//!
//! [[recordings]]
//! path = "S001R01.edf"
//! subject = 1
//! session = 1
//! native_rate_hz = 160.0
//! channels = ["Fp1.", "Fp2.", "F7.", "MISSING", ...]   # one per target electrode
//! sequences = 2
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::scale::ScaleMode;

/// Placeholder for a target electrode with no source channel.
pub const MISSING: &str = "MISSING";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub path: String,
    pub subject: u32,
    pub session: u32,
    pub native_rate_hz: f64,
    /// Source label assigned to each of the 19 targets, in target order.
    pub channels: Vec<String>,
    pub sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub dataset_range_uv: f64,
    pub target_rate_hz: f64,
    pub window_s: f64,
    pub stride_s: f64,
    pub scale_mode: ScaleMode,
    pub sequences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<String>,
    pub recordings: Vec<RecordingEntry>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
