//! Asset registry entries and the modality/scale mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Mesh,
    Volume,
    Semg,
    Imu,
    Motion,
    Ehr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Macro,
    Meso,
    Micro,
    Nano,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Mesh,
        Modality::Volume,
        Modality::Semg,
        Modality::Imu,
        Modality::Motion,
        Modality::Ehr,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Modality::Mesh => "mesh",
            Modality::Volume => "volume",
            Modality::Semg => "semg",
            Modality::Imu => "imu",
            Modality::Motion => "motion",
            Modality::Ehr => "ehr",
        }
    }

    /// Scales at which this data type is acquired.
    pub fn allowed_scales(&self) -> &'static [Scale] {
        match self {
            Modality::Motion | Modality::Imu => &[Scale::Macro],
            Modality::Ehr => &[Scale::Macro, Scale::Meso, Scale::Nano],
            Modality::Mesh => &[Scale::Meso],
            Modality::Semg => &[Scale::Meso, Scale::Micro],
            Modality::Volume => &[Scale::Micro, Scale::Nano],
        }
    }

    pub fn default_scale(&self) -> Scale {
        self.allowed_scales()[0]
    }

    /// File extension used in the asset store.
    pub fn extension(&self) -> &'static str {
        match self {
            Modality::Mesh => "obj",
            Modality::Volume => "raw",
            Modality::Semg | Modality::Imu => "csv",
            Modality::Motion => "motion.json",
            Modality::Ehr => "json",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown modality {s:?}"))
    }
}

impl Scale {
    pub fn tag(&self) -> &'static str {
        match self {
            Scale::Macro => "macro",
            Scale::Meso => "meso",
            Scale::Micro => "micro",
            Scale::Nano => "nano",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "macro" => Ok(Scale::Macro),
            "meso" => Ok(Scale::Meso),
            "micro" => Ok(Scale::Micro),
            "nano" => Ok(Scale::Nano),
            _ => Err(format!("unknown scale {s:?}")),
        }
    }
}

/// Lowercase hex SHA-256.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One registered input asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset_id: String,
    pub modality: Modality,
    pub source_path: String,
    pub scale: Scale,
    pub checksum: String,
    pub acquired_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl AssetRecord {
    pub fn scale_is_allowed(&self) -> bool {
        self.modality.allowed_scales().contains(&self.scale)
    }
}
