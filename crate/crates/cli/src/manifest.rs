//! Manifest written next to sample files so `fit` can find its inputs and
//! downstream tools can undo the normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sif_core::{Error, NormalizeTransform, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Mesh path as given on the command line.
    pub source: String,
    pub seed: u64,
    pub resolution: usize,
    pub padding: usize,
    pub count: usize,
    pub truncation: f64,
    /// Sample files are plain text instead of binary.
    pub text: bool,
    /// The flood fill escaped: the input was not watertight.
    pub leaked: bool,
    pub normalization: ManifestTransform,
    pub files: ManifestFiles,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl ManifestTransform {
    pub fn from_transform(t: &NormalizeTransform<f64>) -> Self {
        Self {
            center: [t.center.x, t.center.y, t.center.z],
            scale: t.scale,
        }
    }
}

/// File names relative to the manifest's directory.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub uniform: String,
    pub surface: String,
    pub near_surface: String,
    pub watertight: String,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(format!("manifest serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: manifest.version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(manifest)
    }
}
