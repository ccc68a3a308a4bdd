use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
/// First line of every CSV output.
pub const CSV_MANIFEST_LINE: &str = "# manifest: manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// `true` when the seed was drawn from system entropy.
    pub seed_from_entropy: bool,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub threads: usize,
    pub wall_time_seconds: f64,
}

pub fn digest(path: &Path) -> Result<InputDigest, Error> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
    })
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Writes a CSV produced by `body`, prefixed with the manifest comment line.
pub fn write_csv(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<(), Error> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CSV_MANIFEST_LINE.as_bytes());
    buf.push(b'\n');
    body(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Writes `value` as `{"manifest": "manifest.json", "<key>": value}`.
pub fn write_json<T: Serialize>(path: &Path, key: &str, value: &T) -> Result<(), Error> {
    let mut map = serde_json::Map::new();
    map.insert("manifest".into(), MANIFEST_FILE.into());
    map.insert(key.into(), serde_json::to_value(value)?);
    fs::write(path, serde_json::to_string_pretty(&map)? + "\n")?;
    Ok(())
}
