//! Content-hashed JSON artifacts written by every pipeline stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

pub const TOOL: &str = "mrcie";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn io(path: &Path, e: std::io::Error) -> CoreError {
    CoreError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Hash of a value's canonical JSON (object keys sorted).
pub fn value_hash<T: Serialize>(v: &T) -> Result<String> {
    let canon = serde_json::to_value(v).map_err(|e| CoreError::numeric(format!("serialise: {e}")))?;
    Ok(sha256_hex(canon.to_string().as_bytes()))
}

/// What identifies a stage run: same header, same output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub params: Value,
}

impl Header {
    pub fn new<P: Serialize>(kind: &str, seed: u64, inputs: BTreeMap<String, String>, params: &P) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            tool: TOOL.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed,
            inputs,
            params: serde_json::to_value(params).map_err(|e| CoreError::numeric(format!("serialise: {e}")))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    #[serde(flatten)]
    pub header: Header,
    /// SHA-256 of the canonical JSON of header and payload.
    pub content_hash: String,
    pub payload: T,
}

#[derive(Serialize)]
struct Hashed<'a, T> {
    #[serde(flatten)]
    header: &'a Header,
    payload: &'a T,
}

impl<T: Serialize + DeserializeOwned> Artifact<T> {
    pub fn new(header: Header, payload: T) -> Result<Self> {
        let content_hash = value_hash(&Hashed {
            header: &header,
            payload: &payload,
        })?;
        Ok(Self {
            header,
            content_hash,
            payload,
        })
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let v = serde_json::to_value(self).map_err(|e| CoreError::numeric(format!("serialise: {e}")))?;
        let mut out = serde_json::to_vec_pretty(&v).map_err(|e| CoreError::numeric(format!("serialise: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::validation(format!("{}: {e}", path.display())))
    }

    /// Recomputes the hash; false when the file was edited by hand.
    pub fn verify(&self) -> bool {
        value_hash(&Hashed {
            header: &self.header,
            payload: &self.payload,
        })
        .map(|h| h == self.content_hash)
        .unwrap_or(false)
    }

    /// The stored artifact at `path` when it was produced from `header`.
    pub fn cached(path: &Path, header: &Header) -> Option<Self> {
        let a = Self::read(path).ok()?;
        (a.header == *header && a.verify()).then_some(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_metadata_gives_identical_bytes() {
        let mk = || {
            let mut inputs = BTreeMap::new();
            inputs.insert("b".to_string(), "2".to_string());
            inputs.insert("a".to_string(), "1".to_string());
            let h = Header::new("x", 7, inputs, &serde_json::json!({"z": 1, "k": [1.5, 2.0]})).unwrap();
            Artifact::new(h, vec![0.1, 1e-300]).unwrap()
        };
        let (a, b) = (mk(), mk());
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert!(a.verify());
        let mut c = a.clone();
        c.payload[0] = 0.2;
        assert!(!c.verify());
    }

    #[test]
    fn cache_requires_matching_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let h = Header::new("x", 1, BTreeMap::new(), &1).unwrap();
        Artifact::new(h.clone(), 3u32).unwrap().write(&p).unwrap();
        assert!(Artifact::<u32>::cached(&p, &h).is_some());
        let other = Header::new("x", 2, BTreeMap::new(), &1).unwrap();
        assert!(Artifact::<u32>::cached(&p, &other).is_none());
    }
}
