//! Fixture files for record/replay.
//!
//! A fixture is keyed by the SHA-256 of the canonical request body (object
//! keys sorted, no insignificant whitespace) and lives at
//! `<fixture_dir>/<endpoint>/<key>.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::transport::RawResponse;
use super::{AdapterError, Endpoint};

/// Compact JSON with object keys in byte order at every level.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Hex SHA-256 of the canonical form of `body`.
pub fn request_key(body: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(body).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FixtureFile {
    endpoint: String,
    request_sha256: String,
    status: u16,
    body: String,
}

#[derive(Debug)]
pub struct FixtureStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            root: root.as_ref().to_path_buf(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, endpoint: Endpoint, key: &str) -> PathBuf {
        self.root.join(endpoint.name()).join(format!("{key}.json"))
    }

    pub fn read(&self, endpoint: Endpoint, key: &str) -> Result<Option<RawResponse>, AdapterError> {
        let path = self.path_for(endpoint, key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(AdapterError::FixtureIo { path, source }),
        };
        let file: FixtureFile = serde_json::from_str(&text).map_err(|e| AdapterError::Decode {
            endpoint,
            message: format!("fixture {}: {e}", path.display()),
        })?;
        if file.request_sha256 != key || file.endpoint != endpoint.path() {
            return Err(AdapterError::Decode {
                endpoint,
                message: format!("fixture {} does not belong to this request", path.display()),
            });
        }
        Ok(Some(RawResponse {
            status: file.status,
            body: file.body,
        }))
    }

    pub fn write(&self, endpoint: Endpoint, key: &str, resp: &RawResponse) -> Result<PathBuf, AdapterError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.path_for(endpoint, key);
        let io = |source| AdapterError::FixtureIo {
            path: path.clone(),
            source,
        };
        let dir = path.parent().expect("fixture path has a parent");
        fs::create_dir_all(dir).map_err(io)?;
        let file = FixtureFile {
            endpoint: endpoint.path().to_string(),
            request_sha256: key.to_string(),
            status: resp.status,
            body: resp.body.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("fixture serializes");
        text.push('\n');
        let tmp = dir.join(format!(".{key}.tmp"));
        {
            let mut f = fs::File::create(&tmp).map_err(io)?;
            f.write_all(text.as_bytes()).map_err(io)?;
        }
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(path)
    }
}
