//! Clients for the external vision tools and the LVLM.
//!
//! Every tool speaks the same JSON-over-POST protocol (see [`wire`]). Each
//! endpoint can run live, record live traffic into fixture files, or replay
//! those fixtures without touching the network.

pub mod client;
pub mod fixtures;
pub mod transport;
pub mod wire;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{Generation, Proposal, ScoredMask, ToolClient, VisionTools};
pub use fixtures::{canonical_json, request_key, FixtureStore};
pub use transport::{FnTransport, HttpTransport, RawResponse, RecordingTransport, ReplayTransport, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Segment,
    Propose,
    Embed,
    Generate,
}

impl Endpoint {
    pub const ALL: [Endpoint; 4] = [Self::Segment, Self::Propose, Self::Embed, Self::Generate];

    pub fn path(self) -> &'static str {
        match self {
            Self::Segment => "/v1/segment",
            Self::Propose => "/v1/propose",
            Self::Embed => "/v1/embed",
            Self::Generate => "/v1/generate",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Segment => "segment",
            Self::Propose => "propose",
            Self::Embed => "embed",
            Self::Generate => "generate",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("{endpoint}: transport failure: {message}")]
    Transport { endpoint: Endpoint, message: String },
    #[error("{endpoint}: server error (status {status}): {message}")]
    Server {
        endpoint: Endpoint,
        status: u16,
        message: String,
    },
    #[error("{endpoint}: no replay fixture for request {key} (expected {path})")]
    MissingFixture {
        endpoint: Endpoint,
        key: String,
        path: PathBuf,
    },
    #[error("{endpoint}: malformed response: {message}")]
    Decode { endpoint: Endpoint, message: String },
    #[error("{endpoint}: payload shape mismatch: {message}")]
    Shape { endpoint: Endpoint, message: String },
    #[error("{endpoint}: nothing found for category {category:?}")]
    NothingFound { endpoint: Endpoint, category: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture i/o on {path}: {source}")]
    FixtureIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    #[default]
    Live,
    Record,
    Replay,
}

/// Connection settings for one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub mode: AdapterMode,
    pub fixture_dir: PathBuf,
}

impl Default for AdapterEndpoint {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".to_string(),
            timeout_ms: 30_000,
            retries: 2,
            mode: AdapterMode::Live,
            fixture_dir: PathBuf::from("fixtures"),
        }
    }
}

impl AdapterEndpoint {
    pub fn replay(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: AdapterMode::Replay,
            fixture_dir: fixture_dir.into(),
            ..Self::default()
        }
    }

    pub fn live(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }

    /// Builds the transport for `endpoint` according to `mode`.
    pub fn transport(&self, endpoint: Endpoint) -> Result<Box<dyn Transport>, AdapterError> {
        Ok(match self.mode {
            AdapterMode::Live => Box::new(HttpTransport::new(self, endpoint)?),
            AdapterMode::Replay => Box::new(ReplayTransport::new(FixtureStore::new(&self.fixture_dir))),
            AdapterMode::Record => Box::new(RecordingTransport::new(
                HttpTransport::new(self, endpoint)?,
                FixtureStore::new(&self.fixture_dir),
            )),
        })
    }
}
