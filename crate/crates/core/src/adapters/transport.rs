use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::fixtures::{canonical_json, request_key, FixtureStore};
use super::{AdapterEndpoint, AdapterError, Endpoint};

/// Status and raw body of a tool response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

impl RawResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            body: body.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Delivers one request body to one endpoint.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError>;
}

/// Live HTTP transport with a per-request timeout and bounded retries on
/// connection failures and 5xx responses.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    retries: u32,
}

impl HttpTransport {
    pub fn new(settings: &AdapterEndpoint, endpoint: Endpoint) -> Result<Self, AdapterError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build()
            .map_err(|e| AdapterError::Transport {
                endpoint,
                message: e.to_string(),
            })?;
        Ok(Self {
            client,
            base_url: settings.base_url.trim_end_matches('/').to_string(),
            retries: settings.retries,
        })
    }

    fn attempt(&self, endpoint: Endpoint, body: &str) -> Result<RawResponse, AdapterError> {
        let url = format!("{}{}", self.base_url, endpoint.path());
        let resp = self
            .client
            .post(&url)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| AdapterError::Transport {
                endpoint,
                message: format!("{url}: {e}"),
            })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| AdapterError::Transport {
            endpoint,
            message: format!("{url}: reading body: {e}"),
        })?;
        Ok(RawResponse { status, body })
    }
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        let text = canonical_json(body);
        let mut attempt = 0;
        loop {
            let result = self.attempt(endpoint, &text);
            let retryable = match &result {
                Err(AdapterError::Transport { .. }) => true,
                Ok(r) => r.status >= 500,
                Err(_) => false,
            };
            if !retryable || attempt >= self.retries {
                return result;
            }
            attempt += 1;
            thread::sleep(Duration::from_millis(100 * attempt as u64));
        }
    }
}

/// Serves responses from fixture files only; never opens a socket.
#[derive(Debug)]
pub struct ReplayTransport {
    fixtures: FixtureStore,
}

impl ReplayTransport {
    pub fn new(fixtures: FixtureStore) -> Self {
        Self { fixtures }
    }
}

impl Transport for ReplayTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        let key = request_key(body);
        self.fixtures
            .read(endpoint, &key)?
            .ok_or_else(|| AdapterError::MissingFixture {
                endpoint,
                path: self.fixtures.path_for(endpoint, &key),
                key,
            })
    }
}

/// Forwards to an inner transport and stores every response as a fixture.
#[derive(Debug)]
pub struct RecordingTransport<T> {
    inner: T,
    fixtures: FixtureStore,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, fixtures: FixtureStore) -> Self {
        Self { inner, fixtures }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        let resp = self.inner.post(endpoint, body)?;
        self.fixtures.write(endpoint, &request_key(body), &resp)?;
        Ok(resp)
    }
}

/// In-process transport backed by a closure, for synthetic backends.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(Endpoint, &Value) -> RawResponse + Send + Sync,
{
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        Ok((self.0)(endpoint, body))
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        (**self).post(endpoint, body)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, AdapterError> {
        (**self).post(endpoint, body)
    }
}
