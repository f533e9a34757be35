use std::time::Duration;

use ureq::Agent;

use super::protocol::{decode_response, HealthResponse, GENERATE_PATH, HEALTH_PATH};
use super::{GenError, GenRequest, GenResponse, Generator};

/// Transport retries after the first attempt.
pub const MAX_RETRIES: u32 = 2;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

/// Blocking client for a `/v1` generator service.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    base: String,
    agent: Agent,
}

enum Failure {
    // worth retrying: connection problems, timeouts, 5xx
    Transport(String),
    Fatal(GenError),
}

impl HttpGenerator {
    /// `endpoint` is the service root, e.g. `http://127.0.0.1:8000`. Each
    /// attempt is bounded by `timeout_ms` end to end.
    pub fn new(endpoint: &str, timeout_ms: u64) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn read(resp: ureq::http::Response<ureq::Body>) -> Result<(u16, String), Failure> {
        let status = resp.status().as_u16();
        let body = resp
            .into_body()
            .into_with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| Failure::Transport(format!("reading response body: {e}")))?;
        if status >= 500 {
            return Err(Failure::Transport(format!("HTTP {status}: {body}")));
        }
        Ok((status, body))
    }

    fn classify(e: ureq::Error) -> Failure {
        match e {
            ureq::Error::BadUri(u) => Failure::Fatal(GenError::ProtocolError(format!("bad endpoint URI {u}"))),
            other => Failure::Transport(other.to_string()),
        }
    }

    fn post_once(&self, body: &str) -> Result<(u16, String), Failure> {
        let resp = self
            .agent
            .post(format!("{}{GENERATE_PATH}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .map_err(Self::classify)?;
        Self::read(resp)
    }

    /// `GET /v1/health`; succeeds when the service answers `{"status":"ok"}`.
    pub fn health(&self) -> Result<(), GenError> {
        let resp = self
            .agent
            .get(format!("{}{HEALTH_PATH}", self.base))
            .call()
            .map_err(|e| GenError::GenTimeout {
                attempts: 1,
                last: e.to_string(),
            })?;
        let (status, body) = Self::read(resp).map_err(|f| match f {
            Failure::Transport(last) => GenError::GenTimeout { attempts: 1, last },
            Failure::Fatal(e) => e,
        })?;
        let health: HealthResponse = serde_json::from_str(&body)
            .map_err(|e| GenError::ProtocolError(format!("malformed health body: {e}")))?;
        if status != 200 || health.status != "ok" {
            return Err(GenError::ProtocolError(format!(
                "health check returned HTTP {status} status {:?}",
                health.status
            )));
        }
        Ok(())
    }
}

impl Generator for HttpGenerator {
    /// Posts the request, retrying up to [`MAX_RETRIES`] times on transport
    /// failures. The request is idempotent, so retries resend the same body.
    fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError> {
        let body = serde_json::to_string(&request.to_wire()).expect("request serializes");
        let mut last = String::new();
        for _ in 0..=MAX_RETRIES {
            match self.post_once(&body) {
                Ok((200, text)) => return decode_response(request, &text),
                Ok((status, text)) => {
                    return Err(GenError::ProtocolError(format!("HTTP {status}: {text}")));
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transport(msg)) => last = msg,
            }
        }
        Err(GenError::GenTimeout {
            attempts: MAX_RETRIES + 1,
            last,
        })
    }
}
