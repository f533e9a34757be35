use std::fs;
use std::path::PathBuf;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::protocol::{
    decode_png_b64, decode_response, frame_index, HealthResponse, WireError, WireRequest, WireResponse,
    GENERATE_PATH, HEALTH_PATH,
};
use super::{GenError, GenRequest, GenResponse, Generator};
use crate::layout::frame_file;
use crate::synth::COMPOSITES_DIR;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MockMode {
    /// Returns the request image unchanged.
    Echo,
    /// Returns `truth_dir/composites/<idx>.png`, with `idx` taken from the
    /// request id suffix.
    CompositeTruth { truth_dir: PathBuf },
}

/// The generator service's request handling without a network: routes a
/// method, path and body to a status code and JSON body.
#[derive(Debug, Clone)]
pub struct MockService {
    mode: MockMode,
}

fn error_body(status: u16, msg: impl Into<String>) -> (u16, String) {
    let body = serde_json::to_string(&WireError { error: msg.into() }).expect("error serializes");
    (status, body)
}

impl MockService {
    pub fn new(mode: MockMode) -> Self {
        Self { mode }
    }

    pub fn mode(&self) -> &MockMode {
        &self.mode
    }

    pub fn handle(&self, method: &str, path: &str, body: &str) -> (u16, String) {
        match (method, path) {
            ("GET", HEALTH_PATH) => (
                200,
                serde_json::to_string(&HealthResponse { status: "ok".into() }).expect("serializes"),
            ),
            ("POST", GENERATE_PATH) => self.handle_generate(body),
            (_, HEALTH_PATH) | (_, GENERATE_PATH) => error_body(405, format!("{method} not allowed on {path}")),
            _ => error_body(404, format!("no route for {path}")),
        }
    }

    pub fn handle_generate(&self, body: &str) -> (u16, String) {
        let req: WireRequest = match serde_json::from_str(body) {
            Ok(r) => r,
            Err(e) => return error_body(400, format!("malformed request: {e}")),
        };
        if let Err(e) = decode_png_b64(&req.image_png_b64) {
            return error_body(400, e.to_string());
        }
        let image_png_b64 = match &self.mode {
            MockMode::Echo => req.image_png_b64,
            MockMode::CompositeTruth { truth_dir } => {
                let Some(idx) = frame_index(&req.request_id) else {
                    return error_body(400, format!("request id {:?} has no frame index", req.request_id));
                };
                let path = truth_dir.join(COMPOSITES_DIR).join(frame_file(idx));
                match fs::read(&path) {
                    Ok(bytes) => B64.encode(bytes),
                    Err(_) => return error_body(404, format!("no truth composite for frame {idx}")),
                }
            }
        };
        let resp = WireResponse {
            request_id: req.request_id,
            image_png_b64,
            latency_ms: 0.0,
        };
        (200, serde_json::to_string(&resp).expect("response serializes"))
    }
}

/// In-process generator backed by a [`MockService`]. Requests still go
/// through the wire encoding, so the protocol code is exercised.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    service: MockService,
}

impl MockGenerator {
    pub fn new(mode: MockMode) -> Self {
        Self {
            service: MockService::new(mode),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockMode::Echo)
    }

    pub fn composite_truth(truth_dir: impl Into<PathBuf>) -> Self {
        Self::new(MockMode::CompositeTruth {
            truth_dir: truth_dir.into(),
        })
    }
}

impl Generator for MockGenerator {
    fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError> {
        let body = serde_json::to_string(&request.to_wire()).expect("request serializes");
        match self.service.handle("POST", GENERATE_PATH, &body) {
            (200, text) => decode_response(request, &text),
            (status, text) => Err(GenError::ProtocolError(format!("HTTP {status}: {text}"))),
        }
    }
}
