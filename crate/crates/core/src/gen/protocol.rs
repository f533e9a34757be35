//! The `/v1` generator wire format: JSON bodies carrying base64 PNG images.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::GenError;

pub const GENERATE_PATH: &str = "/v1/generate";
pub const HEALTH_PATH: &str = "/v1/health";
pub const PROMPT_TEMPLATE: &str = "Turn the hand into a gripper. The gripper is holding a {obj_name}.";

/// Fills the prompt template. The object name must be non-empty and free of
/// control characters.
pub fn build_prompt(obj_name: &str) -> Result<String, GenError> {
    if obj_name.is_empty() {
        return Err(GenError::InvalidObjectName("object name is empty".into()));
    }
    if obj_name.chars().any(char::is_control) {
        return Err(GenError::InvalidObjectName(format!(
            "object name {obj_name:?} contains control characters"
        )));
    }
    Ok(PROMPT_TEMPLATE.replace("{obj_name}", obj_name))
}

/// Request id for frame `idx` of an episode: `"{episode_id}:{idx}"`.
pub fn request_id(episode_id: &str, idx: usize) -> String {
    format!("{episode_id}:{idx}")
}

/// Frame index encoded in a request id's suffix.
pub fn frame_index(request_id: &str) -> Option<usize> {
    request_id.rsplit_once(':')?.1.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub request_id: String,
    pub prompt: String,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResponse {
    pub request_id: String,
    pub image: RgbImage,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub request_id: String,
    pub prompt: String,
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireResponse {
    pub request_id: String,
    pub image_png_b64: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

/// Body of a non-200 reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

pub fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

pub fn encode_png_b64(image: &RgbImage) -> String {
    B64.encode(encode_png(image))
}

pub fn decode_png_b64(data: &str) -> Result<RgbImage, GenError> {
    let bytes = B64
        .decode(data)
        .map_err(|e| GenError::ProtocolError(format!("image is not valid base64: {e}")))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| GenError::ProtocolError(format!("image is not a valid PNG: {e}")))?;
    Ok(img.to_rgb8())
}

impl GenRequest {
    pub fn to_wire(&self) -> WireRequest {
        WireRequest {
            request_id: self.request_id.clone(),
            prompt: self.prompt.clone(),
            image_png_b64: encode_png_b64(&self.image),
        }
    }
}

/// Parses and checks a response body against the request it answers.
pub fn decode_response(request: &GenRequest, body: &str) -> Result<GenResponse, GenError> {
    let wire: WireResponse = serde_json::from_str(body)
        .map_err(|e| GenError::ProtocolError(format!("malformed response body: {e}")))?;
    if wire.request_id != request.request_id {
        return Err(GenError::ProtocolError(format!(
            "response id {:?} does not match request id {:?}",
            wire.request_id, request.request_id
        )));
    }
    if !wire.latency_ms.is_finite() || wire.latency_ms < 0.0 {
        return Err(GenError::ProtocolError(format!("invalid latency_ms {}", wire.latency_ms)));
    }
    let image = decode_png_b64(&wire.image_png_b64)?;
    if image.dimensions() != request.image.dimensions() {
        return Err(GenError::BadGeneration {
            expected: request.image.dimensions(),
            got: image.dimensions(),
        });
    }
    Ok(GenResponse {
        request_id: wire.request_id,
        image,
        latency_ms: wire.latency_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn prompt_template() {
        assert_eq!(
            build_prompt("cup").unwrap(),
            "Turn the hand into a gripper. The gripper is holding a cup."
        );
        assert_eq!(
            build_prompt("red block").unwrap(),
            "Turn the hand into a gripper. The gripper is holding a red block."
        );
        assert!(matches!(build_prompt(""), Err(GenError::InvalidObjectName(_))));
        assert!(matches!(build_prompt("cup\n"), Err(GenError::InvalidObjectName(_))));
    }

    #[test]
    fn request_ids() {
        assert_eq!(request_id("ep-1", 12), "ep-1:12");
        assert_eq!(frame_index("ep:with:colons:7"), Some(7));
        assert_eq!(frame_index("nocolon"), None);
        assert_eq!(frame_index("ep:x"), None);
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = RgbImage::from_fn(7, 5, |x, y| Rgb([(x * 31) as u8, (y * 47) as u8, (x ^ y) as u8]));
        assert_eq!(decode_png_b64(&encode_png_b64(&img)).unwrap(), img);
        assert!(matches!(decode_png_b64("!!"), Err(GenError::ProtocolError(_))));
        assert!(matches!(decode_png_b64("aGVsbG8="), Err(GenError::ProtocolError(_))));
    }

    #[test]
    fn response_checks() {
        let img = RgbImage::new(4, 4);
        let req = GenRequest {
            request_id: "e:0".into(),
            prompt: "p".into(),
            image: img.clone(),
        };
        let body = |id: &str, im: &RgbImage| {
            serde_json::to_string(&WireResponse {
                request_id: id.into(),
                image_png_b64: encode_png_b64(im),
                latency_ms: 1.5,
            })
            .unwrap()
        };
        assert_eq!(decode_response(&req, &body("e:0", &img)).unwrap().latency_ms, 1.5);
        assert!(matches!(
            decode_response(&req, &body("e:1", &img)),
            Err(GenError::ProtocolError(_))
        ));
        assert!(matches!(
            decode_response(&req, &body("e:0", &RgbImage::new(4, 3))),
            Err(GenError::BadGeneration { expected: (4, 4), got: (4, 3) })
        ));
        assert!(matches!(decode_response(&req, "{}"), Err(GenError::ProtocolError(_))));
        assert!(matches!(decode_response(&req, "not json"), Err(GenError::ProtocolError(_))));
    }
}
