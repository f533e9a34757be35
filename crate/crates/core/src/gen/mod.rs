//! Client side of the hand-to-gripper image generator: prompt construction,
//! the `/v1` wire protocol, an HTTP client with retries, an in-process mock,
//! and bounded-concurrency generation of whole episodes.

mod http;
mod mock;
mod protocol;

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::episode::{Episode, EpisodeError, Frame, Role};

pub use http::{HttpGenerator, DEFAULT_TIMEOUT_MS, MAX_RETRIES};
pub use mock::{MockGenerator, MockMode, MockService};
pub use protocol::{
    build_prompt, decode_png_b64, decode_response, encode_png, encode_png_b64, frame_index, request_id,
    GenRequest, GenResponse, HealthResponse, WireError, WireRequest, WireResponse, GENERATE_PATH, HEALTH_PATH,
    PROMPT_TEMPLATE,
};

pub const ENDPOINT_ENV: &str = "DEMOFORGE_GEN_ENDPOINT";
pub const TIMEOUT_ENV: &str = "DEMOFORGE_GEN_TIMEOUT_MS";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid object name: {0}")]
    InvalidObjectName(String),
    #[error("generator unreachable after {attempts} attempts: {last}")]
    GenTimeout { attempts: u32, last: String },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("generated image is {got:?}, expected {expected:?}")]
    BadGeneration { expected: (u32, u32), got: (u32, u32) },
    #[error("episode has no frames")]
    EmptyInput,
    #[error("expected a hand episode, got role {0:?}")]
    WrongRole(Role),
    #[error("generation failed for frames {failed:?}; first error: {first}")]
    EpisodeGenerationFailed { failed: Vec<usize>, first: String },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

/// Anything that turns a hand frame into a gripper frame. Implementations
/// must be safe to call from several threads at once.
pub trait Generator: Sync {
    fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError> {
        (**self).generate(request)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, request: &GenRequest) -> Result<GenResponse, GenError> {
        (**self).generate(request)
    }
}

/// Generates a gripper frame for every frame of a hand episode, with at most
/// `concurrency` requests in flight. The result has role `Generated`, the
/// input's timestamps and pose stream, and frames in input order no matter
/// in which order the requests complete.
pub fn generate_episode(
    episode: &Episode,
    obj_name: &str,
    generator: &dyn Generator,
    concurrency: usize,
) -> Result<Episode, GenError> {
    if episode.role() != Role::Hand {
        return Err(GenError::WrongRole(episode.role()));
    }
    if episode.is_empty() {
        return Err(GenError::EmptyInput);
    }
    let prompt = build_prompt(obj_name)?;
    let frames = episode.frames();
    let workers = concurrency.clamp(1, frames.len());
    let next = AtomicUsize::new(0);

    let mut results: Vec<Option<Result<GenResponse, GenError>>> = (0..frames.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, Result<GenResponse, GenError>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let idx = next.fetch_add(1, Ordering::Relaxed);
                        let Some(frame) = frames.get(idx) else { break };
                        let req = GenRequest {
                            request_id: request_id(episode.episode_id(), idx),
                            prompt: prompt.clone(),
                            image: frame.image().clone(),
                        };
                        out.push((idx, generator.generate(&req)));
                    }
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generator worker panicked"))
            .collect()
    });
    for (idx, r) in done.into_iter().flatten() {
        results[idx] = Some(r);
    }

    let mut out_frames = Vec::with_capacity(frames.len());
    let mut failed = Vec::new();
    let mut first = None;
    for (idx, (r, frame)) in results.into_iter().zip(frames).enumerate() {
        match r.expect("every index is claimed by a worker") {
            Ok(resp) => out_frames.push(Frame::new(frame.timestamp_ns, resp.image)),
            Err(e) => {
                failed.push(idx);
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if let Some(first) = first {
        return Err(GenError::EpisodeGenerationFailed { failed, first });
    }
    Ok(Episode::new(
        episode.meta().clone(),
        Role::Generated,
        out_frames,
        episode.camera_poses().to_vec(),
    )?)
}
