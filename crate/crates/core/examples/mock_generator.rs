//! The frame-generation protocol against the in-process mock service, both
//! directly and through a batch over an episode.

use std::error::Error;

use demoforge::gen::{build_prompt, generate_episode, request_id, GenRequest, Generator, MockGenerator, MockMode, MockService};
use demoforge::synth::{render_pair, SceneScript};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = render_pair(&SceneScript::random(2, 40)?)?;
    let prompt = build_prompt(pair.hand.obj_name())?;
    println!("prompt: {prompt}");

    let service = MockService::new(MockMode::Echo);
    let (status, body) = service.handle("GET", "/v1/health", "");
    println!("GET /v1/health -> {status} {body}");

    let echo = MockGenerator::echo();
    let req = GenRequest {
        request_id: request_id(pair.hand.episode_id(), 0),
        prompt: prompt.clone(),
        image: pair.hand.frames()[0].image().clone(),
    };
    let resp = echo.generate(&req)?;
    assert_eq!(resp.image, req.image);
    println!("echo returned request {} unchanged", resp.request_id);

    let generated = generate_episode(&pair.hand, pair.hand.obj_name(), &echo, 4)?;
    assert_eq!(generated.timestamps(), pair.hand.timestamps());
    println!("generated {} frames in order with 4 workers", generated.len());
    Ok(())
}
