//! Label frames as interactive or not from effector and object masks, and
//! derive the gripper open/closed signal.

use std::error::Error;

use demoforge::stage::{classify_track, gripper_status, smooth_labels, StageLabel, StageParams};
use demoforge::synth::{render_pair, SceneScript};
use demoforge::Mask;

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = render_pair(&SceneScript::bundled_default())?;
    let masks: Vec<(&Mask, &Mask)> = pair
        .hand
        .frames()
        .iter()
        .map(|f| (f.mask("hand").unwrap(), f.mask("object").unwrap()))
        .collect();
    let track = classify_track(&masks, &StageParams::default())?;
    let correct = track.labels().iter().zip(&pair.truth.stages).filter(|(a, b)| a == b).count();
    println!("contact events {:?}, truth {:?}", track.contact_events(), pair.truth.contact_windows);
    println!("{correct}/{} labels match the script", track.len());

    let closed = gripper_status(&track).iter().filter(|s| **s == demoforge::stage::GripperState::Closed).count();
    println!("gripper closed for {closed} frames");

    // a one-frame blip inside a non-interactive stretch is removed
    use StageLabel::{Interactive as I, NonInteractive as N};
    let noisy = [N, N, N, I, N, N, I, I, I, I, N, N];
    let smooth = smooth_labels(&noisy, 3);
    assert_eq!(smooth, [N, N, N, N, N, N, I, I, I, I, N, N]);
    Ok(())
}
