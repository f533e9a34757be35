//! Turn the head-camera trajectory of a hand recording into fingertip
//! actions with gripper state, and into relative motions.

use std::error::Error;

use demoforge::action::{extract_actions, relative_actions};
use demoforge::synth::{render_pair, SceneScript};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let pair = render_pair(&SceneScript::bundled_default())?;
    let actions = extract_actions(&pair.hand, &pair.truth.stage_track(), &pair.rig)?;

    let mut worst = 0.0f64;
    for (a, (_, truth)) in actions.iter().zip(&pair.truth.tcp) {
        let d = a.tcp_pose.translation().iter().zip(truth.translation()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        worst = worst.max(d.sqrt());
    }
    println!("{} actions, worst fingertip error {worst:.2e} m", actions.len());

    let first = &actions[0];
    println!("first: t = {} ns, {:?}, gripper {:?}", first.timestamp_ns, first.tcp_pose.translation(), first.gripper);

    let rel = relative_actions(&actions, 5)?;
    let step = rel[0].translation();
    println!("motion over 5 frames from frame 0, in the fingertip frame: {step:.4?}");
    Ok(())
}
