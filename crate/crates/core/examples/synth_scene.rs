//! Render a scripted scene into a paired hand/gripper recording with ground
//! truth and write it to disk.

use std::error::Error;

use demoforge::layout::read_episode;
use demoforge::synth::{read_truth, render_pair, write_synth, SceneScript};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let script = SceneScript::random(3, 60)?;
    println!(
        "script '{}': {} scene frames, warp of {} gripper frames, contacts {:?}",
        script.task,
        script.duration_frames,
        script.warp.len(),
        script.contact_windows
    );
    let pair = render_pair(&script)?;

    let dir = tempfile::tempdir()?;
    write_synth(dir.path(), &pair, &script)?;
    let hand = read_episode(&dir.path().join("hand"))?;
    let truth = read_truth(&dir.path().join("truth"))?;
    assert_eq!(hand.frames(), pair.hand.frames());
    assert_eq!(truth, pair.truth);
    println!(
        "wrote {} hand frames, {} gripper frames and {} ideal composites",
        hand.len(),
        pair.gripper.len(),
        truth.composites.len()
    );

    // rendering is a pure function of the script
    assert_eq!(render_pair(&script)?.truth, pair.truth);

    // a script whose warp runs backwards is rejected
    let mut bad = script.clone();
    bad.warp.swap(0, 1);
    assert!(render_pair(&bad).is_err());
    Ok(())
}
