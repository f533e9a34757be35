//! Replace the hand with the gripper: cut out the hand, inpaint what the
//! gripper does not cover, paste the gripper (and the held object) on top.

use std::error::Error;

use demoforge::align::{apply_alignment, AlignmentMap};
use demoforge::compose::composite_episode;
use demoforge::metrics::ssim;
use demoforge::synth::{render_pair, SceneScript};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let script = SceneScript::random(5, 60)?;
    let pair = render_pair(&script)?;
    // use the true warp so every pair shows the same scene frame
    let map = AlignmentMap::new(pair.truth.alignment_pairs(), pair.hand.len(), pair.gripper.len())?;
    let (hand, gripper) = apply_alignment(&pair.hand, &pair.gripper, &map)?;
    let stages: Vec<_> = map.pairs().iter().map(|&(i, _)| pair.truth.stages[i]).collect();
    let track = demoforge::stage::StageTrack::from_labels(stages);
    let (_, frames) = composite_episode(&hand, &gripper, &track, map.pairs(), 10_000)?;

    let mut worst = 1.0f64;
    for (c, &(i, _)) in frames.iter().zip(map.pairs()) {
        let ideal = &pair.truth.composites[i];
        let mut outside_differs = 0;
        for (x, y, p) in c.image.enumerate_pixels() {
            if !c.inpaint_mask.get(x, y) && p != ideal.get_pixel(x, y) {
                outside_differs += 1;
            }
        }
        assert_eq!(outside_differs, 0);
        worst = worst.min(ssim(&c.image, ideal)?);
    }
    println!(
        "{} composites, bit-exact outside the inpainted region, worst SSIM to ideal {worst:.4}",
        frames.len()
    );
    Ok(())
}
