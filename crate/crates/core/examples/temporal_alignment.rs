//! Recover the time warp between a hand and a gripper recording of the same
//! scene, with nearest-neighbor retrieval and with DTW.

use std::error::Error;

use demoforge::align::{dtw_align, embed_builtin, nn_align, DEFAULT_CYCLE_TOLERANCE};
use demoforge::synth::{render_pair, SceneScript};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let script = SceneScript::random(11, 100)?;
    let pair = render_pair(&script)?;
    let hand = embed_builtin(&pair.hand)?;
    let gripper = embed_builtin(&pair.gripper)?;

    // warp[j] is the hand frame that gripper frame j shows
    let warp = &pair.truth.warp;
    let within_one = |pairs: &[(usize, usize)]| {
        pairs.iter().filter(|&&(i, j)| warp[j].abs_diff(i) <= 1).count()
    };

    let nn = nn_align(&hand, &gripper, DEFAULT_CYCLE_TOLERANCE)?;
    assert!(nn.is_strictly_monotone());
    println!(
        "nn:  kept {} of {} hand frames, {} within one frame of truth",
        nn.len(),
        hand.len(),
        within_one(nn.pairs())
    );

    let dtw = dtw_align(&hand, &gripper)?;
    println!(
        "dtw: {} pairs, cost {:.1}, {} within one frame of truth",
        dtw.map.len(),
        dtw.cost,
        within_one(dtw.map.pairs())
    );
    assert!(within_one(dtw.map.pairs()) * 100 >= 99 * dtw.map.len());
    Ok(())
}
