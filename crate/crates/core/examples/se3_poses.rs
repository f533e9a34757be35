//! Rigid transforms: composition, inversion, interpolation and resampling a
//! timed pose stream.

use std::error::Error;

use demoforge::pose::{resample_poses, Pose};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let world_cam = Pose::from_axis_angle([0.4, 0.0, 0.9], [0.0, 0.0, 1.0], 0.5)?;
    let cam_tcp = Pose::from_axis_angle([0.0, 0.04, 0.18], [1.0, 0.0, 0.0], 0.1)?;
    let world_tcp = world_cam.compose(&cam_tcp)?;
    println!("tcp in world: t = {:?}, q = {:?}", world_tcp.translation(), world_tcp.quat_wxyz());

    // a point known in the tcp frame, seen from the world two ways
    let p = [0.01, 0.0, 0.02];
    let direct = world_tcp.transform_point(p);
    let chained = world_cam.transform_point(cam_tcp.transform_point(p));
    assert!(direct.iter().zip(&chained).all(|(a, b)| (a - b).abs() < 1e-12));

    let back = world_tcp.compose(&world_tcp.inverse()?)?;
    println!("pose * inverse: angle {:.2e} rad", back.angle());

    // camera poses at 10 ms, frames at 33 ms
    let stream: Vec<(i64, Pose)> = (0..10)
        .map(|k| {
            let a = 0.05 * k as f64;
            Ok((k * 10_000_000, Pose::from_axis_angle([a, 0.0, 1.0], [0.0, 1.0, 0.0], a)?))
        })
        .collect::<Result<_, Box<dyn Error>>>()?;
    let frames = [0, 33_333_333, 66_666_666];
    for (t, pose) in frames.iter().zip(resample_poses(&stream, &frames)?) {
        println!("t = {t:>9} ns  x = {:.5}  angle = {:.5}", pose.translation()[0], pose.angle());
    }
    // resampling never extrapolates past the stream
    assert!(resample_poses(&stream, &[100_000_000]).is_err());
    Ok(())
}
