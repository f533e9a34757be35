//! The whole pipeline on a synthetic scene: synth, prepare, produce with the
//! compositing mock, evaluate.

use std::error::Error;

use demoforge::pipeline::{cmd_evaluate, cmd_prepare, cmd_produce, cmd_synth, MockKind, PipelineConfig};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let root = tempfile::tempdir()?;
    let scene = root.path().join("scene");
    let synth = cmd_synth(None, &scene, false)?;
    println!("synth: {synth:?}");

    let config = PipelineConfig::default();
    let prepared = cmd_prepare(&scene.join("hand"), &scene.join("gripper"), &root.path().join("prepared"), &config, false)?;
    println!("prepare: {prepared:?}");

    let mut config = PipelineConfig::default();
    config.generator.mock = Some(MockKind::Composite);
    config.generator.truth_dir = Some(scene.join("truth"));
    let dataset = root.path().join("dataset");
    let produced = cmd_produce(&scene.join("hand"), &dataset, &config, false)?;
    println!("produce: {} frames, contact events {:?}", produced.frames, produced.contact_events);

    let report = cmd_evaluate(&dataset, &scene.join("truth"), &root.path().join("report.json"), &config)?;
    println!("evaluate: mean SSIM {:.4}, {} exact frames", report.mean_ssim, report.infinite_psnr_frames);
    assert!(report.mean_ssim >= 0.99);
    Ok(())
}
