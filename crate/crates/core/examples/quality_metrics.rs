//! PSNR and SSIM between images, and an episode-level report.

use std::error::Error;

use demoforge::metrics::{evaluate_frames, psnr, ssim};
use image::{Rgb, RgbImage};

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let a = RgbImage::from_fn(64, 64, |x, y| Rgb([(x * 3) as u8, (y * 3) as u8, 90]));
    let shifted = RgbImage::from_fn(64, 64, |x, y| {
        let p = a.get_pixel(x, y).0;
        Rgb(p.map(|v| v + 16))
    });
    println!("uniform +16: PSNR {:?}", psnr(&a, &shifted)?);
    println!("identical:   PSNR {:?}, SSIM {}", psnr(&a, &a)?, ssim(&a, &a)?);

    let black = RgbImage::from_pixel(16, 16, Rgb([0, 0, 0]));
    let white = RgbImage::from_pixel(16, 16, Rgb([255, 255, 255]));
    println!("black vs white SSIM {:.3e}", ssim(&black, &white)?);

    let report = evaluate_frames(&[&a, &shifted], &[&a, &a])?;
    println!(
        "report: mean PSNR over finite frames {:?}, {} exact frame(s), mean SSIM {:.4}",
        report.mean_psnr_db, report.infinite_psnr_frames, report.mean_ssim
    );
    Ok(())
}
