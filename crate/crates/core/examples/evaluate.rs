//! Static-region metrics: dynamic mask, masked PSNR/SSIM and EPE.

use flowanim::eval::{dynamic_region_mask, endpoint_error, masked_psnr, masked_ssim, DEFAULT_THRESHOLD};
use flowanim::flow::FlowField;
use flowanim::image::{Image, ValueRange};

fn main() -> flowanim::Result<()> {
    let (h, w) = (32, 32);
    // Left half static, right half brightening by 10 per frame.
    let video: Vec<Image> = (0..5)
        .map(|t| {
            Image::from_fn(3, h, w, ValueRange::Raw8, |c, y, x| {
                let base = 60.0 + ((x * 7 + y * 3 + c * 11) % 50) as f64;
                if x >= w / 2 { base + 10.0 * t as f64 } else { base }
            })
        })
        .collect::<flowanim::Result<_>>()?;
    let mask = dynamic_region_mask(&video, DEFAULT_THRESHOLD)?;
    println!("dynamic pixels: {} of {}", mask.mask.iter().filter(|&&m| m == 1).count(), h * w);

    let noisy = Image::from_fn(3, h, w, ValueRange::Raw8, |c, y, x| (video[4].get(c, y, x) + if (x + y) % 2 == 0 { 4.0 } else { -4.0 }).clamp(0.0, 255.0))?;
    println!("masked PSNR identical: {:.1}", masked_psnr(&video[4], &video[4], &mask)?);
    println!("masked PSNR noisy:     {:.2}", masked_psnr(&video[4], &noisy, &mask)?);
    println!("masked SSIM noisy:     {:.4}", masked_ssim(&video[4], &noisy, &mask)?);

    let a = FlowField::constant(h, w, 3.0, 4.0);
    println!("EPE vs zero flow: {}", endpoint_error(&a, &FlowField::zeros(h, w), None)?);
    Ok(())
}
