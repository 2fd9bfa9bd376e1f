//! Static-consistency metrics over the non-moving part of a video, and
//! endpoint error against reference flows.
//!
//! All image metrics run on the raw 0..255 scale; normalized inputs are
//! converted first.

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

/// Default threshold of the dynamic-region test, in raw 8-bit units.
pub const DEFAULT_THRESHOLD: f64 = 2.5;
/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 255.0;

/// Pixels whose mean temporal change exceeds a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicMask {
    pub height: usize,
    pub width: usize,
    /// 1 = dynamic (excluded from metrics), 0 = static.
    pub mask: Vec<u8>,
    pub threshold: f64,
    /// Number of frame differences averaged.
    pub frame_count: usize,
}

impl DynamicMask {
    /// Mask that keeps every pixel.
    pub fn all_static(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            mask: vec![0; height * width],
            threshold: f64::INFINITY,
            frame_count: 0,
        }
    }

    pub fn static_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 0).count()
    }
}

/// `mask(p) = 1` iff `(1/L) sum_t mean_c |I_{t+1}(p) - I_t(p)| > threshold`.
pub fn dynamic_region_mask(frames: &[Image], threshold: f64) -> Result<DynamicMask> {
    ensure!(frames.len() >= 2, Contract, "dynamic mask needs at least 2 frames, got {}", frames.len());
    let first = &frames[0];
    for (t, f) in frames.iter().enumerate() {
        ensure!(f.same_shape(first), Contract, "frame {t} differs in shape from frame 0");
    }
    let raw: Vec<Image> = frames.iter().map(|f| f.to_raw8()).collect();
    let (c, h, w) = (first.channels(), first.height(), first.width());
    let n = h * w;
    // Compare the total absolute change with threshold * C * L rather than
    // dividing first: integer-valued frames then hit the boundary exactly.
    let bound = threshold * (c * (frames.len() - 1)) as f64;
    let mut mask = vec![0u8; n];
    for (p, m) in mask.iter_mut().enumerate() {
        let mut sum = 0.0;
        for pair in raw.windows(2) {
            for ch in 0..c {
                sum += (pair[1].plane(ch)[p] - pair[0].plane(ch)[p]).abs();
            }
        }
        if sum > bound {
            *m = 1;
        }
    }
    Ok(DynamicMask {
        height: h,
        width: w,
        mask,
        threshold,
        frame_count: frames.len() - 1,
    })
}

fn check_pair(reference: &Image, candidate: &Image, mask: &DynamicMask) -> Result<(Image, Image)> {
    ensure!(reference.same_shape(candidate), Contract, "metric inputs differ in shape");
    ensure!(
        mask.height == reference.height() && mask.width == reference.width(),
        Contract,
        "mask is {}x{} but images are {}x{}",
        mask.height,
        mask.width,
        reference.height(),
        reference.width()
    );
    Ok((reference.to_raw8(), candidate.to_raw8()))
}

/// PSNR over static pixels; [`PSNR_CAP`] when they agree exactly.
pub fn masked_psnr(reference: &Image, candidate: &Image, mask: &DynamicMask) -> Result<f64> {
    let (a, b) = check_pair(reference, candidate, mask)?;
    let n = a.height() * a.width();
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        for p in 0..n {
            if mask.mask[p] == 0 {
                let d = a.plane(c)[p] - b.plane(c)[p];
                sum += d * d;
                count += 1;
            }
        }
    }
    ensure!(count > 0, Eval, "no static pixels to evaluate");
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10()).min(PSNR_CAP))
}

pub fn psnr(reference: &Image, candidate: &Image) -> Result<f64> {
    masked_psnr(reference, candidate, &DynamicMask::all_static(reference.height(), reference.width()))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut out = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in &g {
        for b in &g {
            out.push(a * b);
        }
    }
    out
}

/// Mean local SSIM over 11x11 Gaussian windows that lie inside the image
/// and contain only static pixels, averaged over channels.
pub fn masked_ssim(reference: &Image, candidate: &Image, mask: &DynamicMask) -> Result<f64> {
    let (a, b) = check_pair(reference, candidate, mask)?;
    let (h, w) = (a.height(), a.width());
    ensure!(
        h >= SSIM_WINDOW && w >= SSIM_WINDOW,
        Eval,
        "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
    );
    // Windows are valid when they contain no dynamic pixel: 2D prefix sums.
    let mut pre = vec![0usize; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            pre[(y + 1) * (w + 1) + x + 1] =
                mask.mask[y * w + x] as usize + pre[y * (w + 1) + x + 1] + pre[(y + 1) * (w + 1) + x] - pre[y * (w + 1) + x];
        }
    }
    let dynamic_in = |y: usize, x: usize| {
        let (y1, x1) = (y + SSIM_WINDOW, x + SSIM_WINDOW);
        pre[y1 * (w + 1) + x1] + pre[y * (w + 1) + x] - pre[y * (w + 1) + x1] - pre[y1 * (w + 1) + x]
    };
    let kernel = gaussian_window();
    let c1 = (SSIM_K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE).powi(2);
    let mut total = 0.0;
    let mut windows = 0usize;
    for c in 0..a.channels() {
        let (pa, pb) = (a.plane(c), b.plane(c));
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                if dynamic_in(y, x) != 0 {
                    continue;
                }
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let k = kernel[dy * SSIM_WINDOW + dx];
                        let i = (y + dy) * w + x + dx;
                        let (va, vb) = (pa[i], pb[i]);
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                windows += 1;
            }
        }
    }
    ensure!(windows > 0, Eval, "no SSIM window lies entirely in the static region");
    Ok(total / windows as f64)
}

pub fn ssim(reference: &Image, candidate: &Image) -> Result<f64> {
    masked_ssim(reference, candidate, &DynamicMask::all_static(reference.height(), reference.width()))
}

/// Mean Euclidean distance between two flows, optionally restricted to
/// pixels where `mask` is non-zero.
pub fn endpoint_error(a: &FlowField, b: &FlowField, mask: Option<&[u8]>) -> Result<f64> {
    ensure!(
        a.same_size(b),
        Contract,
        "endpoint error: flows are {}x{} and {}x{}",
        a.height(),
        a.width(),
        b.height(),
        b.width()
    );
    if let Some(m) = mask {
        ensure!(m.len() == a.u().len(), Contract, "endpoint error: mask has the wrong size");
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..a.u().len() {
        if mask.is_none_or(|m| m[i] != 0) {
            sum += (a.u()[i] - b.u()[i]).hypot(a.v()[i] - b.v()[i]);
            n += 1;
        }
    }
    ensure!(n > 0, Eval, "endpoint error: mask selects no pixels");
    Ok(sum / n as f64)
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub clip: String,
    pub method: String,
    pub masked_psnr: f64,
    pub masked_ssim: f64,
    /// Mean EPE over steps, when reference flows were supplied.
    pub epe: Option<f64>,
    pub frames: usize,
    pub threshold: f64,
}

/// Compares a generated video with its ground truth.
///
/// The dynamic mask comes from the ground-truth frames. PSNR and SSIM are
/// computed per frame pair `(generated_t, truth_t)` for `t >= 1` and then
/// averaged. EPE is averaged over the supplied flow pairs.
pub fn evaluate_video(
    clip: &str,
    method: &str,
    truth: &[Image],
    generated: &[Image],
    flows: Option<(&[FlowField], &[FlowField])>,
    threshold: f64,
) -> Result<MetricsRow> {
    ensure!(truth.len() >= 2, Eval, "ground truth needs at least 2 frames");
    let frames = truth.len().min(generated.len());
    ensure!(frames >= 2, Eval, "generated video needs at least 2 frames");
    let mask = dynamic_region_mask(&truth[..frames], threshold)?;
    let mut p = 0.0;
    let mut s = 0.0;
    for t in 1..frames {
        p += masked_psnr(&truth[t], &generated[t], &mask)?;
        s += masked_ssim(&truth[t], &generated[t], &mask)?;
    }
    let epe = match flows {
        Some((gt, gen)) => {
            let n = gt.len().min(gen.len());
            ensure!(n > 0, Eval, "no flow pairs to compare");
            let mut e = 0.0;
            for t in 0..n {
                e += endpoint_error(&gen[t], &gt[t], None)?;
            }
            Some(e / n as f64)
        }
        None => None,
    };
    let k = (frames - 1) as f64;
    Ok(MetricsRow {
        clip: clip.to_string(),
        method: method.to_string(),
        masked_psnr: p / k,
        masked_ssim: s / k,
        epe,
        frames,
        threshold,
    })
}

/// Writes the CSV report with a header comment describing the protocol.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("# masked metrics: per-frame (generated_t vs truth_t, t >= 1) then mean; raw 0..255 scale\n");
    out.push_str("# skipped metrics: fid, lpips, fvd (need pretrained networks)\n");
    out.push_str("clip,method,masked_psnr,masked_ssim,epe,frames,threshold\n");
    for r in rows {
        let epe = r.epe.map_or(String::new(), |e| format!("{e:.6}"));
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{}\n",
            r.clip, r.method, r.masked_psnr, r.masked_ssim, epe, r.frames, r.threshold
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    fn raw(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> Image {
        Image::from_fn(3, h, w, ValueRange::Raw8, f).unwrap()
    }

    #[test]
    fn static_video_has_empty_mask() {
        let f = raw(4, 4, |c, y, x| (c * 10 + y * 3 + x) as f64);
        let m = dynamic_region_mask(&[f.clone(), f.clone(), f], 2.5).unwrap();
        assert!(m.mask.iter().all(|&v| v == 0));
    }

    #[test]
    fn threshold_is_strict() {
        let a = raw(2, 2, |_, _, _| 100.0);
        let b = raw(2, 2, |_, y, _| if y == 0 { 102.5 } else { 110.0 });
        let m = dynamic_region_mask(&[a, b], 2.5).unwrap();
        assert_eq!(m.mask, vec![0, 0, 1, 1]);
    }

    #[test]
    fn psnr_examples() {
        let a = raw(4, 4, |_, _, _| 100.0);
        let b = raw(4, 4, |_, _, _| 116.0);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        let all = DynamicMask {
            mask: vec![1; 16],
            ..DynamicMask::all_static(4, 4)
        };
        assert!(matches!(masked_psnr(&a, &b, &all), Err(Error::Eval(_))));
    }

    #[test]
    fn ssim_examples() {
        let a = raw(16, 16, |c, y, x| ((x * 37 + y * 11 + c * 5) % 200) as f64 + 20.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = raw(16, 16, |c, y, x| 255.0 - a.get(c, y, x));
        let v = ssim(&a, &inv).unwrap();
        assert!((-1.0..0.5).contains(&v), "{v}");
        assert!(ssim(&raw(8, 8, |_, _, _| 0.0), &raw(8, 8, |_, _, _| 0.0)).is_err());
    }

    #[test]
    fn epe_examples() {
        let a = FlowField::constant(3, 3, 3.0, 4.0);
        let b = FlowField::zeros(3, 3);
        assert_eq!(endpoint_error(&a, &b, None).unwrap(), 5.0);
        assert_eq!(endpoint_error(&b, &a, None).unwrap(), 5.0);
        assert_eq!(endpoint_error(&a, &a, None).unwrap(), 0.0);
        assert!(endpoint_error(&a, &b, Some(&[0; 9])).is_err());
    }
}
