//! Image quality measures: PSNR, Gaussian-windowed SSIM and absolute error maps.

use crate::image::{Image, ImageError};
use rayon::prelude::*;
use thiserror::Error;

/// PSNR reported for identical (or nearly identical) images.
pub const PSNR_CLAMP_DB: f64 = 60.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("mask has {got} entries for {expected} pixels")]
    MaskSize { expected: usize, got: usize },
    #[error("mask selects no pixels")]
    EmptyMask,
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CLAMP_DB;
    }
    (-10.0 * mse.log10()).min(PSNR_CLAMP_DB)
}

/// `-10·log10(MSE)` over all pixels and channels, clamped to 60 dB.
pub fn psnr(render: &Image, reference: &Image) -> Result<f64, MetricsError> {
    render.check_same_size(reference)?;
    let sum: f64 = render
        .pixels
        .iter()
        .zip(&reference.pixels)
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]) * (a[c] - b[c])))
        .sum();
    Ok(psnr_from_mse(sum / (3 * render.pixels.len()).max(1) as f64))
}

/// PSNR restricted to pixels where `mask` is set.
pub fn psnr_masked(render: &Image, reference: &Image, mask: &[bool]) -> Result<f64, MetricsError> {
    render.check_same_size(reference)?;
    if mask.len() != render.pixels.len() {
        return Err(MetricsError::MaskSize {
            expected: render.pixels.len(),
            got: mask.len(),
        });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((a, b), _) in render
        .pixels
        .iter()
        .zip(&reference.pixels)
        .zip(mask)
        .filter(|(_, &m)| m)
    {
        sum += (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum::<f64>();
        n += 3;
    }
    if n == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(psnr_from_mse(sum / n as f64))
}

/// Rec. 709 luma.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, w) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *w = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|w| w / s)
}

/// Separable Gaussian blur; the window is cut at the border and renormalized.
fn blur(src: &[f64], w: usize, h: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = SSIM_WINDOW as isize / 2;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                let (mut acc, mut norm) = (0.0, 0.0);
                for (j, kw) in kernel.iter().enumerate() {
                    let o = j as isize - half;
                    let (xx, yy) = if along_x { (x + o, y) } else { (x, y + o) };
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        acc += kw * src[yy as usize * w + xx as usize];
                        norm += kw;
                    }
                }
                acc / norm
            })
            .collect()
    };
    pass(&pass(src, true), false)
}

/// Mean SSIM on luminance and the per-pixel SSIM map.
pub fn ssim(render: &Image, reference: &Image) -> Result<(f64, Vec<f64>), MetricsError> {
    render.check_same_size(reference)?;
    let (w, h) = (render.width, render.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(w, h));
    }
    let k = gaussian_kernel();
    let a: Vec<f64> = render.pixels.iter().map(|&p| luminance(p)).collect();
    let b: Vec<f64> = reference.pixels.iter().map(|&p| luminance(p)).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = blur(&a, w, h, &k);
    let mu_b = blur(&b, w, h, &k);
    let aa = blur(&prod(&a, &a), w, h, &k);
    let bb = blur(&prod(&b, &b), w, h, &k);
    let ab = blur(&prod(&a, &b), w, h, &k);
    let map: Vec<f64> = (0..w * h)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .collect();
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    Ok((mean, map))
}

/// Mean absolute channel difference per pixel, inverted so white means equal and black
/// marks the largest error in the image.
pub fn abs_error_image(render: &Image, reference: &Image) -> Result<Image, MetricsError> {
    render.check_same_size(reference)?;
    let err: Vec<f64> = render
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>() / 3.0)
        .collect();
    let max = err.iter().copied().fold(0.0, f64::max);
    let pixels = err
        .iter()
        .map(|&e| {
            let g = if max > 0.0 { 1.0 - e / max } else { 1.0 };
            [g; 3]
        })
        .collect();
    Ok(Image::new(render.width, render.height, pixels)?)
}
