use crate::error::{Error, Result};
use crate::geometry::Image;

/// Returned by [`psnr`] for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("metrics need non-empty images"));
    }
    Ok(())
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let sse: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sse as f64 / a.pixels.len() as f64;
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Summed-area table with a zero first row and column.
fn integral(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let stride = w + 1;
    let mut t = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(y * w + x);
            t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
        }
    }
    t
}

/// Mean SSIM of luma over every 8×8 window.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )));
    }
    let (la, lb) = (a.luma(), b.luma());
    let sa = integral(w, h, |i| la[i]);
    let sb = integral(w, h, |i| lb[i]);
    let saa = integral(w, h, |i| la[i] * la[i]);
    let sbb = integral(w, h, |i| lb[i] * lb[i]);
    let sab = integral(w, h, |i| la[i] * lb[i]);
    let stride = w + 1;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let window_sum = |t: &[f64], x: usize, y: usize| {
        let (x1, y1) = (x + SSIM_WINDOW, y + SSIM_WINDOW);
        t[y1 * stride + x1] - t[y * stride + x1] - t[y1 * stride + x] + t[y * stride + x]
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            let mu_a = window_sum(&sa, x, y) / n;
            let mu_b = window_sum(&sb, x, y) / n;
            let var_a = (window_sum(&saa, x, y) / n - mu_a * mu_a).max(0.0);
            let var_b = (window_sum(&sbb, x, y) / n - mu_b * mu_b).max(0.0);
            let cov = window_sum(&sab, x, y) / n - mu_a * mu_b;
            total += ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean of sqrt(d² + ε²) over all channel samples scaled to [0, 1].
pub fn charbonnier(a: &Image, b: &Image, epsilon: f64) -> Result<f64> {
    same_size(a, b)?;
    let eps2 = epsilon * epsilon;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = (f64::from(x) - f64::from(y)) / 255.0;
            (d * d + eps2).sqrt()
        })
        .sum();
    Ok(sum / a.pixels.len() as f64)
}
