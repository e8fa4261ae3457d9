//! Image-quality metrics.
//!
//! SSIM follows the usual Gaussian-window formulation: luma with BT.709
//! weights, an 11-tap separable Gaussian with sigma 1.5, symmetric ("reflect")
//! edge handling, population covariances, K1 = 0.01, K2 = 0.03, data range 1,
//! and the mean taken over the map with a 5-pixel border removed.

use crate::image::{Image, ImageError};

const SIGMA: f64 = 1.5;
const RADIUS: usize = 5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub fn luma(img: &Image) -> Vec<f64> {
    img.pixels
        .iter()
        .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
        .collect()
}

fn gaussian_kernel() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - RADIUS as f64;
        *v = (-0.5 * x * x / (SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Half-sample symmetric index: `d c b a | a b c d | d c b a`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + reflect(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[reflect(y as isize + j as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Per-pixel SSIM map over luma.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>, ImageError> {
    if a.dims() != b.dims() {
        return Err(ImageError::DimensionMismatch(a.dims(), b.dims()));
    }
    let (w, h) = (a.width as usize, a.height as usize);
    let x = luma(a);
    let y = luma(b);
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, my) = (blur(&x, w, h, &k), blur(&y, w, h, &k));
    let (mxx, myy, mxy) = (blur(&xx, w, h, &k), blur(&yy, w, h, &k), blur(&xy, w, h, &k));
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    Ok((0..w * h)
        .map(|i| {
            let vx = mxx[i] - mx[i] * mx[i];
            let vy = myy[i] - my[i] * my[i];
            let cxy = mxy[i] - mx[i] * my[i];
            ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2))
        })
        .collect())
}

/// Mean SSIM; 1.0 for identical images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, ImageError> {
    let map = ssim_map(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    let (x0, x1, y0, y1) = if w > 2 * RADIUS && h > 2 * RADIUS {
        (RADIUS, w - RADIUS, RADIUS, h - RADIUS)
    } else {
        (0, w, 0, h)
    };
    let mut sum = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            sum += map[y * w + x];
        }
    }
    Ok(sum / ((x1 - x0) * (y1 - y0)) as f64)
}

/// PSNR in dB over all four channels with peak 1; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    if a.dims() != b.dims() {
        return Err(ImageError::DimensionMismatch(a.dims(), b.dims()));
    }
    let mut se = 0.0;
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..4 {
            let d = p[c] as f64 - q[c] as f64;
            se += d * d;
        }
    }
    let mse = se / (4 * a.pixels.len()) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}
