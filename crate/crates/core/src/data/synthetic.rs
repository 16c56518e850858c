use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{scan_dataset, DatasetHandle, DatasetOptions};
use super::image_io::{denormalize, save_png};
use crate::domain::ImageTensor;
use crate::error::{Error, Result};

const BACKGROUND_JITTER: f64 = 10.0;
const SHAPE_JITTER: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_domains: usize,
    pub per_domain_count: usize,
    /// Square side length, a multiple of 4.
    pub size: usize,
    pub seed: u64,
}

/// Hue in degrees every image of domain `d` is built around.
pub fn signature_hue(d: usize, n: usize) -> f64 {
    d as f64 * 360.0 / n as f64
}

pub fn domain_folder(d: usize, n: usize) -> String {
    let digits = (n - 1).to_string().len();
    format!("domain_{d:0digits$}")
}

/// `h` in degrees, `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Returns `(hue degrees, saturation, value)`; hue is 0 for grays.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

fn to_pixel(rgb: [f64; 3]) -> Rgb<u8> {
    Rgb(rgb.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
}

fn image_rng(seed: u64, d: usize, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((d as u64) << 32) | i as u64);
    rng
}

/// One image of domain `d`: a shaded background plus a few solid circles and
/// rectangles, all hued around the domain's signature.
pub fn synthesize(d: usize, n: usize, size: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    let center = signature_hue(d, n);
    let bg_hue = center + rng.random_range(-BACKGROUND_JITTER..=BACKGROUND_JITTER);
    let bg_s = rng.random_range(0.35..=0.6);
    let bg_v = rng.random_range(0.35..=0.6);
    let vertical = rng.random_bool(0.5);
    let side = size as f64;
    let mut img = RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let t = if vertical { y as f64 } else { x as f64 } / side;
        to_pixel(hsv_to_rgb(bg_hue, bg_s, bg_v * (0.85 + 0.3 * t)))
    });
    let count = rng.random_range(3..=6);
    for _ in 0..count {
        let hue = center + rng.random_range(-SHAPE_JITTER..=SHAPE_JITTER);
        let color = to_pixel(hsv_to_rgb(hue, rng.random_range(0.6..=1.0), rng.random_range(0.6..=1.0)));
        let cx = rng.random_range(0.0..side);
        let cy = rng.random_range(0.0..side);
        let r = rng.random_range(side / 10.0..=side / 4.0);
        let circle = rng.random_bool(0.5);
        let aspect = rng.random_range(0.5..=1.5);
        for (x, y, p) in img.enumerate_pixels_mut() {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let inside = if circle { dx * dx + dy * dy <= r * r } else { dx.abs() <= r && dy.abs() <= r * aspect };
            if inside {
                *p = color;
            }
        }
    }
    img
}

/// Writes `<root>/domain_<d>/<i>.png` for every domain and returns the scanned
/// dataset at the generated size, with flipping on.
pub fn make_synthetic_dataset(spec: SyntheticSpec, root: &Path) -> Result<DatasetHandle> {
    if spec.n_domains < 2 {
        return Err(Error::TooFewDomains(spec.n_domains));
    }
    if spec.per_domain_count == 0 {
        return Err(Error::Config("per_domain_count must be positive".into()));
    }
    let options = DatasetOptions { target_size: (spec.size, spec.size), flip: true, crop: false };
    options.validate()?;
    let digits = spec.per_domain_count.saturating_sub(1).to_string().len();
    for d in 0..spec.n_domains {
        let dir = root.join(domain_folder(d, spec.n_domains));
        for i in 0..spec.per_domain_count {
            let mut rng = image_rng(spec.seed, d, i);
            save_png(&dir.join(format!("{i:0digits$}.png")), &synthesize(d, spec.n_domains, spec.size, &mut rng))?;
        }
    }
    scan_dataset(root, options)
}

/// Saturation-weighted circular mean hue of an image, in degrees `[0, 360)`.
pub fn mean_hue(img: &ImageTensor) -> f64 {
    let t = img.tensor();
    let [_, h, w] = t.shape();
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let rgb = [0, 1, 2].map(|c| denormalize(t.get(c, y, x)) as f64 / 255.0);
            let (hue, s, _) = rgb_to_hsv(rgb);
            let a = hue.to_radians();
            sx += s * a.cos();
            sy += s * a.sin();
        }
    }
    sy.atan2(sx).to_degrees().rem_euclid(360.0)
}

/// Absolute angular difference in degrees, in `[0, 180]`.
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Domain whose signature hue is closest to `hue`.
pub fn nearest_signature(hue: f64, n: usize) -> usize {
    (0..n)
        .min_by(|&a, &b| hue_distance(hue, signature_hue(a, n)).total_cmp(&hue_distance(hue, signature_hue(b, n))))
        .unwrap_or(0)
}
