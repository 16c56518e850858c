use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageReader, RgbImage};

use crate::domain::ImageTensor;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[0, 255] -> [-1, 1]` via `x / 127.5 - 1`.
pub fn normalize(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize`], rounding and clamping.
pub fn denormalize(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn rgb_to_tensor(img: &RgbImage) -> Result<ImageTensor> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    let t = Tensor::from_fn([3, h, w], |c, y, x| normalize(raw[(y * w + x) * 3 + c]));
    ImageTensor::new(t)
}

pub fn tensor_to_rgb(img: &ImageTensor) -> RgbImage {
    let t = img.tensor();
    let [_, h, w] = t.shape();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([0, 1, 2].map(|c| denormalize(t.get(c, y, x))))
    })
}

pub fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let decode_err = |message: String| Error::Decode { path: path.to_path_buf(), message };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    Ok(reader.decode().map_err(|e| decode_err(e.to_string()))?.to_rgb8())
}

/// Reads only the header; cheap validation for dataset scans.
pub fn probe(path: &Path) -> Result<(u32, u32)> {
    ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| Error::io(path, e))?
        .into_dimensions()
        .map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

/// Bilinear resize to `(height, width)`; a no-op when the size already matches.
pub fn resize(img: &RgbImage, (h, w): (usize, usize)) -> RgbImage {
    if img.width() as usize == w && img.height() as usize == h {
        return img.clone();
    }
    imageops::resize(img, w as u32, h as u32, FilterType::Triangle)
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

pub fn save_tensor_png(path: &Path, img: &ImageTensor) -> Result<()> {
    save_png(path, &tensor_to_rgb(img))
}

/// Tiles equally sized images row-major into one picture.
pub fn tile(rows: &[Vec<ImageTensor>]) -> Result<RgbImage> {
    let first = rows.first().and_then(|r| r.first()).ok_or_else(|| Error::shape("nothing to tile"))?;
    let [_, h, w] = first.shape();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut canvas = RgbImage::new((w * cols) as u32, (h * rows.len()) as u32);
    for (i, row) in rows.iter().enumerate() {
        for (j, img) in row.iter().enumerate() {
            if img.shape() != first.shape() {
                return Err(Error::shape("tiles must share one size"));
            }
            imageops::replace(&mut canvas, &tensor_to_rgb(img), (j * w) as i64, (i * h) as i64);
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_endpoints_and_round_trip() {
        assert_eq!(normalize(255), 1.0);
        assert_eq!(normalize(0), -1.0);
        for v in 0..=255u8 {
            let x = normalize(v);
            assert!((-1.0..=1.0).contains(&x));
            assert_eq!(denormalize(x), v);
            assert!(((x + 1.0) * 127.5 - v as f32).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn tensor_image_round_trip() {
        let img = RgbImage::from_fn(8, 4, |x, y| image::Rgb([(x * 30) as u8, (y * 60) as u8, 7]));
        let t = rgb_to_tensor(&img).unwrap();
        assert_eq!(t.shape(), [3, 4, 8]);
        assert_eq!(tensor_to_rgb(&t), img);
    }
}
