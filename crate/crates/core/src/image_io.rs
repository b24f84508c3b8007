//! 8-bit RGB raster I/O. Pixel values map to `[-1, 1]` via `p / 127.5 - 1`
//! and back via `round(clamp((v + 1) * 127.5, 0, 255))`.

use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::persist::write_atomic;
use crate::tensor::{Scalar, Tensor};

pub fn to_unit<T: Scalar>(p: u8) -> T {
    T::from_f64_lossy(p as f64 / 127.5 - 1.0)
}

pub fn to_u8<T: Scalar>(v: T) -> u8 {
    let p = (v.to_f64_lossy() + 1.0) * 127.5;
    if p.is_nan() {
        return 0;
    }
    p.clamp(0.0, 255.0).round() as u8
}

/// Loads a lossless 8-bit image as `(h, w, 3)` in `[-1, 1]`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let unsupported = |reason: String| Error::UnsupportedImage { path: path.to_path_buf(), reason };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(f) => return Err(unsupported(format!("{f:?} is not a lossless format"))),
        None => return Err(unsupported("unrecognized format".into())),
    }
    let img = reader.decode().map_err(|e| unsupported(e.to_string()))?;
    let rgb = match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => img.to_rgb8(),
        other => return Err(unsupported(format!("unsupported bit depth or layout {other:?}, need 8-bit"))),
    };
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(to_unit).collect();
    Tensor::from_vec(&[h as usize, w as usize, 3], data)
}

/// `(h, w, 3)` tensor to interleaved 8-bit RGB.
pub fn to_rgb8<T: Scalar>(t: &Tensor<T>) -> Result<(u32, u32, Vec<u8>)> {
    match *t.shape() {
        [h, w, 3] => Ok((w as u32, h as u32, t.data().iter().map(|&v| to_u8(v)).collect())),
        _ => Err(Error::Shape(format!("expected an (h, w, 3) image, got {:?}", t.shape()))),
    }
}

/// Saves an `(h, w, 3)` tensor as PNG, or binary PPM for `.ppm` paths.
pub fn save_image<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    let (w, h, raw) = to_rgb8(t)?;
    let bytes = if is_ppm(path) {
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(&raw);
        out
    } else {
        let img = image::RgbImage::from_raw(w, h, raw).expect("buffer size");
        encode_png(DynamicImage::ImageRgb8(img), path)?
    };
    write_atomic(path, &bytes)
}

/// Saves a rank-2 map as an 8-bit grayscale PNG, affinely rescaled so the
/// minimum maps to 0 and the maximum to 255.
pub fn save_gray_rescaled<T: Scalar>(t: &Tensor<T>, path: &Path) -> Result<()> {
    let [h, w] = match *t.shape() {
        [h, w] => [h, w],
        _ => return Err(Error::Shape(format!("expected an (h, w) map, got {:?}", t.shape()))),
    };
    let vals: Vec<f64> = t.data().iter().map(|v| v.to_f64_lossy()).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let raw = vals.iter().map(|v| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma8(img), path)?)
}

fn encode_png(img: DynamicImage, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::UnsupportedImage { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok(buf.into_inner())
}

fn is_ppm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}
