use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

use super::{io_error, DataError};
use crate::imgproc::{ColorSpace, Image, Plane};

/// Loads an 8-bit PNG. Grayscale files become one luminance plane, RGB
/// files three sRGB planes; codes are divided by 255.
pub fn load_png(path: &Path) -> Result<Image, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| io_error(path, e))?
        .with_guessed_format()
        .map_err(|e| io_error(path, e))?;
    let decoded = reader.decode().map_err(|e| DataError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let unit = |c: u8| c as f64 / 255.0;
    let image = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let plane = Plane::new(h, w, buf.into_raw().into_iter().map(unit).collect());
            Image::new(vec![plane], ColorSpace::Luminance)?
        }
        DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            let planes = (0..3)
                .map(|c| Plane::new(h, w, raw.iter().skip(c).step_by(3).map(|&v| unit(v)).collect()))
                .collect();
            Image::new(planes, ColorSpace::Srgb)?
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            return Err(DataError::UnsupportedDepth(path.to_path_buf()))
        }
        other => {
            return Err(DataError::UnsupportedLayout {
                path: path.to_path_buf(),
                layout: format!("{:?}", other.color()),
            })
        }
    };
    Ok(image)
}

/// 8-bit code for a unit value: clamp, then round half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Saves a luminance image as grayscale or an sRGB image as RGB.
pub fn save_png(image: &Image, path: &Path) -> Result<(), DataError> {
    let (h, w) = (image.height() as u32, image.width() as u32);
    let result = match image.space() {
        ColorSpace::Luminance => {
            let raw = image.plane(0).data().iter().map(|&v| quantize(v)).collect();
            GrayImage::from_raw(w, h, raw)
                .expect("buffer matches dimensions")
                .save_with_format(path, ImageFormat::Png)
        }
        ColorSpace::Srgb => {
            let planes = image.planes();
            let raw = (0..planes[0].data().len())
                .flat_map(|k| planes.iter().map(move |p| quantize(p.data()[k])))
                .collect();
            RgbImage::from_raw(w, h, raw)
                .expect("buffer matches dimensions")
                .save_with_format(path, ImageFormat::Png)
        }
        ColorSpace::Lab => return Err(DataError::Unsavable("Lab images must be converted to sRGB first")),
    };
    result.map_err(|e| DataError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Rounds every value to the nearest 8-bit code, as a save/load cycle would.
pub fn quantize_plane(p: &Plane) -> Plane {
    p.map(|v| quantize(v) as f64 / 255.0)
}
