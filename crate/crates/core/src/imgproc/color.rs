//! sRGB <-> CIELAB (D65 white, 2 degree observer).

use super::{ColorSpace, Image, ImgError, Plane};

const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > DELTA {
        t.powi(3)
    } else {
        3.0 * DELTA * DELTA * (t - 4.0 / 29.0)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

/// One sRGB pixel in `[0,1]` to `(L*, a*, b*)`.
fn pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mat_vec(&RGB_TO_XYZ, rgb.map(srgb_to_linear));
    let [fx, fy, fz] = [0, 1, 2].map(|k| lab_f(xyz[k] / WHITE[k]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn pixel_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let f = [fy + lab[1] / 500.0, fy, fy - lab[2] / 200.0];
    let xyz = [0, 1, 2].map(|k| WHITE[k] * lab_f_inv(f[k]));
    mat_vec(&XYZ_TO_RGB, xyz).map(|c| linear_to_srgb(c.max(0.0)).clamp(0.0, 1.0))
}

/// Converts an sRGB image to LAB planes `(L*/100, a*, b*)`.
pub fn rgb_to_lab(img: &Image) -> Result<Image, ImgError> {
    img.expect_space(ColorSpace::Srgb)?;
    let (h, w) = (img.height(), img.width());
    let [r, g, b] = [0, 1, 2].map(|c| img.plane(c).data());
    let mut planes = [0, 1, 2].map(|_| Vec::with_capacity(h * w));
    for k in 0..h * w {
        let lab = pixel_to_lab([r[k], g[k], b[k]]);
        planes[0].push(lab[0] / 100.0);
        planes[1].push(lab[1]);
        planes[2].push(lab[2]);
    }
    Image::new(planes.map(|d| Plane::new(h, w, d)).to_vec(), ColorSpace::Lab)
}

/// The `L*/100` channel of an sRGB image, in `[0, 1]`.
pub fn rgb_to_luminance(img: &Image) -> Result<Image, ImgError> {
    if img.planes().len() != 3 {
        return Err(ImgError::ChannelCount {
            expected: 3,
            got: img.planes().len(),
        });
    }
    let lab = rgb_to_lab(img)?;
    let l = lab.into_planes().swap_remove(0).clamp01();
    Ok(Image::luminance(l))
}

/// Rebuilds sRGB from a (possibly restored) luminance plane and the `a*`,
/// `b*` planes of a LAB image of the same size.
pub fn lab_recompose(luminance: &Image, chroma: &Image) -> Result<Image, ImgError> {
    luminance.expect_space(ColorSpace::Luminance)?;
    chroma.expect_space(ColorSpace::Lab)?;
    let (h, w) = (luminance.height(), luminance.width());
    if (chroma.height(), chroma.width()) != (h, w) {
        return Err(ImgError::SizeMismatch(h, w, chroma.height(), chroma.width()));
    }
    let l = luminance.plane(0).data();
    let (a, b) = (chroma.plane(1).data(), chroma.plane(2).data());
    let mut planes = [0, 1, 2].map(|_| Vec::with_capacity(h * w));
    for k in 0..h * w {
        let rgb = pixel_to_rgb([l[k] * 100.0, a[k], b[k]]);
        for c in 0..3 {
            planes[c].push(rgb[c]);
        }
    }
    Image::new(planes.map(|d| Plane::new(h, w, d)).to_vec(), ColorSpace::Srgb)
}
