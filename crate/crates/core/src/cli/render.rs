//! Orientation maps as PNG: hue encodes direction, invalid pixels are black.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::priors::OrientationMap;

/// HSV with full saturation and value; `hue` in degrees.
pub(crate) fn hue_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |c: f64| (c * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

pub(crate) fn orientation_image(map: &OrientationMap) -> RgbImage {
    let size = map.size();
    RgbImage::from_fn(size.width, size.height, |x, y| match map.at(x, y) {
        Some(d) => Rgb(hue_to_rgb(d[1].atan2(d[0]).to_degrees())),
        None => Rgb([0, 0, 0]),
    })
}

pub(crate) fn save_orientation_png(map: &OrientationMap, path: &Path) -> Result<()> {
    orientation_image(map)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primary_hues() {
        assert_eq!(hue_to_rgb(0.0), [255, 0, 0]);
        assert_eq!(hue_to_rgb(120.0), [0, 255, 0]);
        assert_eq!(hue_to_rgb(240.0), [0, 0, 255]);
        assert_eq!(hue_to_rgb(-120.0), [0, 0, 255]);
        assert_eq!(hue_to_rgb(60.0), [255, 255, 0]);
    }
}
