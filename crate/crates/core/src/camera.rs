//! Pinhole camera with 5-coefficient plumb-bob (radial-tangential) distortion.

use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::SensorSize;

/// Plumb-bob coefficients in OpenCV order `(k1, k2, p1, p2, k3)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            k1: c[0],
            k2: c[1],
            p1: c[2],
            p2: c[3],
            k3: c[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&c| c == 0.0)
    }

    /// Forward model on normalized (unit-focal) coordinates.
    pub fn distort(&self, p: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xy2 = 2.0 * x * y;
        Vector2::new(
            x * radial + self.p1 * xy2 + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + self.p2 * xy2,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub dist: Distortion,
    pub sensor_size: SensorSize,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        dist: Distortion,
        sensor_size: SensorSize,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            dist,
            sensor_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// An undistorted camera.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, sensor_size: SensorSize) -> Result<Self> {
        Self::new(fx, fy, cx, cy, Distortion::default(), sensor_size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let (w, h) = (self.sensor_size.width as f64, self.sensor_size.height as f64);
        if !(self.cx >= 0.0 && self.cx < w && self.cy >= 0.0 && self.cy < h) {
            return Err(Error::Validation(format!(
                "principal point ({}, {}) outside {}x{} sensor",
                self.cx, self.cy, w, h
            )));
        }
        if self.dist.to_array().iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite distortion coefficient".into()));
        }
        Ok(())
    }

    pub fn pixel_to_normalized(&self, px: Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn normalized_to_pixel(&self, n: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    pub fn distort_point(&self, normalized: Vector2<f64>) -> Vector2<f64> {
        self.dist.distort(normalized)
    }

    /// Maps an ideal pixel through the distortion model (remap source lookup).
    pub fn distort_pixel(&self, px: Vector2<f64>) -> Vector2<f64> {
        self.normalized_to_pixel(self.distort_point(self.pixel_to_normalized(px)))
    }
}

/// Calibration file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub dist: Option<[f64; 5]>,
}

impl From<&CameraModel> for CalibrationFile {
    fn from(c: &CameraModel) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.sensor_size.width,
            height: c.sensor_size.height,
            dist: Some(c.dist.to_array()),
        }
    }
}

pub fn parse_calibration(json: &str) -> Result<CameraModel> {
    let f: CalibrationFile = serde_json::from_str(json)?;
    CameraModel::new(
        f.fx,
        f.fy,
        f.cx,
        f.cy,
        Distortion::from_array(f.dist.unwrap_or([0.0; 5])),
        SensorSize::new(f.width, f.height),
    )
}

pub fn read_calibration(path: impl AsRef<Path>) -> Result<CameraModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text)
}

pub fn write_calibration(path: impl AsRef<Path>, cam: &CameraModel) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&CalibrationFile::from(cam))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
