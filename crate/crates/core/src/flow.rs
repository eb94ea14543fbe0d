//! Dense flow fields and the Middlebury `.flo` container.
//!
//! Layout: `f32` magic `202021.25`, `i32` width, `i32` height, then row-major
//! interleaved `f32` `(u, v)` pairs, all little-endian. Invalid pixels are
//! written as `u = v = 1e9`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::events::SensorSize;

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_INVALID: f32 = 1e9;

/// Per-pixel displacement in pixels over an evaluation interval.
///
/// Invalid pixels always hold `u = v = 0` in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    size: SensorSize,
    u: Vec<f32>,
    v: Vec<f32>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(size: SensorSize) -> Self {
        let n = size.pixel_count();
        Self {
            size,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn from_parts(size: SensorSize, u: Vec<f32>, v: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = size.pixel_count();
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::Dimension(format!(
                "flow arrays must have {n} entries for {}x{}",
                size.width, size.height
            )));
        }
        let mut f = Self { size, u, v, valid };
        for i in 0..n {
            if !f.valid[i] {
                f.u[i] = 0.0;
                f.v[i] = 0.0;
            } else if !(f.u[i].is_finite() && f.v[i].is_finite()) {
                return Err(Error::Validation(format!("non-finite flow at pixel {i}")));
            }
        }
        Ok(f)
    }

    /// Builds an all-valid field by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(size: SensorSize, mut f: impl FnMut(u32, u32) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(size);
        for y in 0..size.height {
            for x in 0..size.width {
                let i = size.index(x, y);
                let (u, v) = f(x, y);
                out.u[i] = u as f32;
                out.v[i] = v as f32;
            }
        }
        out
    }

    pub fn size(&self) -> SensorSize {
        self.size
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: u32, y: u32) -> Option<(f32, f32)> {
        let i = self.size.index(x, y);
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    pub fn set(&mut self, x: u32, y: u32, u: f32, v: f32) {
        let i = self.size.index(x, y);
        self.u[i] = u;
        self.v[i] = v;
        self.valid[i] = true;
    }

    pub fn set_invalid(&mut self, x: u32, y: u32) {
        let i = self.size.index(x, y);
        self.u[i] = 0.0;
        self.v[i] = 0.0;
        self.valid[i] = false;
    }
}

pub fn encode_flow(flow: &FlowField) -> Result<Vec<u8>> {
    let n = flow.size.pixel_count();
    let mut buf = Vec::with_capacity(12 + 8 * n);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(flow.size.width as i32).to_le_bytes());
    buf.extend_from_slice(&(flow.size.height as i32).to_le_bytes());
    for i in 0..n {
        let (u, v) = if flow.valid[i] {
            let (u, v) = (flow.u[i], flow.v[i]);
            if u.abs() >= FLO_INVALID || v.abs() >= FLO_INVALID {
                return Err(Error::Validation(format!(
                    "flow magnitude at pixel {i} collides with the invalid marker"
                )));
            }
            (u, v)
        } else {
            (FLO_INVALID, FLO_INVALID)
        };
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Format("flow file shorter than its header".into()));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!("bad flow magic {magic}")));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!("invalid flow dimensions {w}x{h}")));
    }
    let size = SensorSize::new(w as u32, h as u32);
    let n = size.pixel_count();
    let payload = &bytes[12..];
    if payload.len() != 8 * n {
        return Err(Error::Format(format!(
            "flow payload has {} bytes, expected {}",
            payload.len(),
            8 * n
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for pair in payload.chunks_exact(8) {
        let pu = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        let pv = f32::from_le_bytes(pair[4..8].try_into().unwrap());
        let ok = pu.abs() < FLO_INVALID && pv.abs() < FLO_INVALID;
        u.push(if ok { pu } else { 0.0 });
        v.push(if ok { pv } else { 0.0 });
        valid.push(ok);
    }
    FlowField::from_parts(size, u, v, valid)
}

pub fn write_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flow(flow)?).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_one_byte_layout() {
        let f = FlowField::from_parts(
            SensorSize::new(2, 1),
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![true; 2],
        )
        .unwrap();
        let bytes = encode_flow(&f).unwrap();
        assert_eq!(bytes.len(), 28);
        let mut expected = Vec::new();
        expected.extend_from_slice(&202021.25f32.to_le_bytes());
        expected.extend_from_slice(&2i32.to_le_bytes());
        expected.extend_from_slice(&1i32.to_le_bytes());
        for x in [1.0f32, 3.0, 2.0, 4.0] {
            expected.extend_from_slice(&x.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_flow(&FlowField::zeros(SensorSize::new(3, 2))).unwrap();
        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_flow(&bad), Err(Error::Format(_))));
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode_flow(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_pixels_survive_round_trip() {
        let mut f = FlowField::zeros(SensorSize::new(4, 3));
        f.set(1, 1, 0.5, -0.25);
        f.set_invalid(2, 2);
        let back = decode_flow(&encode_flow(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.get(2, 2), None);
    }

    #[test]
    fn dimension_mismatch() {
        let r = FlowField::from_parts(SensorSize::new(2, 2), vec![0.0; 3], vec![0.0; 4], vec![true; 4]);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
