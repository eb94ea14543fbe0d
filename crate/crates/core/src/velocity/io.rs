//! Velocity traces and point-cloud files.
//!
//! Velocity CSV rows are `t,vx,vy,vz,wx,wy,wz` in s, m/s and rad/s. A header
//! row starting with `t` and `#` comments are skipped. Point clouds are PLY
//! (ascii or binary little-endian; the `vertex` element must come first) or
//! CSV `x,y,z`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use super::VelocitySample;
use crate::error::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then_some((i + 1, content))
    })
}

fn parse_floats<const N: usize>(line: usize, content: &str) -> Result<[f64; N]> {
    let fields: Vec<&str> = content.split(',').map(str::trim).collect();
    if fields.len() != N {
        return Err(Error::Parse {
            line,
            msg: format!("expected {N} fields, found {}", fields.len()),
        });
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(&fields) {
        *o = f
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("invalid number `{f}`"),
            })?;
    }
    Ok(out)
}

fn is_header(content: &str) -> bool {
    content.starts_with(|c: char| c.is_ascii_alphabetic())
}

pub fn parse_velocity_csv(text: &str) -> Result<Vec<VelocitySample>> {
    let mut out: Vec<VelocitySample> = Vec::new();
    for (line, content) in data_lines(text) {
        if out.is_empty() && is_header(content) {
            continue;
        }
        let [t, vx, vy, vz, wx, wy, wz] = parse_floats::<7>(line, content)?;
        if let Some(prev) = out.last() {
            if t < prev.t {
                return Err(Error::NonMonotoneTimestamps { index: out.len() });
            }
        }
        out.push(VelocitySample::new(t, [vx, vy, vz], [wx, wy, wz]));
    }
    Ok(out)
}

pub fn format_velocity_csv(samples: &[VelocitySample]) -> String {
    let mut out = String::from("t,vx,vy,vz,wx,wy,wz\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.v.x, s.v.y, s.v.z, s.w.x, s.w.y, s.w.z
        );
    }
    out
}

pub fn read_velocity_csv(path: impl AsRef<Path>) -> Result<Vec<VelocitySample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_velocity_csv(&text)
}

pub fn write_velocity_csv(path: impl AsRef<Path>, samples: &[VelocitySample]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_velocity_csv(samples)).map_err(|e| Error::io(path, e))
}

pub fn parse_cloud_csv(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for (line, content) in data_lines(text) {
        if out.is_empty() && is_header(content) {
            continue;
        }
        out.push(Vector3::from(parse_floats::<3>(line, content)?));
    }
    Ok(out)
}

pub fn write_cloud_csv(path: impl AsRef<Path>, points: &[Vector3<f64>]) -> Result<()> {
    let mut out = String::from("x,y,z\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<Vec<Vector3<f64>>> {
    let fmt_err = |m: &str| Error::Format(format!("PLY: {m}"));
    let end = b"end_header";
    let pos = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| fmt_err("missing end_header"))?;
    let mut body = pos + end.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(fmt_err("end_header must end its line"));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|_| fmt_err("header is not UTF-8"))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(fmt_err("missing magic"));
    }
    let mut format = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    let mut seen_element = false;
    for l in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => return Err(fmt_err(&format!("unsupported format {other}"))),
            ["element", name, n] => {
                if !seen_element && *name != "vertex" {
                    return Err(fmt_err("vertex must be the first element"));
                }
                seen_element = true;
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| fmt_err("bad vertex count"))?);
                }
            }
            ["property", "list", ..] if in_vertex => return Err(fmt_err("list properties on vertex")),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| fmt_err(&format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| fmt_err("missing format"))?;
    let count = count.ok_or_else(|| fmt_err("missing vertex element"))?;
    let col = |n: &str| props.iter().position(|(p, _)| p == n).ok_or_else(|| fmt_err(&format!("missing {n}")));
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut out = Vec::with_capacity(count);
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(&bytes[body..]).map_err(|_| fmt_err("body is not UTF-8"))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..count {
                let row = rows.next().ok_or_else(|| fmt_err("truncated vertex list"))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| fmt_err(&format!("bad number in vertex {i}")))?;
                if vals.len() < props.len() {
                    return Err(fmt_err(&format!("vertex {i} has too few values")));
                }
                out.push(Vector3::new(vals[ix], vals[iy], vals[iz]));
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let offsets: Vec<usize> = props
                .iter()
                .scan(0, |acc, (_, s)| {
                    let o = *acc;
                    *acc += s.size();
                    Some(o)
                })
                .collect();
            let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
            let data = &bytes[body..];
            if data.len() < stride * count {
                return Err(fmt_err("truncated binary vertex data"));
            }
            for rec in data.chunks_exact(stride).take(count) {
                let get = |k: usize| props[k].1.read_le(&rec[offsets[k]..]);
                out.push(Vector3::new(get(ix), get(iy), get(iz)));
            }
        }
    }
    if out.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(fmt_err("non-finite vertex"));
    }
    Ok(out)
}

/// Writes `xyz` as `float` properties.
pub fn write_ply(path: impl AsRef<Path>, points: &[Vector3<f64>], format: PlyFormat) -> Result<()> {
    let name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut buf = format!(
        "ply\nformat {name} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )
    .into_bytes();
    for p in points {
        match format {
            PlyFormat::Ascii => buf.extend_from_slice(format!("{} {} {}\n", p.x as f32, p.y as f32, p.z as f32).as_bytes()),
            PlyFormat::BinaryLittleEndian => {
                for c in p.iter() {
                    buf.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
        }
    }
    let path = path.as_ref();
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads `.ply` or `.csv` by extension.
pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => parse_ply(&bytes),
        Some("csv") => parse_cloud_csv(std::str::from_utf8(&bytes).map_err(|_| Error::Format("CSV is not UTF-8".into()))?),
        _ => Err(Error::Format(format!("unknown point-cloud extension: {}", path.display()))),
    }
}
