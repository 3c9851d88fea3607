use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sidecar header stored next to each raw depth raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthHeader {
    pub width: u32,
    pub height: u32,
    /// Raw units per meter (1000 for millimeters): `meters = raw / depth_scale`.
    pub depth_scale: f64,
}

/// Row-major little-endian `u16` depth image; raw value 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    header: DepthHeader,
    data: Vec<u16>,
}

/// Sidecar path for a raster: same stem, `.json` extension.
pub fn sidecar_path(raster: &Path) -> PathBuf {
    raster.with_extension("json")
}

impl DepthRaster {
    pub fn new(width: u32, height: u32, depth_scale: f64, data: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth raster must be non-empty"));
        }
        if !(depth_scale.is_finite() && depth_scale > 0.0) {
            return Err(Error::invalid("depth_scale must be positive"));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "depth raster has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(DepthRaster {
            header: DepthHeader {
                width,
                height,
                depth_scale,
            },
            data,
        })
    }

    /// Builds a millimeter raster from a metric depth function evaluated at pixel
    /// centers; non-positive or unrepresentable depths become 0.
    pub fn from_fn(width: u32, height: u32, mut depth_m: impl FnMut(u32, u32) -> f64) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                let d = depth_m(u, v);
                let raw = (d * 1000.0).round();
                data.push(if d > 0.0 && raw >= 1.0 && raw <= u16::MAX as f64 {
                    raw as u16
                } else {
                    0
                });
            }
        }
        DepthRaster::new(width, height, 1000.0, data).expect("dimensions consistent")
    }

    pub fn width(&self) -> u32 {
        self.header.width
    }

    pub fn height(&self) -> u32 {
        self.header.height
    }

    pub fn header(&self) -> &DepthHeader {
        &self.header
    }

    pub fn raw(&self, u: u32, v: u32) -> Option<u16> {
        if u >= self.header.width || v >= self.header.height {
            return None;
        }
        Some(self.data[v as usize * self.header.width as usize + u as usize])
    }

    /// Metric depth at an integer pixel; `None` when out of bounds or invalid.
    pub fn depth_at(&self, u: u32, v: u32) -> Option<f64> {
        match self.raw(u, v)? {
            0 => None,
            raw => Some(raw as f64 / self.header.depth_scale),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header = read_header(&sidecar_path(path))?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = header.width as usize * header.height as usize * 2;
        if bytes.len() != expected {
            return Err(Error::schema(
                path,
                format!(
                    "raster has {} bytes but header {}x{} needs {}",
                    bytes.len(),
                    header.width,
                    header.height,
                    expected
                ),
            ));
        }
        let data = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        DepthRaster::new(header.width, header.height, header.depth_scale, data)
            .map_err(|e| Error::schema(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let text = serde_json::to_string(&self.header).expect("header serializes");
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

pub fn read_header(path: &Path) -> Result<DepthHeader> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d/000001.u16");
        let r = DepthRaster::from_fn(5, 3, |u, v| 0.5 + u as f64 * 0.25 + v as f64);
        r.write(&path).unwrap();
        assert!(sidecar_path(&path).ends_with("d/000001.json"));
        let back = DepthRaster::read(&path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.depth_at(2, 1), Some(2.0));
        assert_eq!(back.depth_at(5, 0), None);
    }

    #[test]
    fn zero_is_invalid() {
        let r = DepthRaster::new(2, 1, 1000.0, vec![0, 1500]).unwrap();
        assert_eq!(r.depth_at(0, 0), None);
        assert_eq!(r.depth_at(1, 0), Some(1.5));
    }

    #[test]
    fn size_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.u16");
        DepthRaster::from_fn(4, 4, |_, _| 1.0).write(&path).unwrap();
        std::fs::write(sidecar_path(&path), r#"{"width": 5, "height": 4, "depth_scale": 1000}"#)
            .unwrap();
        assert!(matches!(DepthRaster::read(&path), Err(Error::Schema { .. })));
    }
}
