//! Binary tensor container (`.ccft`) and dataset manifest ingestion.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "CCFT" | version u8 = 1 | dtype u8 = 1 (f32) | ndim u8 | pad u8 = 0
//! ndim x u32 extents (row-major, outermost first)
//! prod(extents) x f32 payload
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CCFT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 8;

/// An n-dimensional `f32` tensor with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = checked_volume(&dims)?;
        if expected != data.len() {
            return Err(Error::DimMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = checked_volume(&dims)?;
        Self::new(dims, vec![0.0; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        out.push(0);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedHeader("truncated header".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::UnsupportedVersion(bytes[4]));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(bytes[5]));
        }
        let ndim = bytes[6] as usize;
        if bytes[7] != 0 {
            return Err(Error::MalformedHeader(format!("pad byte is {}", bytes[7])));
        }
        let dims_end = HEADER_LEN + 4 * ndim;
        if bytes.len() < dims_end {
            return Err(Error::MalformedHeader("truncated extents".into()));
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let expected = checked_volume(&dims)?;
        let payload = &bytes[dims_end..];
        if !payload.len().is_multiple_of(4) || payload.len() / 4 != expected {
            return Err(Error::DimMismatch {
                expected,
                actual: payload.len() / 4,
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dims, data)
    }
}

fn checked_volume(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > u8::MAX as usize || dims.contains(&0) {
        return Err(Error::InvalidDims(dims.to_vec()));
    }
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::InvalidDims(dims.to_vec()));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidDims(dims.to_vec()))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Axis-aligned box in pixels, 0-indexed and half-open: `[xmin, xmax) x [ymin, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Result<Self> {
        if xmin >= xmax || ymin >= ymax {
            return Err(Error::InvalidBox([xmin, ymin, xmax, ymax]));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> u32 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> u32 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.xmax <= width && self.ymax <= height
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [u32; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub features_path: PathBuf,
    pub boundary_path: PathBuf,
    pub gt_boxes: Vec<BBox>,
}

/// The positive image set of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub class_name: String,
    pub images: Vec<ImageEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|e| e.id == id)
    }

    /// Resolves relative paths against `base` and checks every invariant.
    pub fn validate(mut self, base: &Path) -> Result<Self> {
        let mut seen = HashSet::new();
        for entry in &mut self.images {
            if !seen.insert(entry.id.clone()) {
                return Err(Error::DuplicateImageId(entry.id.clone()));
            }
            if entry.width == 0 || entry.height == 0 {
                return Err(Error::InvalidEntry {
                    id: entry.id.clone(),
                    what: format!("image size {}x{}", entry.width, entry.height),
                });
            }
            for b in &entry.gt_boxes {
                if !b.fits_within(entry.width, entry.height) {
                    return Err(Error::BoxOutOfBounds {
                        id: entry.id.clone(),
                        bbox: b.to_array(),
                        width: entry.width,
                        height: entry.height,
                    });
                }
            }
            for p in [
                &mut entry.image_path,
                &mut entry.features_path,
                &mut entry.boundary_path,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.is_file() {
                    return Err(Error::MissingFile(p.clone()));
                }
            }
        }
        Ok(self)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.validate(base)
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
