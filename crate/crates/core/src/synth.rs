//! Synthetic positive-image sets with planted objects.
//!
//! Each image has a flat-colored background with mild noise, one object
//! rectangle (the ground truth) and up to two distractor rectangles. Every
//! rectangle has a dark outline just inside its edge, and the boundary map
//! carries a strong ring over that outline. Feature stacks are built at
//! `1 / stride` resolution so that a chosen group of kernels fires on the
//! object and the rest fire weakly elsewhere.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pipeline::ImageInputs;
use crate::tensor_store::{save_manifest, save_tensor, BBox, DatasetManifest, ImageEntry, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Planted kernels fire on the central part of the object.
    Standard,
    /// Planted kernels fire on one corner of the object only.
    PartialActivation,
    /// Five kernel groups of decreasing strength. Group 0 fires on the object,
    /// group 1 on half of it, group 2 on the object and a distractor, groups 3
    /// and 4 on distractors only.
    GradedClusters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub n_images: usize,
    pub stride: u32,
    pub kernels_per_group: usize,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            n_images: 10,
            stride: 8,
            kernels_per_group: 6,
            scenario: Scenario::Standard,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Number of feature kernels per image.
    pub fn kernels(&self) -> usize {
        5 * self.kernels_per_group
    }

    /// Kernels that fire on the object, i.e. the expected top cluster.
    pub fn planted_kernels(&self) -> Vec<usize> {
        (0..self.kernels_per_group).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub rgb: RgbImage,
    pub features: Tensor,
    pub boundary: Tensor,
    pub gt_box: BBox,
    pub distractors: Vec<BBox>,
}

impl SynthImage {
    pub fn inputs(&self) -> ImageInputs {
        ImageInputs {
            id: self.id.clone(),
            rgb: self.rgb.clone(),
            features: self.features.clone(),
            boundary: self.boundary.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn from_box(b: &BBox) -> Self {
        Rect {
            x0: b.xmin as f64,
            y0: b.ymin as f64,
            x1: b.xmax as f64,
            y1: b.ymax as f64,
        }
    }

    /// Sub-rectangle by fractional extents.
    fn part(&self, fx0: f64, fy0: f64, fx1: f64, fy1: f64) -> Self {
        let (w, h) = (self.x1 - self.x0, self.y1 - self.y0);
        Rect {
            x0: self.x0 + fx0 * w,
            y0: self.y0 + fy0 * h,
            x1: self.x0 + fx1 * w,
            y1: self.y0 + fy1 * h,
        }
    }

    fn overlap(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
        let w = (self.x1.min(x1) - self.x0.max(x0)).max(0.0);
        let h = (self.y1.min(y1) - self.y0.max(y0)).max(0.0);
        w * h
    }
}

fn place(
    rng: &mut ChaCha8Rng,
    width: u32,
    height: u32,
    size: (u32, u32),
    taken: &[BBox],
    gap: u32,
) -> Option<BBox> {
    let margin = 8;
    for _ in 0..200 {
        let w = rng.random_range(size.0..=size.1);
        let h = rng.random_range(size.0..=size.1);
        if w + 2 * margin >= width || h + 2 * margin >= height {
            return None;
        }
        let x = rng.random_range(margin..width - w - margin);
        let y = rng.random_range(margin..height - h - margin);
        let b = BBox::new(x, y, x + w, y + h).unwrap();
        let clear = taken.iter().all(|t| {
            b.xmin >= t.xmax + gap
                || t.xmin >= b.xmax + gap
                || b.ymin >= t.ymax + gap
                || t.ymin >= b.ymax + gap
        });
        if clear {
            return Some(b);
        }
    }
    None
}

/// Width of the dark outline drawn just inside every rectangle.
const BAND: i64 = 4;
/// How far the boundary ring extends past each side of the outline.
const RING_PAD: i64 = 2;

fn in_rect(x: i64, y: i64, x0: i64, y0: i64, x1: i64, y1: i64) -> bool {
    x >= x0 && x < x1 && y >= y0 && y < y1
}

/// Inside the rectangle but within `BAND` of its border.
fn on_band(b: &BBox, x: u32, y: u32) -> bool {
    let (x, y) = (x as i64, y as i64);
    let (x0, y0, x1, y1) = (b.xmin as i64, b.ymin as i64, b.xmax as i64, b.ymax as i64);
    in_rect(x, y, x0, y0, x1, y1) && !in_rect(x, y, x0 + BAND, y0 + BAND, x1 - BAND, y1 - BAND)
}

/// The outline band grown by `RING_PAD` on both sides.
fn on_ring(b: &BBox, x: u32, y: u32) -> bool {
    let (x, y) = (x as i64, y as i64);
    let (x0, y0, x1, y1) = (b.xmin as i64, b.ymin as i64, b.xmax as i64, b.ymax as i64);
    let (p, q) = (RING_PAD, BAND + RING_PAD);
    in_rect(x, y, x0 - p, y0 - p, x1 + p, y1 + p) && !in_rect(x, y, x0 + q, y0 + q, x1 - q, y1 - q)
}

fn inside(b: &BBox, x: u32, y: u32) -> bool {
    x >= b.xmin && x < b.xmax && y >= b.ymin && y < b.ymax
}

fn jitter(rng: &mut ChaCha8Rng, c: [u8; 3], amount: i32) -> Rgb<u8> {
    Rgb(c.map(|v| (v as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8))
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthImage> {
    (0..cfg.n_images).map(|i| generate_one(cfg, i)).collect()
}

fn generate_one(cfg: &SynthConfig, index: usize) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let (w, h) = (cfg.width, cfg.height);
    let short = w.min(h);

    let obj_size = (short * 5 / 16, short / 2);
    let object = place(&mut rng, w, h, obj_size, &[], 0).expect("image large enough for an object");
    let mut taken = vec![object];
    let dis_size = (short / 7, short / 4);
    for _ in 0..2 {
        if let Some(d) = place(&mut rng, w, h, dis_size, &taken, 12) {
            taken.push(d);
        }
    }
    let distractors = taken[1..].to_vec();

    let bg = [90, 110, 95];
    let obj_color = [205, 60, 50];
    let dis_colors = [[55, 70, 190], [205, 195, 60]];
    let outline = [60, 25, 30];
    let rgb = RgbImage::from_fn(w, h, |x, y| {
        if taken.iter().any(|b| on_band(b, x, y)) {
            jitter(&mut rng, outline, 6)
        } else if inside(&object, x, y) {
            jitter(&mut rng, obj_color, 6)
        } else if let Some(k) = distractors.iter().position(|d| inside(d, x, y)) {
            jitter(&mut rng, dis_colors[k], 6)
        } else {
            jitter(&mut rng, bg, 8)
        }
    });
    let mut boundary = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = if taken.iter().any(|b| on_ring(b, x, y)) {
                rng.random_range(0.95..1.0)
            } else {
                rng.random_range(0.0..0.01)
            };
            boundary.push(v as f32);
        }
    }
    let boundary = Tensor::new(vec![h as usize, w as usize], boundary).unwrap();

    let features = features(cfg, &mut rng, &object, &distractors);
    SynthImage {
        id: format!("img{index:04}"),
        rgb,
        features,
        boundary,
        gt_box: object,
        distractors,
    }
}

fn features(cfg: &SynthConfig, rng: &mut ChaCha8Rng, object: &BBox, distractors: &[BBox]) -> Tensor {
    let s = cfg.stride.max(1) as f64;
    let hf = (cfg.height as f64 / s).ceil() as usize;
    let wf = (cfg.width as f64 / s).ceil() as usize;
    let m = cfg.kernels();
    let obj = Rect::from_box(object);
    let dis: Vec<Rect> = distractors.iter().map(Rect::from_box).collect();
    let dis_a = dis.first().copied();
    let dis_b = dis.get(1).or(dis.first()).copied();
    let corner = rng.random_range(0..4);
    let half = rng.random_range(0..4);
    // planted kernels respond together to the object
    let strength = rng.random_range(5.0..6.0);

    let mut data = Vec::with_capacity(m * hf * wf);
    for k in 0..m {
        let group = k / cfg.kernels_per_group;
        let jx = rng.random_range(-0.05..0.05);
        let jy = rng.random_range(-0.05..0.05);
        let (amp, blobs): (f64, Vec<Rect>) = match (cfg.scenario, group) {
            (Scenario::Standard, 0) => (
                strength * rng.random_range(0.97..1.03),
                vec![obj.part(0.15 + jx, 0.15 + jy, 0.85 + jx, 0.85 + jy)],
            ),
            (Scenario::PartialActivation, 0) => {
                let (fx, fy) = [(0.0, 0.0), (0.6, 0.0), (0.0, 0.6), (0.6, 0.6)][corner];
                (
                    strength * rng.random_range(0.97..1.03),
                    vec![obj.part(fx + 0.05, fy + 0.05, fx + 0.35, fy + 0.35)],
                )
            }
            (Scenario::Standard | Scenario::PartialActivation, _) => {
                let size = rng.random_range(1.0..3.0) * s;
                let x = rng.random_range(0.0..cfg.width as f64 - size);
                let y = rng.random_range(0.0..cfg.height as f64 - size);
                (
                    rng.random_range(0.5..1.5),
                    vec![Rect {
                        x0: x,
                        y0: y,
                        x1: x + size,
                        y1: y + size,
                    }],
                )
            }
            (Scenario::GradedClusters, g) => {
                let amp = 10.0 - 2.0 * g as f64 + rng.random_range(-0.25..0.25);
                let blobs = match g {
                    0 => vec![obj.part(0.2 + jx, 0.2 + jy, 0.8 + jx, 0.8 + jy)],
                    1 => {
                        let (a, b, c, d) = [
                            (0.05, 0.1, 0.5, 0.9),
                            (0.5, 0.1, 0.95, 0.9),
                            (0.1, 0.05, 0.9, 0.5),
                            (0.1, 0.5, 0.9, 0.95),
                        ][half];
                        vec![obj.part(a, b, c, d)]
                    }
                    2 => {
                        let mut v = vec![obj.part(0.3, 0.3, 0.7, 0.7)];
                        v.extend(dis_a.map(|d| d.part(0.1, 0.1, 0.9, 0.9)));
                        v
                    }
                    3 => dis_a.map(|d| d.part(0.1, 0.1, 0.9, 0.9)).into_iter().collect(),
                    _ => dis_b.map(|d| d.part(0.1, 0.1, 0.9, 0.9)).into_iter().collect(),
                };
                (amp, blobs)
            }
        };
        for fy in 0..hf {
            for fx in 0..wf {
                let (x0, y0) = (fx as f64 * s, fy as f64 * s);
                let cover = blobs
                    .iter()
                    .map(|b| b.overlap(x0, y0, x0 + s, y0 + s) / (s * s))
                    .fold(0.0, f64::max);
                let noise = rng.random_range(0.0..0.05);
                data.push((amp * cover + noise) as f32);
            }
        }
    }
    Tensor::new(vec![m, hf, wf], data).unwrap()
}

/// Writes PNG images, `.ccft` tensors and `manifest.json` under `dir`.
/// Paths in the manifest are relative to `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, class_name: &str, images: &[SynthImage]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(images.len());
    for img in images {
        let image_name = format!("{}.png", img.id);
        let features_name = format!("{}_features.ccft", img.id);
        let boundary_name = format!("{}_boundary.ccft", img.id);
        img.rgb
            .save(dir.join(&image_name))
            .map_err(|e| Error::ImageDecode {
                path: dir.join(&image_name),
                message: e.to_string(),
            })?;
        save_tensor(dir.join(&features_name), &img.features)?;
        save_tensor(dir.join(&boundary_name), &img.boundary)?;
        entries.push(ImageEntry {
            id: img.id.clone(),
            image_path: image_name.into(),
            width: img.rgb.width(),
            height: img.rgb.height(),
            features_path: features_name.into(),
            boundary_path: boundary_name.into(),
            gt_boxes: vec![img.gt_box],
        });
    }
    let manifest = DatasetManifest {
        class_name: class_name.to_string(),
        images: entries,
    };
    let path = dir.join("manifest.json");
    save_manifest(&path, &manifest)?;
    Ok(path)
}
