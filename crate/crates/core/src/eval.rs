//! CorLoc evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{BBox, DatasetManifest};

/// Intersection over union of two half-open boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = a.xmax.min(b.xmax).saturating_sub(a.xmin.max(b.xmin)) as u64;
    let iy = a.ymax.min(b.ymax).saturating_sub(a.ymin.max(b.ymin)) as u64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// One line of `results.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageResult {
    pub id: String,
    pub pred_box: Option<BBox>,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn save_results(path: impl AsRef<Path>, results: &[ImageResult]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(results)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<ImageResult>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImage {
    pub id: String,
    pub best_iou: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorLocReport {
    pub class_name: String,
    pub n_images: usize,
    pub n_correct: usize,
    /// Percentage in `[0, 100]`.
    pub corloc: f64,
    pub iou_threshold: f64,
    pub per_image: Vec<PerImage>,
}

impl CorLocReport {
    pub fn mean_best_iou(&self) -> f64 {
        if self.per_image.is_empty() {
            return 0.0;
        }
        self.per_image.iter().map(|p| p.best_iou).sum::<f64>() / self.per_image.len() as f64
    }

    pub const CSV_HEADER: &'static str = "class,n,corloc";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.2}", self.class_name, self.n_images, self.corloc)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", Self::CSV_HEADER).unwrap();
        writeln!(s, "{}", self.csv_row()).unwrap();
        s
    }
}

/// Scores predictions against the manifest's ground truth. An image is
/// correct when its best IoU over all ground-truth boxes is strictly above
/// `iou_threshold`; images without a box score zero.
pub fn corloc(
    results: &[ImageResult],
    manifest: &DatasetManifest,
    iou_threshold: f64,
) -> Result<CorLocReport> {
    let mut by_id: HashMap<&str, &ImageResult> = HashMap::new();
    for r in results {
        if manifest.get(&r.id).is_none() {
            return Err(Error::UnknownImageId(r.id.clone()));
        }
        if by_id.insert(&r.id, r).is_some() {
            return Err(Error::DuplicateResult(r.id.clone()));
        }
    }
    let mut per_image = Vec::with_capacity(manifest.len());
    for entry in &manifest.images {
        let r = by_id
            .get(entry.id.as_str())
            .ok_or_else(|| Error::MissingResult(entry.id.clone()))?;
        let best_iou = match &r.pred_box {
            Some(p) => entry
                .gt_boxes
                .iter()
                .map(|g| iou(p, g))
                .fold(0.0, f64::max),
            None => 0.0,
        };
        per_image.push(PerImage {
            id: entry.id.clone(),
            best_iou,
            correct: best_iou > iou_threshold,
        });
    }
    let n_images = per_image.len();
    let n_correct = per_image.iter().filter(|p| p.correct).count();
    let corloc = if n_images == 0 {
        0.0
    } else {
        100.0 * n_correct as f64 / n_images as f64
    };
    Ok(CorLocReport {
        class_name: manifest.class_name.clone(),
        n_images,
        n_correct,
        corloc,
        iou_threshold,
        per_image,
    })
}
