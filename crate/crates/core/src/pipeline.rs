//! End-to-end composition: feature selection over a manifest and per-image
//! localization.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use rayon::prelude::*;

use crate::ccf::{
    build_activation_matrix, cluster_kernels, combined_activation_map, select_ranked_clusters,
    ActivationMap, CcfRecord, CcfSet, KernelClustering,
};
use crate::error::{Error, Result};
use crate::eval::ImageResult;
use crate::geodesic_graph::{all_pairs_geodesic, build_graph, DistanceMatrix};
use crate::grid::Grid;
use crate::propagation::{
    build_propagation_matrix, largest_component, propagate, rasterize_and_normalize,
    threshold_and_box, tight_box, LikelihoodMap,
};
use crate::superpixel::{region_mean, segment, upsample_bilinear, SlicParams, SuperpixelLabeling};
use crate::tensor_store::{load_tensor, save_tensor, BBox, DatasetManifest, ImageEntry, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectParams {
    pub k_clusters: usize,
    pub rank: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            k_clusters: 5,
            rank: 1,
            top_k: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub clustering: KernelClustering<T>,
    pub ccf: CcfSet,
    pub record: CcfRecord,
}

/// Clusters kernels over the manifest's feature stacks and picks the CCF set.
pub fn select_from_stacks<T: Scalar>(
    class_name: &str,
    stacks: &[Tensor],
    params: &SelectParams,
) -> Result<Selection<T>> {
    let a = build_activation_matrix::<T>(stacks)?;
    let clustering = cluster_kernels(&a, params.k_clusters, params.seed)?;
    let ccf = select_ranked_clusters(&clustering, params.rank, params.top_k)?;
    let record = CcfRecord::new(class_name, &clustering, &ccf);
    Ok(Selection {
        clustering,
        ccf,
        record,
    })
}

pub fn select_from_manifest<T: Scalar>(
    manifest: &DatasetManifest,
    params: &SelectParams,
) -> Result<Selection<T>> {
    let stacks = manifest
        .images
        .iter()
        .map(|e| load_tensor(&e.features_path))
        .collect::<Result<Vec<_>>>()?;
    select_from_stacks(&manifest.class_name, &stacks, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeParams {
    pub mu: f64,
    pub threshold: f64,
    pub slic: SlicParams,
    pub propagation_enabled: bool,
    pub largest_component: bool,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            threshold: 0.25,
            slic: SlicParams::default(),
            propagation_enabled: true,
            largest_component: false,
        }
    }
}

impl LocalizeParams {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::NonPositiveMu(self.mu));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.slic.target_count == 0 {
            return Err(Error::InvalidParameter("superpixel count must be >= 1".into()));
        }
        if !self.slic.compactness.is_finite() || self.slic.compactness <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "compactness must be > 0, got {}",
                self.slic.compactness
            )));
        }
        Ok(())
    }
}

/// Decoded per-image inputs.
#[derive(Debug, Clone)]
pub struct ImageInputs {
    pub id: String,
    pub rgb: RgbImage,
    /// `[m, h_f, w_f]`
    pub features: Tensor,
    /// `[height, width]`, values in `[0, 1]`
    pub boundary: Tensor,
}

impl ImageInputs {
    pub fn load(entry: &ImageEntry) -> Result<Self> {
        let rgb = image::open(&entry.image_path)
            .map_err(|e| Error::ImageDecode {
                path: entry.image_path.clone(),
                message: e.to_string(),
            })?
            .to_rgb8();
        if (rgb.width(), rgb.height()) != (entry.width, entry.height) {
            return Err(Error::InvalidEntry {
                id: entry.id.clone(),
                what: format!(
                    "decoded image is {}x{}, manifest says {}x{}",
                    rgb.width(),
                    rgb.height(),
                    entry.width,
                    entry.height
                ),
            });
        }
        Ok(Self {
            id: entry.id.clone(),
            rgb,
            features: load_tensor(&entry.features_path)?,
            boundary: load_tensor(&entry.boundary_path)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationResult<T> {
    pub image_id: String,
    pub activation: ActivationMap<T>,
    pub labeling: SuperpixelLabeling,
    /// Per-superpixel mean activation.
    pub energy: Vec<T>,
    /// Energy after propagation; equal to `energy` when propagation is off.
    pub propagated: Vec<T>,
    pub distances: Option<DistanceMatrix<T>>,
    pub likelihood: LikelihoodMap<T>,
    pub mask: Grid<bool>,
    pub pred_box: Option<BBox>,
    /// The activation map or the likelihood map had no mass.
    pub degenerate: bool,
}

impl<T> LocalizationResult<T> {
    pub fn record(&self) -> ImageResult {
        ImageResult {
            id: self.image_id.clone(),
            pred_box: self.pred_box,
            degenerate: self.degenerate,
            error: None,
        }
    }
}

pub fn localize_image<T: Scalar>(
    entry: &ImageEntry,
    ccf: &CcfSet,
    params: &LocalizeParams,
) -> Result<LocalizationResult<T>> {
    localize_inputs(&ImageInputs::load(entry)?, ccf, params)
}

pub fn localize_inputs<T: Scalar>(
    inputs: &ImageInputs,
    ccf: &CcfSet,
    params: &LocalizeParams,
) -> Result<LocalizationResult<T>> {
    params.validate()?;
    let (w, h) = (inputs.rgb.width() as usize, inputs.rgb.height() as usize);
    let boundary = Grid::<T>::from_tensor_plane(&inputs.boundary, None)?;
    if boundary.shape() != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: (h, w),
            found: boundary.shape(),
        });
    }

    let activation = combined_activation_map::<T>(&inputs.id, &inputs.features, ccf)?;
    let upsampled = upsample_bilinear(&activation.grid, h, w)?;
    let labeling = segment(&inputs.rgb, &params.slic)?;
    let energy = region_mean(&labeling, &upsampled)?;

    let (propagated, distances) = if params.propagation_enabled {
        let graph = build_graph(&labeling, &boundary)?;
        let dist = all_pairs_geodesic(&graph);
        let wmat = build_propagation_matrix(&dist, T::from(params.mu).unwrap())?;
        (propagate(&wmat, &energy)?, Some(dist))
    } else {
        (energy.clone(), None)
    };

    let likelihood = rasterize_and_normalize(&propagated, &labeling)?;
    let (mut mask, mut pred_box) =
        threshold_and_box(&likelihood.grid, T::from(params.threshold).unwrap());
    if params.largest_component {
        mask = largest_component(&mask);
        pred_box = tight_box(&mask);
    }
    let degenerate = activation.degenerate || likelihood.degenerate;
    Ok(LocalizationResult {
        image_id: inputs.id.clone(),
        activation,
        labeling,
        energy,
        propagated,
        distances,
        likelihood,
        mask,
        pred_box,
        degenerate,
    })
}

/// Localizes every image of the manifest in parallel, in manifest order.
///
/// Per-image failures become records carrying the error text. `sink` sees
/// each successful result (for dumping maps) and its error is recorded the
/// same way.
pub fn localize_dataset<T, F>(
    manifest: &DatasetManifest,
    ccf: &CcfSet,
    params: &LocalizeParams,
    sink: F,
) -> Vec<ImageResult>
where
    T: Scalar,
    F: Fn(&ImageEntry, &LocalizationResult<T>) -> Result<()> + Sync,
{
    manifest
        .images
        .par_iter()
        .map(|entry| {
            let outcome = localize_image::<T>(entry, ccf, params)
                .and_then(|r| sink(entry, &r).map(|_| r.record()));
            outcome.unwrap_or_else(|e| ImageResult {
                id: entry.id.clone(),
                pred_box: None,
                degenerate: true,
                error: Some(e.to_string()),
            })
        })
        .collect()
}

/// Writes an 8-bit binary PGM with pixel values `round(255 * v)`, clamped to
/// `[0, 255]`.
pub fn save_pgm<T: Scalar>(path: impl AsRef<Path>, map: &Grid<T>) -> Result<()> {
    let path = path.as_ref();
    let pixels: Vec<u8> = map
        .as_slice()
        .iter()
        .map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(&pixels, map.width() as u32, map.height() as u32, ExtendedColorType::L8)
        .map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Dumps the intermediate maps of one image into `dir`:
/// `<id>_likelihood.ccft`, `<id>_likelihood.pgm`, `<id>_labels.ccft` and,
/// when propagation ran, `<id>_dist.ccft` (unreachable pairs as `f32::MAX`).
pub fn dump_maps<T: Scalar>(dir: impl AsRef<Path>, result: &LocalizationResult<T>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &result.image_id;
    save_tensor(dir.join(format!("{id}_likelihood.ccft")), &result.likelihood.grid.to_tensor())?;
    save_pgm(dir.join(format!("{id}_likelihood.pgm")), &result.likelihood.grid)?;
    let labels = result.labeling.labels();
    let label_tensor = Tensor::new(
        vec![labels.height(), labels.width()],
        labels.as_slice().iter().map(|&l| l as f32).collect(),
    )?;
    save_tensor(dir.join(format!("{id}_labels.ccft")), &label_tensor)?;
    if let Some(dist) = &result.distances {
        let n = dist.len();
        let data = dist
            .as_slice()
            .iter()
            .map(|&d| {
                if d == DistanceMatrix::<T>::unreachable() {
                    f32::MAX
                } else {
                    d.to_f64_lossy() as f32
                }
            })
            .collect();
        save_tensor(dir.join(format!("{id}_dist.ccft")), &Tensor::new(vec![n, n], data)?)?;
    }
    Ok(())
}
