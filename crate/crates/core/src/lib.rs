//! Object co-localization from a set of same-class images.
//!
//! The engine works in two stages. First, convolution kernels whose maximum
//! responses are consistently high across the image set are found by k-means
//! clustering of their activation vectors ([`ccf`]). Their combined feature
//! maps give a rough object location per image. Second, that rough map is
//! averaged over superpixels ([`superpixel`]) and diffused across a
//! boundary-weighted superpixel graph using geodesic distances
//! ([`geodesic_graph`], [`propagation`]), yielding an object-likelihood map,
//! a thresholded region and a bounding box. [`eval`] scores boxes with CorLoc.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar type for the common cases.

pub mod ccf;
pub mod error;
pub mod eval;
pub mod geodesic_graph;
pub mod grid;
pub mod pipeline;
pub mod propagation;
pub mod superpixel;
pub mod synth;
pub mod tensor_store;

use std::fmt::{Debug, Display};
use std::iter::Sum;

pub use error::{Error, Result};
pub use pipeline::{localize_image, localize_inputs, ImageInputs, LocalizeParams};
pub use tensor_store::{BBox, DatasetManifest, ImageEntry, Tensor};

/// Floating point scalar the numerical kernels are generic over.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from the on-disk `f32` payload.
    fn of_f32(v: f32) -> Self;

    fn of_usize(v: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(v).expect("usize fits in a float")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn of_f32(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    fn of_f32(v: f32) -> Self {
        v as f64
    }
}

pub type Grid32 = grid::Grid<f32>;
pub type Grid64 = grid::Grid<f64>;

pub type ActivationMatrix32 = ccf::ActivationMatrix<f32>;
pub type ActivationMatrix64 = ccf::ActivationMatrix<f64>;
pub type KernelClustering64 = ccf::KernelClustering<f64>;
pub type ActivationMap64 = ccf::ActivationMap<f64>;

pub type SuperpixelGraph32 = geodesic_graph::SuperpixelGraph<f32>;
pub type SuperpixelGraph64 = geodesic_graph::SuperpixelGraph<f64>;
pub type DistanceMatrix32 = geodesic_graph::DistanceMatrix<f32>;
pub type DistanceMatrix64 = geodesic_graph::DistanceMatrix<f64>;

pub type PropagationMatrix32 = propagation::PropagationMatrix<f32>;
pub type PropagationMatrix64 = propagation::PropagationMatrix<f64>;
pub type LikelihoodMap64 = propagation::LikelihoodMap<f64>;
pub type LocalizationResult64 = pipeline::LocalizationResult<f64>;
