//! Geodesic distance propagation of superpixel energies.
//!
//! `W[i][j] = exp(-d[i][j] / mu) / sum_k exp(-d[i][k] / mu)` and `E' = W E`.
//! The propagated energies are painted back onto pixels, divided by their
//! maximum, thresholded, and boxed.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geodesic_graph::DistanceMatrix;
use crate::grid::Grid;
use crate::superpixel::SuperpixelLabeling;
use crate::tensor_store::BBox;
use crate::Scalar;

/// Dense row-stochastic diffusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix<T> {
    n: usize,
    mu: T,
    values: Vec<T>,
}

impl<T: Scalar> PropagationMatrix<T> {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![T::zero(); n * n];
        for i in 0..n {
            values[i * n + i] = T::one();
        }
        Self {
            n,
            mu: T::zero(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n.max(1))
    }
}

pub fn build_propagation_matrix<T: Scalar>(
    dist: &DistanceMatrix<T>,
    mu: T,
) -> Result<PropagationMatrix<T>> {
    if !mu.is_finite() || mu <= T::zero() {
        return Err(Error::NonPositiveMu(mu.to_f64_lossy()));
    }
    let n = dist.len();
    let unreachable = DistanceMatrix::<T>::unreachable();
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        let start = values.len();
        for &d in dist.row(i) {
            values.push(if d >= unreachable {
                T::zero()
            } else {
                (-d / mu).exp()
            });
        }
        let row = &mut values[start..];
        // the diagonal term is exp(0) = 1, so the sum is at least one
        let total: T = row.iter().copied().sum();
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    Ok(PropagationMatrix { n, mu, values })
}

/// `E' = W E`
pub fn propagate<T: Scalar>(w: &PropagationMatrix<T>, energy: &[T]) -> Result<Vec<T>> {
    if energy.len() != w.len() {
        return Err(Error::LengthMismatch(w.len(), energy.len()));
    }
    Ok(w.rows()
        .take(w.len())
        .map(|row| row.iter().zip(energy).map(|(&a, &b)| a * b).sum())
        .collect())
}

/// Pixel-resolution object likelihood with maximum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap<T> {
    pub grid: Grid<T>,
    /// Set when every superpixel value is zero; the grid is then all zeros.
    pub degenerate: bool,
}

/// Paints each pixel with its superpixel's value and divides by the maximum.
pub fn rasterize_and_normalize<T: Scalar>(
    values: &[T],
    labeling: &SuperpixelLabeling,
) -> Result<LikelihoodMap<T>> {
    if values.len() != labeling.n_sp() {
        return Err(Error::LengthMismatch(labeling.n_sp(), values.len()));
    }
    let peak = values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let degenerate = peak.is_nan() || peak <= T::zero();
    let (h, w) = labeling.shape();
    let grid = Grid::from_fn(h, w, |y, x| {
        if degenerate {
            T::zero()
        } else {
            values[labeling.label(y, x)] / peak
        }
    });
    Ok(LikelihoodMap { grid, degenerate })
}

/// Tight box around a set of pixels.
pub fn tight_box(mask: &Grid<bool>) -> Option<BBox> {
    let (h, w) = mask.shape();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if *mask.get(y, x) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0 != usize::MAX).then(|| {
        BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32).expect("nonempty mask box")
    })
}

/// `mask = map >= threshold` and the tight box over every mask pixel.
pub fn threshold_and_box<T: Scalar>(map: &Grid<T>, threshold: T) -> (Grid<bool>, Option<BBox>) {
    let mask = map.map(|&v| v >= threshold);
    let bbox = tight_box(&mask);
    (mask, bbox)
}

/// Keeps only the largest 4-connected component of `mask` (first in raster
/// order on ties).
pub fn largest_component(mask: &Grid<bool>) -> Grid<bool> {
    let (h, w) = mask.shape();
    let mut comp = vec![usize::MAX; h * w];
    let mut best = (0usize, usize::MAX);
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.as_slice()[start] || comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let neighbors = [
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
            ];
            for q in neighbors.into_iter().flatten() {
                if mask.as_slice()[q] && comp[q] == usize::MAX {
                    comp[q] = next;
                    queue.push_back(q);
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
        next += 1;
    }
    Grid::from_vec(h, w, comp.iter().map(|&c| c != usize::MAX && c == best.1).collect())
        .expect("same shape as the mask")
}
