//! SLIC oversegmentation and per-region statistics.

use std::collections::{BTreeSet, VecDeque};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub target_count: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_count: 300,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub x: f64,
    pub y: f64,
    /// Mean CIELAB color; absent when the labeling was not built from an image.
    pub lab: Option<[f64; 3]>,
    pub size: usize,
}

/// Partition of an image into regions with contiguous ids `0..n_sp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabeling {
    labels: Grid<u32>,
    n_sp: usize,
    centroids: Vec<Centroid>,
}

impl SuperpixelLabeling {
    /// Wraps an existing label map. Ids must be contiguous from zero; region
    /// connectivity is not checked.
    pub fn from_labels(labels: Grid<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label map"));
        }
        let n_sp = *labels.as_slice().iter().max().unwrap() as usize + 1;
        let mut present = vec![false; n_sp];
        for &l in labels.as_slice() {
            present[l as usize] = true;
        }
        if let Some(gap) = present.iter().position(|&p| !p) {
            return Err(Error::InvalidParameter(format!("label id {gap} is unused")));
        }
        let centroids = centroids(&labels, n_sp, None);
        Ok(Self {
            labels,
            n_sp,
            centroids,
        })
    }

    pub fn labels(&self) -> &Grid<u32> {
        &self.labels
    }

    pub fn n_sp(&self) -> usize {
        self.n_sp
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn shape(&self) -> (usize, usize) {
        self.labels.shape()
    }

    #[inline]
    pub fn label(&self, y: usize, x: usize) -> usize {
        *self.labels.get(y, x) as usize
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        self.centroids.iter().map(|c| c.size).collect()
    }
}

fn centroids(labels: &Grid<u32>, n_sp: usize, lab: Option<&[[f64; 3]]>) -> Vec<Centroid> {
    let mut acc = vec![[0.0f64; 5]; n_sp];
    let mut size = vec![0usize; n_sp];
    let w = labels.width();
    for (p, &l) in labels.as_slice().iter().enumerate() {
        let a = &mut acc[l as usize];
        a[0] += (p % w) as f64 + 0.5;
        a[1] += (p / w) as f64 + 0.5;
        if let Some(lab) = lab {
            a[2] += lab[p][0];
            a[3] += lab[p][1];
            a[4] += lab[p][2];
        }
        size[l as usize] += 1;
    }
    acc.iter()
        .zip(&size)
        .map(|(a, &s)| {
            let n = s.max(1) as f64;
            Centroid {
                x: a[0] / n,
                y: a[1] / n,
                lab: lab.map(|_| [a[2] / n, a[3] / n, a[4] / n]),
                size: s,
            }
        })
        .collect()
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB (D65) to CIELAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn lab_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// SLIC superpixels in CIELAB space.
///
/// Distance is `sqrt(d_lab^2 + (compactness * d_xy / S)^2)` with grid step
/// `S = sqrt(pixels / target_count)`. After the iterations, fragments smaller
/// than a quarter of the nominal cell area are merged into their largest
/// neighbor, so every region is 4-connected. The result is deterministic.
pub fn segment(image: &RgbImage, params: &SlicParams) -> Result<SuperpixelLabeling> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;
    if n == 0 {
        return Err(Error::Empty("image"));
    }
    if params.target_count == 0 {
        return Err(Error::InvalidParameter("target superpixel count must be >= 1".into()));
    }
    if !params.compactness.is_finite() || params.compactness <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "compactness must be > 0, got {}",
            params.compactness
        )));
    }
    if n < params.target_count {
        return Err(Error::ImageTooSmall {
            pixels: n,
            target: params.target_count,
        });
    }

    let lab: Vec<[f64; 3]> = image.pixels().map(|p| rgb_to_lab(p.0)).collect();
    let step = (n as f64 / params.target_count as f64).sqrt();
    let mut centers = seed_centers(&lab, w, h, step);

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    let spatial = (params.compactness / step).powi(2);
    let reach = step.ceil() as isize + 1;
    for _ in 0..params.iterations {
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.floor() as isize, c.y.floor() as isize);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach + 1).max(0) as usize).min(h);
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach + 1).max(0) as usize).min(w);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = y * w + x;
                    let dx = x as f64 + 0.5 - c.x;
                    let dy = y as f64 + 0.5 - c.y;
                    let d = lab_dist2(&lab[p], &c.lab) + spatial * (dx * dx + dy * dy);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let a = &mut acc[l as usize];
            a[0] += lab[p][0];
            a[1] += lab[p][1];
            a[2] += lab[p][2];
            a[3] += (p % w) as f64 + 0.5;
            a[4] += (p / w) as f64 + 0.5;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    x: a[3] / a[5],
                    y: a[4] / a[5],
                };
            }
        }
    }
    if params.iterations == 0 {
        // nearest-center labeling so the connectivity pass has something to work with
        for (p, l) in labels.iter_mut().enumerate() {
            let (x, y) = ((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
            *l = nearest_center(&centers, x, y) as u32;
        }
    }

    let min_size = (n / (centers.len() * 4)).max(1);
    let labels = enforce_connectivity(&labels, w, h, min_size);
    let labels = Grid::from_vec(h, w, labels)?;
    let n_sp = *labels.as_slice().iter().max().unwrap() as usize + 1;
    let centroids = centroids(&labels, n_sp, Some(&lab));
    Ok(SuperpixelLabeling {
        labels,
        n_sp,
        centroids,
    })
}

fn nearest_center(centers: &[Center], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (c.x - x).powi(2) + (c.y - y).powi(2);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn seed_centers(lab: &[[f64; 3]], w: usize, h: usize, step: f64) -> Vec<Center> {
    let nx = ((w as f64 / step).round() as usize).max(1);
    let ny = ((h as f64 / step).round() as usize).max(1);
    let at = |x: usize, y: usize| &lab[y * w + x];
    let gradient = |x: usize, y: usize| {
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        lab_dist2(at(xr, y), at(xl, y)) + lab_dist2(at(x, yd), at(x, yu))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let fx = (i as f64 + 0.5) * w as f64 / nx as f64;
            let fy = (j as f64 + 0.5) * h as f64 / ny as f64;
            let (x0, y0) = ((fx as usize).min(w - 1), (fy as usize).min(h - 1));
            // move off edges: lowest gradient in the 3x3 neighborhood, keeping the seed on ties
            let (mut bx, mut by, mut bg) = (x0, y0, gradient(x0, y0));
            for y in y0.saturating_sub(1)..=(y0 + 1).min(h - 1) {
                for x in x0.saturating_sub(1)..=(x0 + 1).min(w - 1) {
                    let g = gradient(x, y);
                    if g < bg {
                        (bx, by, bg) = (x, y, g);
                    }
                }
            }
            let (cx, cy) = if (bx, by) == (x0, y0) {
                (fx, fy)
            } else {
                (bx as f64 + 0.5, by as f64 + 0.5)
            };
            centers.push(Center {
                lab: *at(bx, by),
                x: cx,
                y: cy,
            });
        }
    }
    centers
}

/// Splits labels into 4-connected components, merges every component smaller
/// than `min_size` into its largest neighbor and relabels in raster order.
fn enforce_connectivity(raw: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = raw[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && raw[q] == label {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(size);
    }

    let count = sizes.len();
    let mut adjacency = vec![BTreeSet::new(); count];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            if x + 1 < w {
                let b = comp[y * w + x + 1];
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x];
                if a != b {
                    adjacency[a].insert(b);
                    adjacency[b].insert(a);
                }
            }
        }
    }

    let mut parent: Vec<usize> = (0..count).collect();
    let mut small: BTreeSet<(usize, usize)> = (0..count)
        .filter(|&c| sizes[c] < min_size)
        .map(|c| (sizes[c], c))
        .collect();
    while let Some((size, c)) = small.pop_first() {
        let Some(&target) = adjacency[c]
            .iter()
            .max_by(|&&a, &&b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        else {
            continue;
        };
        parent[c] = target;
        let neighbors = std::mem::take(&mut adjacency[c]);
        for &nb in &neighbors {
            adjacency[nb].remove(&c);
            if nb != target {
                adjacency[nb].insert(target);
                adjacency[target].insert(nb);
            }
        }
        let was_small = sizes[target] < min_size;
        if was_small {
            small.remove(&(sizes[target], target));
        }
        sizes[target] += size;
        if sizes[target] < min_size {
            small.insert((sizes[target], target));
        }
    }

    let root = |mut c: usize| {
        while parent[c] != c {
            c = parent[c];
        }
        c
    };
    let mut relabel = vec![u32::MAX; count];
    let mut next = 0u32;
    comp.iter()
        .map(|&c| {
            let r = root(c);
            if relabel[r] == u32::MAX {
                relabel[r] = next;
                next += 1;
            }
            relabel[r]
        })
        .collect()
}

/// Mean of `map` over each region.
pub fn region_mean<T: Scalar>(labeling: &SuperpixelLabeling, map: &Grid<T>) -> Result<Vec<T>> {
    if labeling.shape() != map.shape() {
        return Err(Error::ShapeMismatch {
            expected: labeling.shape(),
            found: map.shape(),
        });
    }
    let mut sums = vec![T::zero(); labeling.n_sp()];
    let mut counts = vec![0usize; labeling.n_sp()];
    for (&l, &v) in labeling.labels().as_slice().iter().zip(map.as_slice()) {
        sums[l as usize] = sums[l as usize] + v;
        counts[l as usize] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c == 0 { T::zero() } else { s / T::of_usize(c) })
        .collect())
}

/// Bilinear resize with half-pixel centers (`align_corners = false`).
pub fn upsample_bilinear<T: Scalar>(grid: &Grid<T>, out_h: usize, out_w: usize) -> Result<Grid<T>> {
    if grid.is_empty() {
        return Err(Error::Empty("grid to upsample"));
    }
    let (in_h, in_w) = grid.shape();
    let taps = |out: usize, inn: usize| -> Vec<(usize, usize, T)> {
        let scale = inn as f64 / out as f64;
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inn - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inn - 1);
                (lo, hi, T::from(src - lo as f64).unwrap())
            })
            .collect()
    };
    let ys = taps(out_h, in_h);
    let xs = taps(out_w, in_w);
    // a + (b - a) * t keeps constant inputs exact
    let lerp = |a: T, b: T, t: T| a + (b - a) * t;
    Ok(Grid::from_fn(out_h, out_w, |y, x| {
        let (y0, y1, ty) = ys[y];
        let (x0, x1, tx) = xs[x];
        let top = lerp(*grid.get(y0, x0), *grid.get(y0, x1), tx);
        let bottom = lerp(*grid.get(y1, x0), *grid.get(y1, x1), tx);
        lerp(top, bottom, ty)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn is_four_connected(l: &SuperpixelLabeling) -> bool {
        let (h, w) = l.shape();
        let mut seen = vec![false; l.n_sp()];
        let mut visited = vec![false; h * w];
        for start in 0..h * w {
            if visited[start] {
                continue;
            }
            let lab = l.labels().as_slice()[start];
            if seen[lab as usize] {
                return false;
            }
            seen[lab as usize] = true;
            let mut stack = vec![start];
            visited[start] = true;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                let mut nb = vec![];
                if x > 0 {
                    nb.push(p - 1);
                }
                if x + 1 < w {
                    nb.push(p + 1);
                }
                if y > 0 {
                    nb.push(p - w);
                }
                if y + 1 < h {
                    nb.push(p + w);
                }
                for q in nb {
                    if !visited[q] && l.labels().as_slice()[q] == lab {
                        visited[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        true
    }

    fn params(target: usize) -> SlicParams {
        SlicParams {
            target_count: target,
            ..SlicParams::default()
        }
    }

    #[test]
    fn uniform_image_gives_equal_cells() {
        let img = RgbImage::from_pixel(60, 60, Rgb([120, 80, 200]));
        let l = segment(&img, &params(9)).unwrap();
        assert_eq!(l.n_sp(), 9);
        let sizes: Vec<f64> = l.region_sizes().iter().map(|&s| s as f64).collect();
        let mean = sizes.iter().sum::<f64>() / 9.0;
        let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 9.0;
        assert!((mean - 400.0).abs() < 1e-9);
        assert!(var.sqrt() / mean < 0.2);
    }

    #[test]
    fn single_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = RgbImage::from_fn(17, 9, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
        let l = segment(&img, &params(1)).unwrap();
        assert_eq!(l.n_sp(), 1);
        assert!(l.labels().as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn too_small() {
        let img = RgbImage::new(2, 2);
        assert!(matches!(
            segment(&img, &params(8)),
            Err(Error::ImageTooSmall { pixels: 4, target: 8 })
        ));
        assert!(matches!(
            segment(
                &img,
                &SlicParams {
                    compactness: 0.0,
                    ..params(1)
                }
            ),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn noisy_image_partition_is_valid_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = RgbImage::from_fn(96, 64, |x, y| {
            let base = if (x / 24 + y / 16) % 2 == 0 { 40u8 } else { 200 };
            let n: u8 = rng.random_range(0..40);
            Rgb([base.saturating_add(n), 100, 255 - base])
        });
        let p = params(60);
        let a = segment(&img, &p).unwrap();
        let b = segment(&img, &p).unwrap();
        assert_eq!(a, b);
        assert!(is_four_connected(&a));
        assert!(a.n_sp() >= 30 && a.n_sp() <= 90, "n_sp = {}", a.n_sp());
        assert_eq!(a.region_sizes().iter().sum::<usize>(), 96 * 64);
        assert!(a.region_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn count_tracks_target_on_textured_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (w, h, target) in [(128u32, 128u32, 300usize), (200, 120, 150), (50, 300, 40)] {
            let img = RgbImage::from_fn(w, h, |_, _| {
                Rgb([rng.random(), rng.random(), rng.random()])
            });
            let l = segment(&img, &params(target)).unwrap();
            let ratio = l.n_sp() as f64 / target as f64;
            assert!((0.5..=1.5).contains(&ratio), "{w}x{h} target {target}: {}", l.n_sp());
            assert!(is_four_connected(&l));
        }
    }

    #[test]
    fn slic_follows_color_edges() {
        // left half red, right half blue; no region straddles the seam
        let img = RgbImage::from_fn(64, 32, |x, _| {
            if x < 32 {
                Rgb([220, 20, 20])
            } else {
                Rgb([20, 20, 220])
            }
        });
        let l = segment(&img, &params(20)).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                for x2 in 32..64 {
                    assert_ne!(l.label(y, x), l.label(y, x2));
                }
            }
        }
    }

    #[test]
    fn lab_reference_values() {
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        assert_eq!(rgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
        let red = rgb_to_lab([255, 0, 0]);
        assert!((red[0] - 53.24).abs() < 0.05 && (red[1] - 80.09).abs() < 0.05);
    }

    #[test]
    fn region_mean_examples() {
        let labels = Grid::from_vec(1, 3, vec![0u32, 0, 1]).unwrap();
        let l = SuperpixelLabeling::from_labels(labels).unwrap();
        let m = Grid::from_vec(1, 3, vec![1.0f64, 3.0, 5.0]).unwrap();
        assert_eq!(region_mean(&l, &m).unwrap(), vec![2.0, 5.0]);
        let c = Grid::filled(1, 3, 0.7f64);
        assert_eq!(region_mean(&l, &c).unwrap(), vec![0.7, 0.7]);
        let bad = Grid::filled(3, 1, 0.0f64);
        assert!(matches!(
            region_mean(&l, &bad),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(SuperpixelLabeling::from_labels(Grid::from_vec(1, 2, vec![0u32, 2]).unwrap())
            .is_err());
    }

    #[test]
    fn region_mean_matches_accumulation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (h, w, k) = (7, 9, 5u32);
            let mut raw: Vec<u32> = (0..h * w).map(|_| rng.random_range(0..k)).collect();
            raw[..k as usize].copy_from_slice(&(0..k).collect::<Vec<_>>());
            let l = SuperpixelLabeling::from_labels(Grid::from_vec(h, w, raw.clone()).unwrap())
                .unwrap();
            let vals: Vec<f64> = (0..h * w).map(|_| rng.random_range(-5.0..5.0)).collect();
            let got = region_mean(&l, &Grid::from_vec(h, w, vals.clone()).unwrap()).unwrap();
            for r in 0..k {
                let (mut s, mut c) = (0.0, 0.0);
                for p in 0..h * w {
                    if raw[p] == r {
                        s += vals[p];
                        c += 1.0;
                    }
                }
                assert!((got[r as usize] - s / c).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn region_mean_commutes_with_relabeling(
            raw in prop::collection::vec(0u32..4, 24),
            vals in prop::collection::vec(-10.0f64..10.0, 24),
            perm_seed in any::<u64>(),
        ) {
            let mut raw = raw;
            raw[..4].copy_from_slice(&[0, 1, 2, 3]);
            let mut perm: Vec<u32> = vec![0, 1, 2, 3];
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..4).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let map = Grid::from_vec(4, 6, vals).unwrap();
            let a = SuperpixelLabeling::from_labels(Grid::from_vec(4, 6, raw.clone()).unwrap()).unwrap();
            let b = SuperpixelLabeling::from_labels(
                Grid::from_vec(4, 6, raw.iter().map(|&r| perm[r as usize]).collect()).unwrap(),
            ).unwrap();
            let ma = region_mean(&a, &map).unwrap();
            let mb = region_mean(&b, &map).unwrap();
            for r in 0..4 {
                prop_assert_eq!(ma[r], mb[perm[r] as usize]);
            }
        }

        #[test]
        fn upsample_preserves_constants(c in -1e3f64..1e3, h in 1usize..6, w in 1usize..6, oh in 1usize..20, ow in 1usize..20) {
            let g = Grid::filled(h, w, c);
            let up = upsample_bilinear(&g, oh, ow).unwrap();
            prop_assert!(up.as_slice().iter().all(|&v| v == c));
        }
    }

    #[test]
    fn upsample_row_is_monotone() {
        let g = Grid::from_vec(1, 2, vec![0.0f64, 1.0]).unwrap();
        let up = upsample_bilinear(&g, 1, 4).unwrap();
        let row = up.as_slice();
        assert!(row.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(row, &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_matches_reference_formula() {
        // independent scalar evaluation of the half-pixel bilinear formula
        fn reference(g: &[[f64; 3]; 3], oh: usize, ow: usize, y: usize, x: usize) -> f64 {
            let sy = ((y as f64 + 0.5) * 3.0 / oh as f64 - 0.5).clamp(0.0, 2.0);
            let sx = ((x as f64 + 0.5) * 3.0 / ow as f64 - 0.5).clamp(0.0, 2.0);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(2), (x0 + 1).min(2));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            g[y0][x0] * (1.0 - fy) * (1.0 - fx)
                + g[y0][x1] * (1.0 - fy) * fx
                + g[y1][x0] * fy * (1.0 - fx)
                + g[y1][x1] * fy * fx
        }
        let ramp = [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]];
        let g = Grid::from_fn(3, 3, |y, x| ramp[y][x]);
        for (oh, ow) in [(7, 11), (3, 3), (12, 5), (1, 1)] {
            let up = upsample_bilinear(&g, oh, ow).unwrap();
            for y in 0..oh {
                for x in 0..ow {
                    assert!((up.get(y, x) - reference(&ramp, oh, ow, y, x)).abs() < 1e-6);
                }
            }
        }
    }
}
