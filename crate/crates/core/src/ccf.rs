//! Class-level feature selection by kernel clustering.
//!
//! Each kernel is described by its vector of per-image maximum responses.
//! Kernels are clustered with k-means on those vectors and the cluster with
//! the highest mean activation is taken as the selected set. The
//! selected kernels' maps are then summed into a per-image probability map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor_store::Tensor;
use crate::Scalar;

/// `m x n` matrix of per-kernel spatial maxima; row `i` is kernel `i`'s
/// activation vector over the `n` images.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix<T> {
    m: usize,
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> ActivationMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Empty("activation matrix has no kernels"));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::Empty("activation matrix has no images"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch(n, bad.len()));
        }
        Ok(Self {
            m,
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn kernels(&self) -> usize {
        self.m
    }

    pub fn images(&self) -> usize {
        self.n
    }

    pub fn get(&self, kernel: usize, image: usize) -> T {
        self.values[kernel * self.n + image]
    }

    pub fn row(&self, kernel: usize) -> &[T] {
        &self.values[kernel * self.n..(kernel + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            m: self.m,
            n: self.n,
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }
}

/// Builds the activation matrix from one `[m, h, w]` feature stack per image.
pub fn build_activation_matrix<T: Scalar>(stacks: &[Tensor]) -> Result<ActivationMatrix<T>> {
    let first = stacks.first().ok_or(Error::Empty("no feature stacks"))?;
    let m = stack_kernels(first)?;
    let n = stacks.len();
    let mut values = vec![T::zero(); m * n];
    for (j, stack) in stacks.iter().enumerate() {
        let found = stack_kernels(stack)?;
        if found != m {
            return Err(Error::KernelCountMismatch {
                index: j,
                expected: m,
                found,
            });
        }
        let plane = stack.dims()[1] * stack.dims()[2];
        for (i, map) in stack.data().chunks_exact(plane).enumerate() {
            let peak = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            values[i * n + j] = T::of_f32(peak);
        }
    }
    Ok(ActivationMatrix { m, n, values })
}

fn stack_kernels(stack: &Tensor) -> Result<usize> {
    match stack.dims() {
        [m, _, _] => Ok(*m),
        other => Err(Error::InvalidDims(other.to_vec())),
    }
}

/// `L_p` distance between two activation vectors.
pub fn kernel_distance<T: Scalar>(a: &[T], b: &[T], p: T) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if p.is_nan() || p < T::one() {
        return Err(Error::InvalidExponent(p.to_f64_lossy()));
    }
    let total: T = a.iter().zip(b).map(|(&x, &y)| (x - y).abs().powf(p)).sum();
    Ok(total.powf(p.recip()))
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelClustering<T> {
    pub k_clusters: usize,
    /// kernel index -> cluster id
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Grand mean of the members' activation entries, by cluster id.
    pub cluster_scores: Vec<T>,
    /// Cluster ids, best first.
    pub ranking: Vec<usize>,
    pub inertia: T,
    pub seed: u64,
}

impl<T: Scalar> KernelClustering<T> {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_size(&self, cluster: usize) -> usize {
        self.assignment.iter().filter(|&&c| c == cluster).count()
    }

    /// Scores in ranking order.
    pub fn ranked_scores(&self) -> Vec<T> {
        self.ranking.iter().map(|&c| self.cluster_scores[c]).collect()
    }
}

/// Euclidean k-means over the kernel activation vectors with default parameters.
pub fn cluster_kernels<T: Scalar>(
    a: &ActivationMatrix<T>,
    k_clusters: usize,
    seed: u64,
) -> Result<KernelClustering<T>> {
    cluster_kernels_with(a, k_clusters, seed, &KMeansParams::default())
}

pub fn cluster_kernels_with<T: Scalar>(
    a: &ActivationMatrix<T>,
    k_clusters: usize,
    seed: u64,
    params: &KMeansParams,
) -> Result<KernelClustering<T>> {
    if k_clusters == 0 || a.kernels() < k_clusters {
        return Err(Error::TooFewKernels {
            m: a.kernels(),
            k: k_clusters,
        });
    }
    if params.restarts == 0 {
        return Err(Error::InvalidParameter("k-means needs at least one restart".into()));
    }
    // Restarts are independent; the lowest inertia wins, ties go to the lower restart index.
    let runs: Vec<Lloyd<T>> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(a, k_clusters, params.max_iterations, &mut rng)
        })
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.inertia
                .partial_cmp(&b.inertia)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .map(|(_, run)| run)
        .expect("at least one restart");

    let mut sums = vec![T::zero(); k_clusters];
    let mut counts = vec![0usize; k_clusters];
    for (i, &c) in best.assignment.iter().enumerate() {
        sums[c] = sums[c] + a.row(i).iter().copied().sum::<T>();
        counts[c] += 1;
    }
    let n = T::of_usize(a.images());
    let cluster_scores: Vec<T> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                T::zero()
            } else {
                s / (T::of_usize(c) * n)
            }
        })
        .collect();
    let mut ranking: Vec<usize> = (0..k_clusters).collect();
    ranking.sort_by(|&x, &y| {
        (counts[x] == 0)
            .cmp(&(counts[y] == 0))
            .then(
                cluster_scores[y]
                    .partial_cmp(&cluster_scores[x])
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(x.cmp(&y))
    });

    Ok(KernelClustering {
        k_clusters,
        assignment: best.assignment,
        centroids: best.centroids,
        cluster_scores,
        ranking,
        inertia: best.inertia,
        seed,
    })
}

struct Lloyd<T> {
    assignment: Vec<usize>,
    centroids: Vec<Vec<T>>,
    inertia: T,
}

fn kmeans_plus_plus<T: Scalar>(a: &ActivationMatrix<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let m = a.kernels();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(a.row(rng.random_range(0..m)).to_vec());
    let mut nearest: Vec<T> = a
        .rows()
        .map(|r| squared_distance(r, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().map(|d| d.to_f64_lossy()).sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in nearest.iter().enumerate() {
                let d = d.to_f64_lossy();
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            rng.random_range(0..m)
        };
        let c = a.row(pick).to_vec();
        for (d, r) in nearest.iter_mut().zip(a.rows()) {
            *d = d.min(squared_distance(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign<T: Scalar>(a: &ActivationMatrix<T>, centroids: &[Vec<T>], out: &mut [usize]) {
    for (slot, row) in out.iter_mut().zip(a.rows()) {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (c, centroid) in centroids.iter().enumerate() {
            let d = squared_distance(row, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *slot = best;
    }
}

fn update_centroids<T: Scalar>(
    a: &ActivationMatrix<T>,
    assignment: &[usize],
    centroids: &mut [Vec<T>],
) -> Vec<usize> {
    let mut counts = vec![0usize; centroids.len()];
    let mut sums = vec![vec![T::zero(); a.images()]; centroids.len()];
    for (row, &c) in a.rows().zip(assignment) {
        counts[c] += 1;
        for (s, &v) in sums[c].iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    for ((centroid, sum), &count) in centroids.iter_mut().zip(sums).zip(&counts) {
        if count > 0 {
            let cnt = T::of_usize(count);
            *centroid = sum.into_iter().map(|s| s / cnt).collect();
        }
    }
    counts
}

fn lloyd<T: Scalar>(
    a: &ActivationMatrix<T>,
    k: usize,
    max_iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Lloyd<T> {
    let mut centroids = kmeans_plus_plus(a, k, rng);
    let mut assignment = vec![0usize; a.kernels()];
    assign(a, &centroids, &mut assignment);
    let mut next = assignment.clone();
    for _ in 0..max_iterations {
        let mut counts = update_centroids(a, &assignment, &mut centroids);
        reseed_empty(a, &mut assignment, &mut centroids, &mut counts);
        assign(a, &centroids, &mut next);
        if next == assignment {
            break;
        }
        std::mem::swap(&mut next, &mut assignment);
    }
    update_centroids(a, &assignment, &mut centroids);
    let inertia = a
        .rows()
        .zip(&assignment)
        .map(|(r, &c)| squared_distance(r, &centroids[c]))
        .sum();
    Lloyd {
        assignment,
        centroids,
        inertia,
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
/// A cluster stays empty only when every point sits exactly on its centroid.
fn reseed_empty<T: Scalar>(
    a: &ActivationMatrix<T>,
    assignment: &mut [usize],
    centroids: &mut [Vec<T>],
    counts: &mut [usize],
) {
    for c in 0..centroids.len() {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = T::zero();
        for (i, row) in a.rows().enumerate() {
            let owner = assignment[i];
            if counts[owner] < 2 {
                continue;
            }
            let d = squared_distance(row, &centroids[owner]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = c;
            counts[c] = 1;
            centroids[c] = a.row(i).to_vec();
        }
    }
}

/// Selected kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcfSet {
    /// Sorted, nonempty.
    pub kernel_ids: Vec<usize>,
    /// 1-based rank of the (first) cluster taken.
    pub source_cluster_rank: usize,
    /// Number of consecutive ranked clusters merged, starting at `source_cluster_rank`.
    pub top_k: usize,
}

/// Members of the `rank`-th best cluster (1-based).
pub fn select_ccfs<T: Scalar>(clustering: &KernelClustering<T>, rank: usize) -> Result<CcfSet> {
    select_ranked_clusters(clustering, rank, 1)
}

/// Union of the `top_k` best clusters.
pub fn select_top_clusters<T: Scalar>(
    clustering: &KernelClustering<T>,
    top_k: usize,
) -> Result<CcfSet> {
    select_ranked_clusters(clustering, 1, top_k)
}

/// Union of `top_k` consecutive ranked clusters starting at `rank` (1-based).
pub fn select_ranked_clusters<T: Scalar>(
    clustering: &KernelClustering<T>,
    rank: usize,
    top_k: usize,
) -> Result<CcfSet> {
    let k = clustering.k_clusters;
    if rank == 0 || rank > k {
        return Err(Error::RankOutOfRange { rank, k });
    }
    if top_k == 0 || rank + top_k - 1 > k {
        return Err(Error::RankOutOfRange {
            rank: rank + top_k.max(1) - 1,
            k,
        });
    }
    let mut kernel_ids = Vec::new();
    for r in rank..rank + top_k {
        let cluster = clustering.ranking[r - 1];
        let members = clustering.members(cluster);
        if members.is_empty() {
            return Err(Error::EmptyCluster(r));
        }
        kernel_ids.extend(members);
    }
    kernel_ids.sort_unstable();
    Ok(CcfSet {
        kernel_ids,
        source_cluster_rank: rank,
        top_k,
    })
}

/// On-disk form of a selection together with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcfRecord {
    pub class_name: String,
    pub kernel_ids: Vec<usize>,
    pub k_clusters: usize,
    pub rank: usize,
    #[serde(default = "one")]
    pub top_k: usize,
    pub seed: u64,
    /// Cluster scores in ranking order (best first).
    pub cluster_scores: Vec<f64>,
}

fn one() -> usize {
    1
}

impl CcfRecord {
    pub fn new<T: Scalar>(
        class_name: impl Into<String>,
        clustering: &KernelClustering<T>,
        set: &CcfSet,
    ) -> Self {
        Self {
            class_name: class_name.into(),
            kernel_ids: set.kernel_ids.clone(),
            k_clusters: clustering.k_clusters,
            rank: set.source_cluster_rank,
            top_k: set.top_k,
            seed: clustering.seed,
            cluster_scores: clustering
                .ranked_scores()
                .into_iter()
                .map(Scalar::to_f64_lossy)
                .collect(),
        }
    }

    pub fn ccf_set(&self) -> Result<CcfSet> {
        if self.kernel_ids.is_empty() {
            return Err(Error::Empty("ccf record lists no kernels"));
        }
        let mut kernel_ids = self.kernel_ids.clone();
        kernel_ids.sort_unstable();
        kernel_ids.dedup();
        Ok(CcfSet {
            kernel_ids,
            source_cluster_rank: self.rank,
            top_k: self.top_k,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Probability map at feature resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap<T> {
    pub image_id: String,
    pub grid: Grid<T>,
    /// Total of the clamped sum before normalization.
    pub sum: T,
    /// Set when the clamped sum is zero everywhere; the grid is then uniform.
    pub degenerate: bool,
}

/// Sums the selected kernels' maps (negatives clamped to zero) and normalizes to unit mass.
pub fn combined_activation_map<T: Scalar>(
    image_id: &str,
    stack: &Tensor,
    ccf: &CcfSet,
) -> Result<ActivationMap<T>> {
    let m = stack_kernels(stack)?;
    let (h, w) = (stack.dims()[1], stack.dims()[2]);
    if ccf.kernel_ids.is_empty() {
        return Err(Error::Empty("ccf set is empty"));
    }
    if let Some(&id) = ccf.kernel_ids.iter().find(|&&id| id >= m) {
        return Err(Error::KernelOutOfRange { id, m });
    }
    let mut acc = vec![T::zero(); h * w];
    for &k in &ccf.kernel_ids {
        let map = &stack.data()[k * h * w..(k + 1) * h * w];
        for (a, &v) in acc.iter_mut().zip(map) {
            *a = *a + T::of_f32(v.max(0.0));
        }
    }
    let sum: T = acc.iter().copied().sum();
    let degenerate = sum.is_nan() || sum <= T::zero();
    if degenerate {
        let u = T::of_usize(h * w).recip();
        acc.iter_mut().for_each(|v| *v = u);
    } else {
        acc.iter_mut().for_each(|v| *v = *v / sum);
    }
    Ok(ActivationMap {
        image_id: image_id.to_string(),
        grid: Grid::from_vec(h, w, acc)?,
        sum,
        degenerate,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn stack(m: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::new(vec![m, h, w], data).unwrap()
    }

    fn random_stack(rng: &mut impl Rng, m: usize, h: usize, w: usize) -> Tensor {
        let data = (0..m * h * w).map(|_| rng.random_range(-1.0f32..4.0)).collect();
        stack(m, h, w, data)
    }

    /// Planted instance: kernels `0..10` ~ U(5,6), the other 90 ~ U(0,1), 20 images.
    pub(crate) fn planted(seed: u64) -> ActivationMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let rows = (0..100)
            .map(|i| {
                (0..20)
                    .map(|_| {
                        if i < 10 {
                            rng.random_range(5.0..6.0)
                        } else {
                            rng.random_range(0.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        ActivationMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn activation_matrix_single_grid() {
        let a: ActivationMatrix<f64> =
            build_activation_matrix(&[stack(1, 2, 2, vec![0., 3., 1., 2.])]).unwrap();
        assert_eq!((a.kernels(), a.images()), (1, 1));
        assert_eq!(a.get(0, 0), 3.0);
    }

    #[test]
    fn activation_matrix_all_zero() {
        let s = Tensor::zeros(vec![4, 3, 3]).unwrap();
        let a: ActivationMatrix<f64> = build_activation_matrix(&[s.clone(), s]).unwrap();
        assert!(a.rows().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn activation_matrix_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stacks: Vec<Tensor> = (0..50)
            .map(|_| {
                let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
                random_stack(&mut rng, 6, h, w)
            })
            .collect();
        let a: ActivationMatrix<f64> = build_activation_matrix(&stacks).unwrap();
        for (j, s) in stacks.iter().enumerate() {
            let (h, w) = (s.dims()[1], s.dims()[2]);
            for i in 0..6 {
                let mut best = f32::NEG_INFINITY;
                for y in 0..h {
                    for x in 0..w {
                        let v = s.data()[i * h * w + y * w + x];
                        if v > best {
                            best = v;
                        }
                    }
                }
                assert_eq!(a.get(i, j), best as f64);
            }
        }
    }

    #[test]
    fn activation_matrix_kernel_mismatch() {
        let err = build_activation_matrix::<f64>(&[
            Tensor::zeros(vec![3, 2, 2]).unwrap(),
            Tensor::zeros(vec![4, 2, 2]).unwrap(),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            Error::KernelCountMismatch {
                index: 1,
                expected: 3,
                found: 4
            }
        ));
    }

    #[test]
    fn distance_examples() {
        let a = [1.5f64, -2.0, 7.0];
        assert_eq!(kernel_distance(&a, &a, 3.0).unwrap(), 0.0);
        let d = kernel_distance(&[0.0f64, 0.0], &[3.0, 4.0], 2.0).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        let d = kernel_distance(&[1.0f64, 2.0], &[2.0, 4.0], 1.0).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        assert!(matches!(
            kernel_distance(&[1.0f64], &[1.0, 2.0], 2.0),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            kernel_distance(&[1.0f64], &[2.0], 0.5),
            Err(Error::InvalidExponent(_))
        ));
    }

    #[test]
    fn one_cluster_per_kernel_when_k_equals_m() {
        let a = ActivationMatrix::from_rows(vec![
            vec![1.0f64, 2.0],
            vec![5.0, 5.0],
            vec![0.0, 0.5],
        ])
        .unwrap();
        let c = cluster_kernels(&a, 3, 0).unwrap();
        let mut seen = c.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
        for i in 0..3 {
            let mean = a.row(i).iter().sum::<f64>() / 2.0;
            assert_eq!(c.cluster_scores[c.assignment[i]], mean);
        }
        assert_eq!(c.members(c.ranking[0]), vec![1]);
        assert_eq!(c.members(c.ranking[2]), vec![2]);
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn planted_cluster_is_top_for_every_seed() {
        let planted_ids: Vec<usize> = (0..10).collect();
        for seed in 0..10 {
            let a = planted(seed);
            let c = cluster_kernels(&a, 5, seed).unwrap();
            let set = select_ccfs(&c, 1).unwrap();
            assert_eq!(set.kernel_ids, planted_ids, "seed {seed}");
            assert_eq!(set.source_cluster_rank, 1);
        }
    }

    #[test]
    fn last_rank_is_lowest_score() {
        let a = planted(3);
        let c = cluster_kernels(&a, 5, 3).unwrap();
        let low = select_ccfs(&c, 5).unwrap();
        let min_cluster = (0..5)
            .min_by(|&x, &y| c.cluster_scores[x].partial_cmp(&c.cluster_scores[y]).unwrap())
            .unwrap();
        assert_eq!(low.kernel_ids, c.members(min_cluster));
        assert!(matches!(
            select_ccfs(&c, 6),
            Err(Error::RankOutOfRange { rank: 6, k: 5 })
        ));
        assert!(matches!(select_ccfs(&c, 0), Err(Error::RankOutOfRange { .. })));
        let scores = c.ranked_scores();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn top_k_union_and_single_cluster() {
        let a = planted(1);
        let c = cluster_kernels(&a, 5, 1).unwrap();
        let all = select_top_clusters(&c, 5).unwrap();
        assert_eq!(all.kernel_ids, (0..100).collect::<Vec<_>>());
        let two = select_top_clusters(&c, 2).unwrap();
        let mut expect = c.members(c.ranking[0]);
        expect.extend(c.members(c.ranking[1]));
        expect.sort_unstable();
        assert_eq!(two.kernel_ids, expect);

        let c1 = cluster_kernels(&a, 1, 0).unwrap();
        assert_eq!(select_ccfs(&c1, 1).unwrap().kernel_ids.len(), 100);
    }

    #[test]
    fn too_few_kernels() {
        let a = ActivationMatrix::from_rows(vec![vec![1.0f64], vec![2.0]]).unwrap();
        assert!(matches!(
            cluster_kernels(&a, 3, 0),
            Err(Error::TooFewKernels { m: 2, k: 3 })
        ));
        assert!(matches!(
            cluster_kernels(&a, 0, 0),
            Err(Error::TooFewKernels { .. })
        ));
    }

    #[test]
    fn duplicate_rows_share_a_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let base: Vec<Vec<f64>> = (0..15)
                .map(|_| (0..6).map(|_| rng.random_range(0.0..3.0)).collect())
                .collect();
            let mut rows = base.clone();
            rows.extend(base.iter().take(5).cloned());
            let a = ActivationMatrix::from_rows(rows).unwrap();
            let c = cluster_kernels(&a, 4, trial).unwrap();
            for i in 0..5 {
                assert_eq!(c.assignment[i], c.assignment[15 + i]);
            }
        }
    }

    #[test]
    fn fewer_distinct_rows_than_clusters() {
        let a = ActivationMatrix::from_rows(vec![vec![1.0f64, 1.0]; 4]).unwrap();
        let c = cluster_kernels(&a, 3, 0).unwrap();
        assert!(c.assignment.iter().all(|&x| x == c.assignment[0]));
        assert_eq!(select_ccfs(&c, 1).unwrap().kernel_ids, vec![0, 1, 2, 3]);
        assert!(matches!(select_ccfs(&c, 2), Err(Error::EmptyCluster(2))));
    }

    #[test]
    fn clustering_is_deterministic() {
        let a = planted(5);
        let x = cluster_kernels(&a, 5, 42).unwrap();
        let y = cluster_kernels(&a, 5, 42).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn scaling_keeps_the_selection() {
        for seed in 0..5 {
            let a = planted(seed);
            let base = select_ccfs(&cluster_kernels(&a, 5, seed).unwrap(), 1).unwrap();
            for c in [0.25, 3.0, 1000.0] {
                let scaled = select_ccfs(&cluster_kernels(&a.scaled(c), 5, seed).unwrap(), 1)
                    .unwrap();
                assert_eq!(scaled.kernel_ids, base.kernel_ids);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn power_of_two_scaling_keeps_assignments(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 6..20),
            exp in -4i32..5,
            seed in 0u64..100,
        ) {
            let a = ActivationMatrix::from_rows(rows).unwrap();
            let c = 2f64.powi(exp);
            let x = cluster_kernels(&a, 3, seed).unwrap();
            let y = cluster_kernels(&a.scaled(c), 3, seed).unwrap();
            prop_assert_eq!(x.assignment, y.assignment);
            prop_assert_eq!(x.ranking, y.ranking);
        }
    }

    #[test]
    fn combined_map_examples() {
        let single = CcfSet {
            kernel_ids: vec![0],
            source_cluster_rank: 1,
            top_k: 1,
        };
        let m: ActivationMap<f64> =
            combined_activation_map("a", &stack(1, 1, 2, vec![1.0, 3.0]), &single).unwrap();
        assert_eq!(m.grid.as_slice(), &[0.25, 0.75]);
        assert!(!m.degenerate);
        assert_eq!(m.sum, 4.0);

        let pair = CcfSet {
            kernel_ids: vec![0, 1],
            source_cluster_rank: 1,
            top_k: 1,
        };
        let m: ActivationMap<f64> =
            combined_activation_map("a", &stack(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]), &pair)
                .unwrap();
        assert_eq!(m.grid.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn combined_map_degenerate_and_errors() {
        let set = CcfSet {
            kernel_ids: vec![1],
            source_cluster_rank: 1,
            top_k: 1,
        };
        let m: ActivationMap<f64> =
            combined_activation_map("z", &stack(2, 2, 2, vec![-1.0; 8]), &set).unwrap();
        assert!(m.degenerate);
        assert!(m.grid.as_slice().iter().all(|&v| v == 0.25));
        let bad = CcfSet {
            kernel_ids: vec![2],
            source_cluster_rank: 1,
            top_k: 1,
        };
        assert!(matches!(
            combined_activation_map::<f64>("z", &stack(2, 2, 2, vec![0.0; 8]), &bad),
            Err(Error::KernelOutOfRange { id: 2, m: 2 })
        ));
    }

    #[test]
    fn combined_map_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_stack(&mut rng, 5, 4, 6);
            let set = CcfSet {
                kernel_ids: vec![0, 2, 4],
                source_cluster_rank: 1,
                top_k: 1,
            };
            let m: ActivationMap<f64> = combined_activation_map("r", &s, &set).unwrap();
            let mut oracle = [0.0f64; 24];
            for &k in &[0usize, 2, 4] {
                for p in 0..24 {
                    let v = s.data()[k * 24 + p] as f64;
                    if v > 0.0 {
                        oracle[p] += v;
                    }
                }
            }
            let total: f64 = oracle.iter().sum();
            for p in 0..24 {
                assert!((m.grid.as_slice()[p] - oracle[p] / total).abs() < 1e-9);
            }
            let s: f64 = m.grid.as_slice().iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn record_round_trip() {
        let a = planted(0);
        let c = cluster_kernels(&a, 5, 0).unwrap();
        let set = select_ccfs(&c, 1).unwrap();
        let rec = CcfRecord::new("bus", &c, &set);
        let json = serde_json::to_string(&rec).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["class_name", "kernel_ids", "k_clusters", "rank", "seed", "cluster_scores"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: CcfRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.ccf_set().unwrap(), set);
    }
}
