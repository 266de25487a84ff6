//! Boundary-weighted superpixel adjacency graph and all-pairs geodesic distances.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::superpixel::SuperpixelLabeling;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub a: usize,
    pub b: usize,
    pub weight: T,
}

/// Undirected graph over superpixels; edge weights are boundary likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelGraph<T> {
    n_sp: usize,
    edges: Vec<Edge<T>>,
    adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SuperpixelGraph<T> {
    /// Builds a graph from an edge list. Parallel edges keep the lighter weight.
    pub fn from_edges(n_sp: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut unique: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= n_sp || b >= n_sp {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) outside {n_sp} nodes"
                )));
            }
            if !w.is_finite() || w < T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) has weight {w}"
                )));
            }
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            unique
                .entry(key)
                .and_modify(|v| *v = v.min(w))
                .or_insert(w);
        }
        let edges: Vec<Edge<T>> = unique
            .into_iter()
            .map(|((a, b), weight)| Edge { a, b, weight })
            .collect();
        let mut adjacency = vec![Vec::new(); n_sp];
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        Ok(Self {
            n_sp,
            edges,
            adjacency,
        })
    }

    pub fn n_sp(&self) -> usize {
        self.n_sp
    }

    /// Edges sorted by `(a, b)` with `a < b`.
    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, T)] {
        &self.adjacency[node]
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<T> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, w)| w)
    }
}

/// One edge per pair of 4-adjacent regions, weighted by the mean over all
/// straddling pixel pairs `(p, q)` of `max(boundary[p], boundary[q])`.
pub fn build_graph<T: Scalar>(
    labeling: &SuperpixelLabeling,
    boundary: &Grid<T>,
) -> Result<SuperpixelGraph<T>> {
    if labeling.shape() != boundary.shape() {
        return Err(Error::ShapeMismatch {
            expected: labeling.shape(),
            found: boundary.shape(),
        });
    }
    let (h, w) = boundary.shape();
    for y in 0..h {
        for x in 0..w {
            let v = *boundary.get(y, x);
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::BoundaryOutOfRange {
                    x,
                    y,
                    value: v.to_f64_lossy(),
                });
            }
        }
    }
    let mut acc: BTreeMap<(usize, usize), (T, usize)> = BTreeMap::new();
    let mut add = |la: usize, lb: usize, va: T, vb: T| {
        if la != lb {
            let e = acc.entry((la.min(lb), la.max(lb))).or_insert((T::zero(), 0));
            e.0 = e.0 + va.max(vb);
            e.1 += 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = labeling.label(y, x);
            let v = *boundary.get(y, x);
            if x + 1 < w {
                add(l, labeling.label(y, x + 1), v, *boundary.get(y, x + 1));
            }
            if y + 1 < h {
                add(l, labeling.label(y + 1, x), v, *boundary.get(y + 1, x));
            }
        }
    }
    SuperpixelGraph::from_edges(
        labeling.n_sp(),
        acc.into_iter()
            .map(|((a, b), (sum, count))| (a, b, sum / T::of_usize(count))),
    )
}

/// Dense symmetric `n x n` matrix of geodesic distances. Unreachable pairs hold
/// [`DistanceMatrix::unreachable`] (the largest finite scalar).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn unreachable() -> T {
        T::max_value()
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch(n, r.len()));
        }
        Ok(Self {
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_reachable(&self, i: usize, j: usize) -> bool {
        self.get(i, j) < Self::unreachable()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }
}

#[derive(Clone, Copy)]
struct State<T> {
    dist: T,
    node: usize,
}

impl<T: PartialOrd> PartialEq for State<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for State<T> {}

impl<T: PartialOrd> PartialOrd for State<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for State<T> {
    // reversed: BinaryHeap pops the smallest distance, then the lowest node id
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Single-source shortest paths with a binary heap.
pub fn dijkstra<T: Scalar>(graph: &SuperpixelGraph<T>, source: usize, out: &mut [T]) {
    let inf = DistanceMatrix::<T>::unreachable();
    out.fill(inf);
    out[source] = T::zero();
    let mut done = vec![false; graph.n_sp()];
    let mut heap = BinaryHeap::new();
    heap.push(State {
        dist: T::zero(),
        node: source,
    });
    while let Some(State { dist, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(next, w) in graph.neighbors(node) {
            let cand = dist + w;
            if !done[next] && cand < out[next] {
                out[next] = cand;
                heap.push(State {
                    dist: cand,
                    node: next,
                });
            }
        }
    }
}

/// All-pairs geodesic distances, one Dijkstra run per source.
///
/// With nonnegative weights Johnson's reweighting pass is the identity, so
/// only the per-source Dijkstra stage remains. Rows run in parallel. The result is
/// symmetrized with `min(d[i][j], d[j][i])` to remove last-bit differences
/// between summing a path forwards and backwards.
pub fn all_pairs_geodesic<T: Scalar>(graph: &SuperpixelGraph<T>) -> DistanceMatrix<T> {
    let n = graph.n_sp();
    let mut values = vec![T::zero(); n * n];
    if n > 0 {
        values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(source, row)| dijkstra(graph, source, row));
    }
    for i in 0..n {
        for j in i + 1..n {
            let m = values[i * n + j].min(values[j * n + i]);
            values[i * n + j] = m;
            values[j * n + i] = m;
        }
    }
    DistanceMatrix { n, values }
}
