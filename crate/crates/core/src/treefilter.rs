//! Minimum-spanning-tree feature filter.
//!
//! The pixel lattice is reduced to its MST under guide-feature distances and
//! every signal value is replaced by a kernel-weighted average over all
//! pixels, with weights `exp(-D(i, j) / sigma)` decaying in tree path
//! distance `D`. Because the kernel factorizes along tree edges the full
//! all-pairs aggregation is computed exactly with one leaf-to-root and one
//! root-to-leaf pass.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::PixelGrid;

/// Spanning tree over the pixels of an `H × W` lattice, rooted at pixel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTree {
    height: usize,
    width: usize,
    parent: Vec<usize>,
    parent_edge_weight: Vec<f64>,
    traversal_order: Vec<usize>,
}

impl PixelTree {
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn root(&self) -> usize {
        self.traversal_order[0]
    }

    /// Parent of each node; the root is its own parent.
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Weight of the edge to the parent; zero for the root.
    pub fn parent_edge_weights(&self) -> &[f64] {
        &self.parent_edge_weight
    }

    /// Every node once, parents before children.
    pub fn traversal_order(&self) -> &[usize] {
        &self.traversal_order
    }

    /// Tree edges as `(parent, child, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.traversal_order[1..]
            .iter()
            .map(|&c| (self.parent[c], c, self.parent_edge_weight[c]))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy)]
struct LatticeEdge {
    weight: f64,
    orientation: Orientation,
    row: usize,
    col: usize,
    a: usize,
    b: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn feature_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Kruskal MST over the 4-connected lattice of `guide`, edge weight equal to
/// the Euclidean distance between neighbouring feature vectors.
///
/// Equal weights are ordered horizontal edges first, then by row, then by
/// column, so a uniform guide yields the row-major comb: every row chained
/// left to right and rows linked through column 0.
pub fn build_mst(guide: &PixelGrid) -> PixelTree {
    let (h, w) = (guide.height(), guide.width());
    let n = h * w;

    let mut edges = Vec::with_capacity(2 * n);
    for r in 0..h {
        for c in 0..w {
            let a = r * w + c;
            if c + 1 < w {
                edges.push(LatticeEdge {
                    weight: feature_distance(guide.pixel(r, c), guide.pixel(r, c + 1)),
                    orientation: Orientation::Horizontal,
                    row: r,
                    col: c,
                    a,
                    b: a + 1,
                });
            }
            if r + 1 < h {
                edges.push(LatticeEdge {
                    weight: feature_distance(guide.pixel(r, c), guide.pixel(r + 1, c)),
                    orientation: Orientation::Vertical,
                    row: r,
                    col: c,
                    a,
                    b: a + w,
                });
            }
        }
    }
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.orientation.cmp(&y.orientation))
            .then(x.row.cmp(&y.row))
            .then(x.col.cmp(&y.col))
    });

    let mut dsu = DisjointSet::new(n);
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut selected = 0;
    for e in &edges {
        if selected + 1 == n {
            break;
        }
        if dsu.union(e.a, e.b) {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
            selected += 1;
        }
    }

    let mut parent = vec![usize::MAX; n];
    let mut parent_edge_weight = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([0usize]);
    parent[0] = 0;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(u, wgt) in &adjacency[v] {
            if parent[u] == usize::MAX {
                parent[u] = v;
                parent_edge_weight[u] = wgt;
                queue.push_back(u);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "4-connected lattice MST must span");

    PixelTree {
        height: h,
        width: w,
        parent,
        parent_edge_weight,
        traversal_order: order,
    }
}

/// Normalized tree-kernel aggregation of every channel of `signal`.
pub fn tree_filter_apply(tree: &PixelTree, signal: &PixelGrid, sigma: f64) -> Result<PixelGrid> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "tree filter sigma must be > 0, got {sigma}"
        )));
    }
    if signal.height() != tree.height || signal.width() != tree.width {
        return Err(Error::invalid(format!(
            "signal is {}x{}, tree spans {}x{}",
            signal.height(),
            signal.width(),
            tree.height,
            tree.width
        )));
    }
    let n = tree.node_count();
    let ch = signal.channels();
    let decay: Vec<f64> = tree
        .parent_edge_weight
        .iter()
        .map(|w| (-w / sigma).exp())
        .collect();

    // Subtree sums: numerator per channel plus a normalizer column.
    let stride = ch + 1;
    let mut up = vec![0.0; n * stride];
    for v in 0..n {
        up[v * stride..v * stride + ch]
            .copy_from_slice(signal.pixel(v / tree.width, v % tree.width));
        up[v * stride + ch] = 1.0;
    }
    for &v in tree.traversal_order[1..].iter().rev() {
        let p = tree.parent[v];
        let k = decay[v];
        for j in 0..stride {
            up[p * stride + j] += k * up[v * stride + j];
        }
    }

    let mut full = up.clone();
    for &v in &tree.traversal_order[1..] {
        let p = tree.parent[v];
        let k = decay[v];
        for j in 0..stride {
            full[v * stride + j] =
                up[v * stride + j] + k * (full[p * stride + j] - k * up[v * stride + j]);
        }
    }

    let mut out = Vec::with_capacity(n * ch);
    for v in 0..n {
        let norm = full[v * stride + ch];
        out.extend(full[v * stride..v * stride + ch].iter().map(|s| s / norm));
    }
    PixelGrid::new(tree.height, tree.width, ch, out)
}
