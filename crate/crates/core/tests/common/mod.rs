//! Reference computations shared by the oracle and acceptance suites.
#![allow(dead_code)]

use levelbox::treefilter::PixelTree;
use levelbox::{EvolutionConfig, PixelGrid};

// ---------------------------------------------------------------------------
// Reference objective, written term by term from the definitions.

pub struct Reference {
    h: usize,
    w: usize,
    data: Vec<Vec<Vec<f64>>>, // [term][channel][pixel]
    weights: [f64; 2],
    gamma: f64,
    alpha: f64,
    eps_curv: f64,
    eps_dice: f64,
}

impl Reference {
    pub fn from_grids(iu: &PixelGrid, ifeat: &PixelGrid, cfg: &EvolutionConfig) -> Self {
        let planes = |g: &PixelGrid| (0..g.channels()).map(|c| g.channel(c)).collect::<Vec<_>>();
        Self {
            h: iu.height(),
            w: iu.width(),
            data: vec![planes(iu), planes(ifeat)],
            weights: [cfg.lambda1, cfg.lambda2],
            gamma: cfg.gamma,
            alpha: cfg.alpha,
            eps_curv: cfg.eps_curv,
            eps_dice: cfg.eps_dice,
        }
    }

    pub fn means(&self, phi: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let s: Vec<f64> = phi.iter().map(|&p| 1.0 / (1.0 + (-p).exp())).collect();
        let den_in: f64 = s.iter().sum::<f64>() + 1e-12;
        let den_out: f64 = s.iter().map(|v| 1.0 - v).sum::<f64>() + 1e-12;
        self.data
            .iter()
            .map(|term| {
                term.iter()
                    .map(|plane| {
                        let a: f64 = plane.iter().zip(&s).map(|(d, v)| d * v).sum();
                        let b: f64 = plane.iter().zip(&s).map(|(d, v)| d * (1.0 - v)).sum();
                        (a / den_in, b / den_out)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn objective(&self, phi: &[f64], means: &[Vec<(f64, f64)>]) -> f64 {
        let (h, w) = (self.h, self.w);
        let s: Vec<f64> = phi.iter().map(|&p| 1.0 / (1.0 + (-p).exp())).collect();
        let mut length = 0.0;
        for r in 0..h {
            for c in 0..w {
                let gx = if c + 1 < w {
                    s[r * w + c + 1] - s[r * w + c]
                } else {
                    0.0
                };
                let gy = if r + 1 < h {
                    s[(r + 1) * w + c] - s[r * w + c]
                } else {
                    0.0
                };
                length += (gx * gx + gy * gy + self.eps_curv * self.eps_curv).sqrt();
            }
        }
        let mut total = 0.0;
        for (t, term) in self.data.iter().enumerate() {
            let mut e = self.gamma * length;
            for (k, plane) in term.iter().enumerate() {
                let (c1, c2) = means[t][k];
                for (d, v) in plane.iter().zip(&s) {
                    e += (d - c1).powi(2) * v + (d - c2).powi(2) * (1.0 - v);
                }
            }
            total += self.weights[t] * e;
        }
        // box term against an all-ones region
        let col_max: Vec<f64> = (0..w)
            .map(|c| (0..h).map(|r| s[r * w + c]).fold(f64::MIN, f64::max))
            .collect();
        let row_max: Vec<f64> = (0..h)
            .map(|r| (0..w).map(|c| s[r * w + c]).fold(f64::MIN, f64::max))
            .collect();
        let dice = |p: &[f64]| {
            2.0 * p.iter().sum::<f64>()
                / (p.iter().map(|v| v * v).sum::<f64>() + p.len() as f64 + self.eps_dice)
        };
        total + self.alpha * ((1.0 - dice(&col_max)) + (1.0 - dice(&row_max)))
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    diff / b.iter().map(|y| y.abs()).fold(f64::MIN_POSITIVE, f64::max)
}

pub fn brute_force_filter(tree: &PixelTree, signal: &PixelGrid, sigma: f64) -> Vec<f64> {
    let n = tree.node_count();
    let mut adj = vec![Vec::new(); n];
    for (p, c, w) in tree.edges() {
        adj[p].push((c, w));
        adj[c].push((p, w));
    }
    let ch = signal.channels();
    let mut out = Vec::with_capacity(n * ch);
    for i in 0..n {
        // depth-first distances from i
        let mut dist = vec![None; n];
        dist[i] = Some(0.0);
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            let dv = dist[v].unwrap();
            for &(u, w) in &adj[v] {
                if dist[u].is_none() {
                    dist[u] = Some(dv + w);
                    stack.push(u);
                }
            }
        }
        let k: Vec<f64> = dist.iter().map(|d| (-d.unwrap() / sigma).exp()).collect();
        let norm: f64 = k.iter().sum();
        for c in 0..ch {
            let num: f64 = (0..n).map(|j| k[j] * signal.data()[j * ch + c]).sum();
            out.push(num / norm);
        }
    }
    out
}

/// Exhaustive minimum spanning tree weight over all (n-1)-edge subsets.
pub fn exhaustive_mst_weight(guide: &PixelGrid) -> f64 {
    let (h, w) = (guide.height(), guide.width());
    let n = h * w;
    let mut edges = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let dist = |a: &[f64], b: &[f64]| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            if c + 1 < w {
                edges.push((
                    r * w + c,
                    r * w + c + 1,
                    dist(guide.pixel(r, c), guide.pixel(r, c + 1)),
                ));
            }
            if r + 1 < h {
                edges.push((
                    r * w + c,
                    (r + 1) * w + c,
                    dist(guide.pixel(r, c), guide.pixel(r + 1, c)),
                ));
            }
        }
    }
    if n == 1 {
        return 0.0;
    }
    let m = edges.len();
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << m) {
        if subset.count_ones() as usize != n - 1 {
            continue;
        }
        let mut label: Vec<usize> = (0..n).collect();
        let mut weight = 0.0;
        let mut acyclic = true;
        for (k, &(a, b, wt)) in edges.iter().enumerate() {
            if subset & (1 << k) == 0 {
                continue;
            }
            let (la, lb) = (label[a], label[b]);
            if la == lb {
                acyclic = false;
                break;
            }
            label.iter_mut().for_each(|l| {
                if *l == lb {
                    *l = la
                }
            });
            weight += wt;
        }
        if acyclic {
            best = best.min(weight);
        }
    }
    best
}
