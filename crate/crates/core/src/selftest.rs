//! Runtime consistency checks behind `levelbox selftest`: each compares an
//! optimized routine with a slow reference computation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxproj;
use crate::energy;
use crate::evolution::InstanceProblem;
use crate::treefilter::{build_mst, tree_filter_apply, PixelTree};
use crate::types::{BoxAnnotation, EvolutionConfig, LevelSetField, PixelGrid};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> PixelGrid {
    PixelGrid::from_fn(h, w, ch, |_, _, _| rng.gen::<f64>()).expect("finite")
}

/// `max |a - b| / max |b|`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Tree kernel aggregation by explicit path distances between all pairs.
pub fn brute_force_tree_filter(tree: &PixelTree, signal: &PixelGrid, sigma: f64) -> Vec<f64> {
    let n = tree.node_count();
    let mut adjacency = vec![Vec::new(); n];
    for (p, c, w) in tree.edges() {
        adjacency[p].push((c, w));
        adjacency[c].push((p, w));
    }
    let ch = signal.channels();
    let mut out = vec![0.0; n * ch];
    for i in 0..n {
        let mut dist = vec![f64::NAN; n];
        dist[i] = 0.0;
        let mut stack = vec![i];
        while let Some(v) = stack.pop() {
            for &(u, w) in &adjacency[v] {
                if dist[u].is_nan() {
                    dist[u] = dist[v] + w;
                    stack.push(u);
                }
            }
        }
        let mut norm = 0.0;
        for (j, d) in dist.iter().enumerate() {
            let k = (-d / sigma).exp();
            norm += k;
            for c in 0..ch {
                out[i * ch + c] += k * signal.data()[j * ch + c];
            }
        }
        for c in 0..ch {
            out[i * ch + c] /= norm;
        }
    }
    out
}

fn check_gradient(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (h, w) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let iu = random_grid(rng, h, w, 1);
        let ifeat = random_grid(rng, h, w, 3);
        let cfg = EvolutionConfig {
            gamma: rng.gen_range(1e-4..0.5),
            ..Default::default()
        };
        let problem = InstanceProblem::new(&iu, &ifeat, &cfg).expect("valid problem");
        let bx = BoxAnnotation::new(1, 0, 0, w, h).expect("valid box");
        let phi: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let field = LevelSetField::new(bx, phi.clone()).expect("finite");
        let means = problem.means(&field);
        let descent = problem.objective_gradient(&field).expect("gradient");
        let step = 1e-5;
        let fd: Vec<f64> = (0..phi.len())
            .map(|i| {
                let mut p = phi.clone();
                p[i] += step;
                let up = problem.frozen_objective(&p, &means);
                p[i] -= 2.0 * step;
                let down = problem.frozen_objective(&p, &means);
                -(up - down) / (2.0 * step)
            })
            .collect();
        worst = worst.max(relative_error(descent.data(), &fd));
    }
    CheckOutcome {
        name: "objective gradient vs central differences",
        passed: worst < 1e-4,
        detail: format!("max relative error {worst:.3e}"),
    }
}

fn check_tree_filter(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let guide = random_grid(rng, h, w, 2);
        let signal = random_grid(rng, h, w, 2);
        let sigma = rng.gen_range(0.05..2.0);
        let tree = build_mst(&guide);
        let fast = tree_filter_apply(&tree, &signal, sigma).expect("filter");
        let slow = brute_force_tree_filter(&tree, &signal, sigma);
        let err = fast
            .data()
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    CheckOutcome {
        name: "tree filter two-pass vs all-pairs",
        passed: worst < 1e-9,
        detail: format!("max absolute error {worst:.3e}"),
    }
}

fn check_box_gradient(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (h, w) = (rng.gen_range(2..=6), rng.gen_range(2..=6));
        let mask: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.05..0.95)).collect();
        let region = vec![1.0; h * w];
        let (_, grad) = boxproj::loss_and_gradient(&mask, &region, h, w, 1e-6);
        let step = 1e-6;
        let fd: Vec<f64> = (0..mask.len())
            .map(|i| {
                let mut m = mask.clone();
                m[i] += step;
                let up = boxproj::loss_only(&m, &region, h, w, 1e-6);
                m[i] -= 2.0 * step;
                let down = boxproj::loss_only(&m, &region, h, w, 1e-6);
                (up - down) / (2.0 * step)
            })
            .collect();
        worst = worst.max(relative_error(&grad, &fd));
    }
    CheckOutcome {
        name: "box projection gradient vs central differences",
        passed: worst < 1e-5,
        detail: format!("max relative error {worst:.3e}"),
    }
}

fn check_mean_optimality(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut violations = 0;
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let data = random_grid(rng, h, w, 1);
        let phi: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let chi = energy::sigmoid_values(&phi);
        let means = energy::means_from_char(&data, &chi);
        let (r_in, r_out) = energy::region_terms(&data, &chi, &means);
        for delta in [1e-3, -1e-3] {
            let mut m = means.clone();
            m.inside[0] += delta;
            m.outside[0] += delta;
            let (p_in, p_out) = energy::region_terms(&data, &chi, &m);
            if p_in < r_in || p_out < r_out {
                violations += 1;
            }
        }
    }
    CheckOutcome {
        name: "region means minimize the fit terms",
        passed: violations == 0,
        detail: format!("{violations} violations"),
    }
}

/// Runs every check with a fixed seed.
pub fn run() -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    vec![
        check_gradient(&mut rng),
        check_tree_filter(&mut rng),
        check_box_gradient(&mut rng),
        check_mean_optimality(&mut rng),
    ]
}
