//! Independent reference computations for the numerical kernels.

use levelbox::boxproj::{box_projection_gradient, box_projection_loss};
use levelbox::energy::{chanvese_energy, combined_energy, region_means, sigmoid};
use levelbox::evolution::{initialize_phi, InstanceProblem};
use levelbox::features::{
    build_feature_stack, handcrafted_channels, normalize_image, FEATURE_CHANNELS,
};
use levelbox::treefilter::{build_mst, tree_filter_apply};
use levelbox::{make_grid, BoxAnnotation, EvolutionConfig, InitMode, LevelSetField, PixelGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_force_filter, exhaustive_mst_weight, rel_err, Reference};

fn field(h: usize, w: usize, vals: Vec<f64>) -> LevelSetField {
    LevelSetField::new(BoxAnnotation::new(1, 0, 0, w, h).unwrap(), vals).unwrap()
}

fn rand_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> PixelGrid {
    PixelGrid::from_fn(h, w, ch, |_, _, _| rng.gen::<f64>()).unwrap()
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let channels = rng.gen_range(1..=3);
        let iu = rand_grid(&mut rng, h, w, channels);
        let ifeat = rand_grid(&mut rng, h, w, FEATURE_CHANNELS);
        let cfg = EvolutionConfig {
            gamma: rng.gen_range(1e-4..0.5),
            lambda1: rng.gen_range(0.1..2.0),
            lambda2: rng.gen_range(0.1..2.0),
            ..Default::default()
        };
        let phi: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let reference = Reference::from_grids(&iu, &ifeat, &cfg);
        let means = reference.means(&phi);
        let step = 1e-5;
        let fd: Vec<f64> = (0..phi.len())
            .map(|i| {
                let mut p = phi.clone();
                p[i] += step;
                let up = reference.objective(&p, &means);
                p[i] -= 2.0 * step;
                -(up - reference.objective(&p, &means)) / (2.0 * step)
            })
            .collect();
        let problem = InstanceProblem::new(&iu, &ifeat, &cfg).unwrap();
        let g = problem
            .objective_gradient(&field(h, w, phi.clone()))
            .unwrap();
        let err = rel_err(g.data(), &fd);
        assert!(err < 1e-4, "{h}x{w}: relative error {err:e}");
        // the library objective agrees with the reference as well
        let state = problem.state(field(h, w, phi.clone()), 0).unwrap();
        let expected = reference.objective(&phi, &means);
        assert!((state.total_objective - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }
}

#[test]
fn chanvese_energy_matches_termwise_sum() {
    let data = PixelGrid::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let phi = field(2, 2, vec![2.0, -2.0, 2.0, -2.0]);
    let s = [sigmoid(2.0), sigmoid(-2.0), sigmoid(2.0), sigmoid(-2.0)];
    let d = [0.0, 1.0, 0.0, 1.0];
    let c1 = (0..4).map(|i| d[i] * s[i]).sum::<f64>() / (s.iter().sum::<f64>() + 1e-12);
    let c2 = (0..4).map(|i| d[i] * (1.0 - s[i])).sum::<f64>()
        / (s.iter().map(|v| 1.0 - v).sum::<f64>() + 1e-12);
    let region_in: f64 = (0..4).map(|i| (d[i] - c1).powi(2) * s[i]).sum();
    let region_out: f64 = (0..4).map(|i| (d[i] - c2).powi(2) * (1.0 - s[i])).sum();
    let eps2 = 1e-16;
    // forward differences: (0,0) has gx = s1 - s0, gy = 0; (0,1) has gy = 0;
    // bottom row has gx only at (1,0)
    let g = s[1] - s[0];
    let length = 1e-4 * (2.0 * (g * g + eps2).sqrt() + 2.0 * eps2.sqrt());
    let e = chanvese_energy(&data, &phi, 1e-4, 1e-8).unwrap();
    assert!((e.region_in - region_in).abs() < 1e-12);
    assert!((e.region_out - region_out).abs() < 1e-12);
    assert!((e.length - length).abs() < 1e-15);
    assert!((e.total - (region_in + region_out + length)).abs() < 1e-10);

    let f = PixelGrid::new(2, 2, 1, vec![0.3, 0.9, 0.2, 0.5]).unwrap();
    let cfg = EvolutionConfig {
        lambda1: 1.0,
        lambda2: 0.5,
        ..Default::default()
    };
    let ef = chanvese_energy(&f, &phi, cfg.gamma, cfg.eps_curv).unwrap();
    let combined = combined_energy(&data, &f, &phi, &cfg).unwrap();
    assert!((combined.total - (e.total + 0.5 * ef.total)).abs() < 1e-12);
    assert_eq!(combined.image, e);
    assert_eq!(combined.feature, ef);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_components_nonnegative(
        (h, w, vals, phi) in (2usize..6, 2usize..6).prop_flat_map(|(h, w)| (
            Just(h), Just(w),
            prop::collection::vec(0.0f64..1.0, h * w * 2),
            prop::collection::vec(-60.0f64..60.0, h * w),
        ))
    ) {
        let data = PixelGrid::new(h, w, 2, vals).unwrap();
        let e = chanvese_energy(&data, &field(h, w, phi.clone()), 1e-2, 1e-8).unwrap();
        prop_assert!(e.region_in >= 0.0 && e.region_out >= 0.0 && e.length >= 0.0);
        let s = levelbox::energy::sigmoid_char(&field(h, w, phi.iter().map(|p| p.clamp(-30.0, 30.0)).collect()));
        prop_assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn region_means_are_least_squares_minimizers(
        (h, w, vals, phi) in (2usize..6, 2usize..6).prop_flat_map(|(h, w)| (
            Just(h), Just(w),
            prop::collection::vec(0.0f64..1.0, h * w),
            prop::collection::vec(-5.0f64..5.0, h * w),
        ))
    ) {
        let data = PixelGrid::new(h, w, 1, vals.clone()).unwrap();
        let f = field(h, w, phi.clone());
        let m = region_means(&data, &f).unwrap();
        let s: Vec<f64> = phi.iter().map(|&p| sigmoid(p)).collect();
        let fit_in = |c: f64| vals.iter().zip(&s).map(|(d, v)| (d - c).powi(2) * v).sum::<f64>();
        let fit_out = |c: f64| vals.iter().zip(&s).map(|(d, v)| (d - c).powi(2) * (1.0 - v)).sum::<f64>();
        for delta in [1e-3, -1e-3] {
            prop_assert!(fit_in(m.inside[0] + delta) >= fit_in(m.inside[0]));
            prop_assert!(fit_out(m.outside[0] + delta) >= fit_out(m.outside[0]));
        }
    }

    #[test]
    fn energy_translation_covariance(
        (h, w, vals, phi, shift) in (2usize..5, 2usize..5).prop_flat_map(|(h, w)| (
            Just(h), Just(w),
            prop::collection::vec(0.0f64..1.0, h * w),
            prop::collection::vec(-4.0f64..4.0, h * w),
            -5.0f64..5.0,
        ))
    ) {
        let a = PixelGrid::new(h, w, 1, vals.clone()).unwrap();
        let b = PixelGrid::new(h, w, 1, vals.iter().map(|v| v + shift).collect()).unwrap();
        let f = field(h, w, phi);
        let ea = chanvese_energy(&a, &f, 1e-3, 1e-8).unwrap();
        let eb = chanvese_energy(&b, &f, 1e-3, 1e-8).unwrap();
        prop_assert!((ea.total - eb.total).abs() < 1e-9 * ea.total.max(1.0));
    }
}

// ---------------------------------------------------------------------------
// Tree filter.

#[test]
fn heavy_corner_spanning_trees_enumerated() {
    let guide = PixelGrid::new(2, 2, 1, vec![0.0, 0.0, 0.0, 10.0]).unwrap();
    assert_eq!(exhaustive_mst_weight(&guide), 10.0);
    assert_eq!(build_mst(&guide).total_weight(), 10.0);
}

#[test]
fn chain_filter_matches_enumeration() {
    let tree = build_mst(&PixelGrid::new(1, 3, 1, vec![0.0, 1.0, 2.0]).unwrap());
    let signal = PixelGrid::new(1, 3, 1, vec![0.0, 1.0, 0.0]).unwrap();
    let out = tree_filter_apply(&tree, &signal, 1.0).unwrap();
    let slow = brute_force_filter(&tree, &signal, 1.0);
    for (a, b) in out.data().iter().zip(&slow) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn two_pass_filter_equals_all_pairs(
        (h, w, guide, signal, sigma) in (1usize..=8, 1usize..=8).prop_flat_map(|(h, w)| (
            Just(h), Just(w),
            prop::collection::vec(0.0f64..1.0, h * w * 2),
            prop::collection::vec(-1.0f64..1.0, h * w * 3),
            0.02f64..3.0,
        ))
    ) {
        let guide = PixelGrid::new(h, w, 2, guide).unwrap();
        let signal = PixelGrid::new(h, w, 3, signal).unwrap();
        let tree = build_mst(&guide);
        let fast = tree_filter_apply(&tree, &signal, sigma).unwrap();
        let slow = brute_force_filter(&tree, &signal, sigma);
        for (a, b) in fast.data().iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mst_weight_is_minimal(
        (h, w, guide) in (1usize..=3, 1usize..=3).prop_flat_map(|(h, w)| (
            Just(h), Just(w), prop::collection::vec(0.0f64..1.0, h * w),
        ))
    ) {
        let guide = PixelGrid::new(h, w, 1, guide).unwrap();
        let tree = build_mst(&guide);
        prop_assert!((tree.total_weight() - exhaustive_mst_weight(&guide)).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_is_preserved(
        (h, w, guide, value, sigma) in (1usize..=6, 1usize..=6).prop_flat_map(|(h, w)| (
            Just(h), Just(w), prop::collection::vec(0.0f64..1.0, h * w), -5.0f64..5.0, 0.01f64..2.0,
        ))
    ) {
        let tree = build_mst(&PixelGrid::new(h, w, 1, guide).unwrap());
        let out = tree_filter_apply(&tree, &make_grid(h, w, 1, value).unwrap(), sigma).unwrap();
        prop_assert!(out.data().iter().all(|v| (v - value).abs() < 1e-12));
    }
}

#[test]
fn vanishing_sigma_returns_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let guide = rand_grid(&mut rng, 5, 6, 1);
    let signal = rand_grid(&mut rng, 5, 6, 2);
    let out = tree_filter_apply(&build_mst(&guide), &signal, 1e-6).unwrap();
    for (a, b) in out.data().iter().zip(signal.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

// ---------------------------------------------------------------------------
// Box projection.

#[test]
fn box_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let region = make_grid(3, 3, 1, 1.0).unwrap();
    for _ in 0..10 {
        let mask = PixelGrid::from_fn(3, 3, 1, |_, _, _| rng.gen_range(0.05..0.95)).unwrap();
        let grad = box_projection_gradient(&mask, &region, 1e-6).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..9)
            .map(|i| {
                let bump = |d: f64| {
                    let mut v = mask.data().to_vec();
                    v[i] += d;
                    box_projection_loss(&PixelGrid::new(3, 3, 1, v).unwrap(), &region, 1e-6)
                        .unwrap()
                };
                (bump(h) - bump(-h)) / (2.0 * h)
            })
            .collect();
        assert!(rel_err(grad.data(), &fd) < 1e-5);
    }
}

proptest! {
    #[test]
    fn box_loss_in_range_and_column_permutation_invariant(
        (h, w, vals, seed) in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| (
            Just(h), Just(w), prop::collection::vec(0.001f64..0.999, h * w), any::<u64>(),
        ))
    ) {
        let region = make_grid(h, w, 1, 1.0).unwrap();
        let mask = PixelGrid::new(h, w, 1, vals.clone()).unwrap();
        let loss = box_projection_loss(&mask, &region, 1e-6).unwrap();
        prop_assert!((0.0..=2.0).contains(&loss));

        // shuffle each column independently
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = vals.clone();
        for c in 0..w {
            for r in (1..h).rev() {
                let k = rng.gen_range(0..=r);
                shuffled.swap(r * w + c, k * w + c);
            }
        }
        let px = levelbox::boxproj::axis_projection(&mask, levelbox::boxproj::Axis::X).unwrap();
        let sx = levelbox::boxproj::axis_projection(&PixelGrid::new(h, w, 1, shuffled).unwrap(), levelbox::boxproj::Axis::X).unwrap();
        prop_assert_eq!(px, sx);
    }
}

#[test]
fn zero_loss_iff_every_row_and_column_touched() {
    let region = make_grid(4, 4, 1, 1.0).unwrap();
    // a single diagonal of ones touches every row and column
    let diag = PixelGrid::from_fn(4, 4, 1, |r, c, _| if r == c { 1.0 } else { 0.1 }).unwrap();
    assert!(box_projection_loss(&diag, &region, 1e-6).unwrap() < 1e-5);
    let missing =
        PixelGrid::from_fn(4, 4, 1, |r, c, _| if r == c && r < 3 { 1.0 } else { 0.1 }).unwrap();
    assert!(box_projection_loss(&missing, &region, 1e-6).unwrap() > 1e-3);
}

// ---------------------------------------------------------------------------
// Features.

#[test]
fn sobel_channels_match_direct_convolution() {
    // 8x8 vertical step edge between columns 3 and 4
    let img = PixelGrid::from_fn(8, 8, 1, |_, c, _| if c >= 4 { 1.0 } else { 0.0 }).unwrap();
    let stack = handcrafted_channels(&normalize_image(&img));
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let at = |r: isize, c: isize| img.get(r.clamp(0, 7) as usize, c.clamp(0, 7) as usize, 0);
    let mut direct = vec![0.0; 64];
    for r in 0..8isize {
        for c in 0..8isize {
            let mut s = 0.0;
            for (i, row) in kx.iter().enumerate() {
                for (j, k) in row.iter().enumerate() {
                    s += k * at(r + i as isize - 1, c + j as isize - 1);
                }
            }
            direct[(r * 8 + c) as usize] = s.abs();
        }
    }
    let max = direct.iter().cloned().fold(0.0, f64::max);
    let sobel_x = stack.channel(3);
    for (a, b) in sobel_x.iter().zip(&direct) {
        assert!((a - b / max).abs() < 1e-12);
    }
    for r in 0..8 {
        assert_eq!(sobel_x[r * 8 + 3], 1.0);
        assert_eq!(sobel_x[r * 8 + 4], 1.0);
        assert_eq!(sobel_x[r * 8], 0.0);
    }
    // no vertical structure: zero-range channel
    assert!(stack.channel(4).iter().all(|&v| v == 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn feature_stack_shape_and_range(
        (h, w, ch, vals) in (1usize..7, 1usize..7, 1usize..4).prop_flat_map(|(h, w, ch)| (
            Just(h), Just(w), Just(ch), prop::collection::vec(0.0f64..255.0, h * w * ch),
        ))
    ) {
        let img = PixelGrid::new(h, w, ch, vals).unwrap();
        let n = normalize_image(&img);
        prop_assert_eq!(normalize_image(&n), n.clone());
        let stack = build_feature_stack(&n, &EvolutionConfig::default()).unwrap();
        prop_assert_eq!(stack.grid.channels(), FEATURE_CHANNELS);
        prop_assert!(stack.grid.data().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn coordinate_channels_ignore_content(
        (h, w, a, b) in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| (
            Just(h), Just(w), prop::collection::vec(0.0f64..1.0, h * w), prop::collection::vec(0.0f64..1.0, h * w),
        ))
    ) {
        let sa = handcrafted_channels(&PixelGrid::new(h, w, 1, a).unwrap());
        let sb = handcrafted_channels(&PixelGrid::new(h, w, 1, b).unwrap());
        prop_assert_eq!(sa.channel(7), sb.channel(7));
        prop_assert_eq!(sa.channel(8), sb.channel(8));
    }
}

// ---------------------------------------------------------------------------
// Initialization.

#[test]
fn signed_distance_matches_chebyshev_oracle() {
    let b = BoxAnnotation::new(1, 0, 0, 6, 6).unwrap();
    let phi = initialize_phi(&b, InitMode::SignedDistance, 0.5);
    // inner box is rows/cols 1..=3
    let inner: Vec<(i64, i64)> = (1..=3).flat_map(|r| (1..=3).map(move |c| (r, c))).collect();
    let ring: Vec<(i64, i64)> = inner
        .iter()
        .copied()
        .filter(|&(r, c)| r == 1 || r == 3 || c == 1 || c == 3)
        .collect();
    for r in 0..6i64 {
        for c in 0..6i64 {
            let inside = inner.contains(&(r, c));
            let expected = if inside {
                ring.iter()
                    .map(|&(a, b)| (a - r).abs().max((b - c).abs()))
                    .min()
                    .unwrap() as f64
            } else {
                -(inner
                    .iter()
                    .map(|&(a, b)| (a - r).abs().max((b - c).abs()))
                    .min()
                    .unwrap() as f64)
            };
            assert_eq!(
                phi.values()[(r * 6 + c) as usize],
                expected.clamp(-3.0, 3.0),
                "({r},{c})"
            );
        }
    }
    assert_eq!(phi.values()[2 * 6 + 2], 1.0);
}
