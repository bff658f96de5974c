//! Data terms: the normalized image and the tree-filtered structural stack.

use crate::error::Result;
use crate::treefilter::{build_mst, tree_filter_apply};
use crate::types::{EvolutionConfig, PixelGrid};

/// Number of channels in the structural feature stack.
pub const FEATURE_CHANNELS: usize = 9;

pub const CHANNEL_LABELS: [&str; FEATURE_CHANNELS] = [
    "intensity_0",
    "intensity_1",
    "intensity_2",
    "sobel_x",
    "sobel_y",
    "gauss_1",
    "gauss_2",
    "coord_x",
    "coord_y",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub grid: PixelGrid,
    pub channel_labels: Vec<String>,
}

/// Min-max normalizes a plane to `[0, 1]`; a constant plane maps to 0.5.
fn normalize_plane(plane: &mut [f64]) {
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range > 0.0 {
        plane.iter_mut().for_each(|v| *v = (*v - lo) / range);
    } else {
        plane.iter_mut().for_each(|v| *v = 0.5);
    }
}

/// Per-channel affine map onto `[0, 1]`.
pub fn normalize_image(image: &PixelGrid) -> PixelGrid {
    let planes: Vec<Vec<f64>> = (0..image.channels())
        .map(|c| {
            let mut p = image.channel(c);
            normalize_plane(&mut p);
            p
        })
        .collect();
    PixelGrid::from_channels(image.height(), image.width(), &planes)
        .expect("normalization preserves shape and finiteness")
}

fn clamped(plane: &[f64], h: usize, w: usize, r: isize, c: isize) -> f64 {
    let r = r.clamp(0, h as isize - 1) as usize;
    let c = c.clamp(0, w as isize - 1) as usize;
    plane[r * w + c]
}

/// Absolute horizontal and vertical 3×3 Sobel responses, edge-clamped.
pub(crate) fn sobel_magnitudes(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    const SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
    const DIFF: [f64; 3] = [-1.0, 0.0, 1.0];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for (i, dr) in (-1isize..=1).enumerate() {
                for (j, dc) in (-1isize..=1).enumerate() {
                    let v = clamped(plane, h, w, r as isize + dr, c as isize + dc);
                    sx += SMOOTH[i] * DIFF[j] * v;
                    sy += DIFF[i] * SMOOTH[j] * v;
                }
            }
            gx[r * w + c] = sx.abs();
            gy[r * w + c] = sy.abs();
        }
    }
    (gx, gy)
}

/// Separable Gaussian blur truncated at two standard deviations, edge-clamped.
pub(crate) fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (2.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();

    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(k, d)| k * clamped(plane, h, w, r as isize, c as isize + d))
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(k, d)| k * clamped(&tmp, h, w, r as isize + d, c as isize))
                .sum();
        }
    }
    out
}

fn gray_plane(image: &PixelGrid) -> Vec<f64> {
    let ch = image.channels() as f64;
    image
        .data()
        .chunks_exact(image.channels())
        .map(|px| px.iter().sum::<f64>() / ch)
        .collect()
}

/// Handcrafted channels before min-max normalization and tree filtering.
pub(crate) fn raw_feature_planes(image: &PixelGrid) -> Vec<Vec<f64>> {
    let (h, w) = (image.height(), image.width());
    let gray = gray_plane(image);
    let mut planes = Vec::with_capacity(FEATURE_CHANNELS);
    for c in 0..3 {
        if c < image.channels() {
            planes.push(image.channel(c));
        } else {
            planes.push(if image.channels() == 1 {
                gray.clone()
            } else {
                image.channel(0)
            });
        }
    }
    let (gx, gy) = sobel_magnitudes(&gray, h, w);
    planes.push(gx);
    planes.push(gy);
    planes.push(gaussian_blur(&gray, h, w, 1.0));
    planes.push(gaussian_blur(&gray, h, w, 2.0));
    planes.push((0..h * w).map(|i| (i % w) as f64 / w as f64).collect());
    planes.push((0..h * w).map(|i| (i / w) as f64 / h as f64).collect());
    planes
}

/// The nine handcrafted channels, each min-max normalized, before tree
/// filtering.
pub fn handcrafted_channels(image: &PixelGrid) -> PixelGrid {
    let mut planes = raw_feature_planes(image);
    planes.iter_mut().for_each(|p| normalize_plane(p));
    PixelGrid::from_channels(image.height(), image.width(), &planes)
        .expect("feature planes share the image shape")
}

/// Builds the 9-channel structural stack of a normalized image and smooths
/// it with the MST filter guided by the image itself.
pub fn build_feature_stack(image: &PixelGrid, config: &EvolutionConfig) -> Result<FeatureStack> {
    let stack = handcrafted_channels(image);
    let tree = build_mst(image);
    let grid = tree_filter_apply(&tree, &stack, config.feature_sigma)?;
    Ok(FeatureStack {
        grid,
        channel_labels: CHANNEL_LABELS.iter().map(|s| s.to_string()).collect(),
    })
}
