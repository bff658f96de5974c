//! Seeded synthetic scenes with analytic ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoxAnnotation, PixelGrid};

/// Margin added around each shape's tight bounding box.
pub const BOX_DILATION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disk,
    Rectangle,
    Ellipse,
}

/// Shape in pixel coordinates: pixel `(row, col)` has its centre at
/// `(x, y) = (col, row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// `[x, y]`.
    pub center: [f64; 2],
    /// `[rx, ry]`; disks use `rx`, rectangles treat these as half extents.
    pub radii: [f64; 2],
    pub intensity: f64,
}

impl ShapeSpec {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        match self.kind {
            ShapeKind::Disk => dx * dx + dy * dy <= self.radii[0] * self.radii[0],
            ShapeKind::Rectangle => dx.abs() <= self.radii[0] && dy.abs() <= self.radii[1],
            ShapeKind::Ellipse => {
                let (ax, ay) = (dx / self.radii[0], dy / self.radii[1]);
                ax * ax + ay * ay <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub shapes: Vec<ShapeSpec>,
    pub background_intensity: f64,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: PixelGrid,
    /// One box per shape, ids `1..=n` in shape order.
    pub boxes: Vec<BoxAnnotation>,
    /// Full-frame `{0, 1}` rasterization of each shape, ignoring occlusion.
    pub truth: Vec<Vec<u8>>,
}

fn validate(spec: &SceneSpec) -> Result<()> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::invalid("scene dimensions must be positive"));
    }
    if spec.shapes.is_empty() {
        return Err(Error::invalid("scene needs at least one shape"));
    }
    if !(0.0..=1.0).contains(&spec.background_intensity) {
        return Err(Error::invalid("background intensity must lie in [0, 1]"));
    }
    if !(spec.noise_amplitude >= 0.0 && spec.noise_amplitude.is_finite()) {
        return Err(Error::invalid("noise amplitude must be finite and >= 0"));
    }
    for (i, s) in spec.shapes.iter().enumerate() {
        if !(0.0..=1.0).contains(&s.intensity) {
            return Err(Error::invalid(format!(
                "shape {i}: intensity must lie in [0, 1]"
            )));
        }
        if !(s.radii[0] > 0.0 && s.radii[1] > 0.0 && s.radii.iter().all(|r| r.is_finite())) {
            return Err(Error::invalid(format!("shape {i}: radii must be positive")));
        }
        if !s.center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!("shape {i}: centre must be finite")));
        }
    }
    Ok(())
}

fn rasterize(shape: &ShapeSpec, h: usize, w: usize) -> Vec<u8> {
    (0..h * w)
        .map(|i| u8::from(shape.contains((i % w) as f64, (i / w) as f64)))
        .collect()
}

/// Tight bounding box of a mask dilated by [`BOX_DILATION`] and clipped.
fn dilated_box(id: u32, mask: &[u8], h: usize, w: usize) -> Option<BoxAnnotation> {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for (i, &m) in mask.iter().enumerate() {
        if m == 1 {
            let (r, c) = (i / w, i % w);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(c);
            c1 = c1.max(c);
        }
    }
    if r0 == usize::MAX {
        return None;
    }
    BoxAnnotation::new(
        id,
        c0.saturating_sub(BOX_DILATION),
        r0.saturating_sub(BOX_DILATION),
        (c1 + 1 + BOX_DILATION).min(w),
        (r1 + 1 + BOX_DILATION).min(h),
    )
    .ok()
}

/// Renders the shapes in order over the background, adds seeded uniform
/// noise in `[-a, a]` and clamps to `[0, 1]`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    validate(spec)?;
    let (h, w) = (spec.height, spec.width);
    let mut pixels = vec![spec.background_intensity; h * w];
    let mut boxes = Vec::with_capacity(spec.shapes.len());
    let mut truth = Vec::with_capacity(spec.shapes.len());
    for (i, shape) in spec.shapes.iter().enumerate() {
        let id = i as u32 + 1;
        let mask = rasterize(shape, h, w);
        let bx = dilated_box(id, &mask, h, w).ok_or_else(|| {
            Error::invalid(format!("shape {i} does not cover any pixel of the image"))
        })?;
        for (p, &m) in pixels.iter_mut().zip(&mask) {
            if m == 1 {
                *p = shape.intensity;
            }
        }
        boxes.push(bx);
        truth.push(mask);
    }
    if spec.noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let a = spec.noise_amplitude;
        for p in &mut pixels {
            *p = (*p + rng.gen_range(-a..=a)).clamp(0.0, 1.0);
        }
    }
    Ok(Scene {
        image: PixelGrid::new(h, w, 1, pixels)?,
        boxes,
        truth,
    })
}
