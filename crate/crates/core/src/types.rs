//! Shared grid, field, annotation and configuration types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `height × width × channels` scalar field stored row-major with
/// `(row, col, channel)` indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "grid data has {} values, expected {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite grid value at index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a grid by evaluating `f(row, col, channel)` for every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    /// Values of one pixel across all channels.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copies one channel out as a row-major plane.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Assembles a grid from equally sized row-major planes.
    pub fn from_channels(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        if let Some(p) = planes.iter().find(|p| p.len() != height * width) {
            return Err(Error::invalid(format!(
                "channel plane has {} values, expected {}",
                p.len(),
                height * width
            )));
        }
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height * width {
            data.extend(planes.iter().map(|p| p[i]));
        }
        Self::new(height, width, channels, data)
    }

    /// Whether the grid spans exactly the given box frame.
    pub fn matches_frame(&self, bx: &BoxAnnotation) -> bool {
        self.height == bx.height() && self.width == bx.width()
    }
}

/// Grid of the given shape with every value equal to `fill`.
pub fn make_grid(height: usize, width: usize, channels: usize, fill: f64) -> Result<PixelGrid> {
    PixelGrid::new(
        height,
        width,
        channels,
        vec![fill; height * width * channels],
    )
}

/// Copies the box interior out of `grid`.
pub fn crop(grid: &PixelGrid, bx: &BoxAnnotation) -> Result<PixelGrid> {
    bx.check_within(grid.height(), grid.width())?;
    let ch = grid.channels();
    let mut data = Vec::with_capacity(bx.area() * ch);
    for r in bx.y0..bx.y1 {
        let start = grid.index(r, bx.x0, 0);
        let end = grid.index(r, bx.x1 - 1, ch - 1) + 1;
        data.extend_from_slice(&grid.data[start..end]);
    }
    PixelGrid::new(bx.height(), bx.width(), ch, data)
}

/// Axis-aligned half-open pixel rectangle `[x0, x1) × [y0, y1)` with an
/// instance id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub id: u32,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Smallest box that still supports two-point difference stencils.
pub const MIN_BOX_AREA: usize = 4;

impl BoxAnnotation {
    pub fn new(id: u32, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 {
            return Err(Error::invalid(format!("box {id}: x0 ({x0}) >= x1 ({x1})")));
        }
        if y0 >= y1 {
            return Err(Error::invalid(format!("box {id}: y0 ({y0}) >= y1 ({y1})")));
        }
        let b = Self { id, x0, y0, x1, y1 };
        if b.area() < MIN_BOX_AREA {
            return Err(Error::invalid(format!(
                "box {id}: area {} below minimum {MIN_BOX_AREA}",
                b.area()
            )));
        }
        Ok(b)
    }

    /// Box covering a whole `height × width` image.
    pub fn full(id: u32, height: usize, width: usize) -> Result<Self> {
        Self::new(id, 0, 0, width, height)
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.x1 > width || self.y1 > height {
            return Err(Error::invalid(format!(
                "box {} ({},{},{},{}) exceeds {height}x{width} image",
                self.id, self.x0, self.y0, self.x1, self.y1
            )));
        }
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.y0..self.y1).contains(&row) && (self.x0..self.x1).contains(&col)
    }
}

/// Level-set function φ over the interior of one box, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    bx: BoxAnnotation,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn new(bx: BoxAnnotation, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != bx.area() {
            return Err(Error::invalid(format!(
                "phi has {} values, box {} has area {}",
                phi.len(),
                bx.id,
                bx.area()
            )));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite phi at index {i}")));
        }
        Ok(Self { bx, phi })
    }

    pub fn bbox(&self) -> &BoxAnnotation {
        &self.bx
    }

    pub fn height(&self) -> usize {
        self.bx.height()
    }

    pub fn width(&self) -> usize {
        self.bx.width()
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.phi
    }

    pub fn into_values(self) -> Vec<f64> {
        self.phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    SignedDistance,
    CenteredRect,
    Checkerboard,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed_distance" | "signed-distance" => Ok(Self::SignedDistance),
            "centered_rect" | "centered-rect" => Ok(Self::CenteredRect),
            "checkerboard" => Ok(Self::Checkerboard),
            other => Err(Error::invalid(format!("unknown init mode '{other}'"))),
        }
    }
}

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Length-term weight.
    pub gamma: f64,
    /// Weight of the image data term.
    pub lambda1: f64,
    /// Weight of the structural feature data term.
    pub lambda2: f64,
    /// Box-projection weight.
    pub alpha: f64,
    pub delta_t: f64,
    pub max_iters: usize,
    /// Relative objective change below which an iteration counts as converged.
    pub rel_tol: f64,
    /// Consecutive converged iterations required to stop.
    pub patience: usize,
    pub eps_curv: f64,
    pub eps_dice: f64,
    /// Decay scale of the tree filter kernel.
    pub feature_sigma: f64,
    pub init_mode: InitMode,
    pub init_scale: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-4,
            lambda1: 1.0,
            lambda2: 1.0,
            alpha: 3.0,
            delta_t: 0.5,
            max_iters: 500,
            rel_tol: 1e-6,
            patience: 10,
            eps_curv: 1e-8,
            eps_dice: 1e-6,
            feature_sigma: 0.1,
            init_mode: InitMode::SignedDistance,
            init_scale: 1.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        }
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        }
        nonneg("gamma", self.gamma)?;
        nonneg("lambda1", self.lambda1)?;
        nonneg("lambda2", self.lambda2)?;
        nonneg("alpha", self.alpha)?;
        positive("delta_t", self.delta_t)?;
        positive("rel_tol", self.rel_tol)?;
        positive("eps_curv", self.eps_curv)?;
        positive("eps_dice", self.eps_dice)?;
        positive("feature_sigma", self.feature_sigma)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.init_scale > 0.0 && self.init_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "init_scale must lie in (0, 1], got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Binary instance mask in the full-image frame plus the evolution record
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub id: u32,
    pub height: usize,
    pub width: usize,
    /// Row-major `{0, 1}` values, zero outside the annotation box.
    pub mask: Vec<u8>,
    /// Total objective after each iteration.
    pub energy_trajectory: Vec<f64>,
    pub iterations_run: usize,
    pub final_objective: f64,
    pub final_phi: LevelSetField,
}

impl InstanceMask {
    /// Thresholds `phi > 0` and embeds the result into an image frame.
    pub fn from_phi(
        phi: LevelSetField,
        height: usize,
        width: usize,
        energy_trajectory: Vec<f64>,
        final_objective: f64,
    ) -> Result<Self> {
        let bx = *phi.bbox();
        bx.check_within(height, width)?;
        let mut mask = vec![0u8; height * width];
        for r in 0..bx.height() {
            for c in 0..bx.width() {
                if phi.values()[r * bx.width() + c] > 0.0 {
                    mask[(r + bx.y0) * width + c + bx.x0] = 1;
                }
            }
        }
        Ok(Self {
            id: bx.id,
            height,
            width,
            mask,
            iterations_run: energy_trajectory.len(),
            energy_trajectory,
            final_objective,
            final_phi: phi,
        })
    }

    pub fn bbox(&self) -> &BoxAnnotation {
        self.final_phi.bbox()
    }

    pub fn area(&self) -> usize {
        self.mask.iter().map(|&v| v as usize).sum()
    }
}
