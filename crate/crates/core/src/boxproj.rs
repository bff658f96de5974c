//! Box projection term: compares the max-projections of a soft mask onto
//! the x and y axes with those of the box region under a 1-D dice loss.

use crate::error::{Error, Result};
use crate::types::PixelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// One value per column.
    X,
    /// One value per row.
    Y,
}

/// Maximum per column (`X`) or per row (`Y`) together with the linear index
/// of the first pixel attaining it.
fn projection_with_argmax(
    values: &[f64],
    h: usize,
    w: usize,
    axis: Axis,
) -> (Vec<f64>, Vec<usize>) {
    let (outer, inner) = match axis {
        Axis::X => (w, h),
        Axis::Y => (h, w),
    };
    let mut maxima = Vec::with_capacity(outer);
    let mut argmax = Vec::with_capacity(outer);
    for o in 0..outer {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0;
        for i in 0..inner {
            let idx = match axis {
                Axis::X => i * w + o,
                Axis::Y => o * w + i,
            };
            if values[idx] > best {
                best = values[idx];
                best_idx = idx;
            }
        }
        maxima.push(best);
        argmax.push(best_idx);
    }
    (maxima, argmax)
}

fn single_channel(grid: &PixelGrid, what: &str) -> Result<()> {
    if grid.channels() != 1 {
        return Err(Error::invalid(format!(
            "{what} must be single-channel, got {} channels",
            grid.channels()
        )));
    }
    Ok(())
}

pub fn axis_projection(mask: &PixelGrid, axis: Axis) -> Result<Vec<f64>> {
    single_channel(mask, "mask")?;
    Ok(projection_with_argmax(mask.data(), mask.height(), mask.width(), axis).0)
}

/// `2 Σ p q / (Σ p² + Σ q² + eps)`.
pub fn dice_1d(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "dice operands differ in length: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let (num, den) = dice_parts(p, q, eps);
    Ok(num / den)
}

fn dice_parts(p: &[f64], q: &[f64], eps: f64) -> (f64, f64) {
    let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let qq: f64 = q.iter().map(|b| b * b).sum();
    (2.0 * pq, pp + qq + eps)
}

/// `∂(1 - dice)/∂p_i`.
fn dice_loss_grad(p: &[f64], q: &[f64], eps: f64) -> Vec<f64> {
    let (num, den) = dice_parts(p, q, eps);
    p.iter()
        .zip(q)
        .map(|(pi, qi)| -(2.0 * qi * den - num * 2.0 * pi) / (den * den))
        .collect()
}

/// Loss and gradient over raw row-major planes.
pub(crate) fn loss_and_gradient(
    mask: &[f64],
    region: &[f64],
    h: usize,
    w: usize,
    eps: f64,
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; h * w];
    for axis in [Axis::X, Axis::Y] {
        let (p, arg) = projection_with_argmax(mask, h, w, axis);
        let (q, _) = projection_with_argmax(region, h, w, axis);
        let (num, den) = dice_parts(&p, &q, eps);
        loss += 1.0 - num / den;
        for (g, idx) in dice_loss_grad(&p, &q, eps).into_iter().zip(arg) {
            grad[idx] += g;
        }
    }
    (loss, grad)
}

pub(crate) fn loss_only(mask: &[f64], region: &[f64], h: usize, w: usize, eps: f64) -> f64 {
    [Axis::X, Axis::Y]
        .into_iter()
        .map(|axis| {
            let (p, _) = projection_with_argmax(mask, h, w, axis);
            let (q, _) = projection_with_argmax(region, h, w, axis);
            let (num, den) = dice_parts(&p, &q, eps);
            1.0 - num / den
        })
        .sum()
}

fn check_pair(mask: &PixelGrid, region: &PixelGrid) -> Result<()> {
    single_channel(mask, "mask")?;
    single_channel(region, "box region")?;
    if mask.height() != region.height() || mask.width() != region.width() {
        return Err(Error::invalid(format!(
            "mask {}x{} and box region {}x{} differ",
            mask.height(),
            mask.width(),
            region.height(),
            region.width()
        )));
    }
    Ok(())
}

/// `(1 - dice_x) + (1 - dice_y)`, in `[0, 2]`.
pub fn box_projection_loss(mask: &PixelGrid, box_region: &PixelGrid, eps_dice: f64) -> Result<f64> {
    check_pair(mask, box_region)?;
    Ok(loss_only(
        mask.data(),
        box_region.data(),
        mask.height(),
        mask.width(),
        eps_dice,
    ))
}

/// Gradient of [`box_projection_loss`] with respect to the mask, routed to
/// the first arg-max pixel of every column and row.
pub fn box_projection_gradient(
    mask: &PixelGrid,
    box_region: &PixelGrid,
    eps_dice: f64,
) -> Result<PixelGrid> {
    check_pair(mask, box_region)?;
    let (_, grad) = loss_and_gradient(
        mask.data(),
        box_region.data(),
        mask.height(),
        mask.width(),
        eps_dice,
    );
    PixelGrid::new(mask.height(), mask.width(), 1, grad)
}
