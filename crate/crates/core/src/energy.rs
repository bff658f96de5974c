//! Box-restricted Chan-Vese energy with a sigmoid characteristic function.

use crate::error::{Error, Result};
use crate::types::{EvolutionConfig, LevelSetField, PixelGrid};

/// Guard added to both region-mean denominators.
pub const MEAN_GUARD: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Energy of one data term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermEnergy {
    pub region_in: f64,
    pub region_out: f64,
    pub length: f64,
    pub total: f64,
}

/// λ-weighted combination of the image and feature terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub image: TermEnergy,
    pub feature: TermEnergy,
    pub total: f64,
}

/// Per-channel inside and outside means.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMeans {
    pub inside: Vec<f64>,
    pub outside: Vec<f64>,
}

fn check_frame(data: &PixelGrid, phi: &LevelSetField) -> Result<()> {
    if data.height() != phi.height() || data.width() != phi.width() {
        return Err(Error::invalid(format!(
            "data grid {}x{} does not match box {}x{}",
            data.height(),
            data.width(),
            phi.height(),
            phi.width()
        )));
    }
    Ok(())
}

pub(crate) fn sigmoid_values(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|&p| sigmoid(p)).collect()
}

/// Elementwise `σ(φ)` as a single-channel grid over the box.
pub fn sigmoid_char(phi: &LevelSetField) -> PixelGrid {
    PixelGrid::new(phi.height(), phi.width(), 1, sigmoid_values(phi.values()))
        .expect("sigmoid of finite field is finite")
}

pub(crate) fn means_from_char(data: &PixelGrid, chi: &[f64]) -> RegionMeans {
    let ch = data.channels();
    let mut num_in = vec![0.0; ch];
    let mut num_out = vec![0.0; ch];
    let (mut den_in, mut den_out) = (0.0, 0.0);
    for (px, &s) in data.data().chunks_exact(ch).zip(chi) {
        den_in += s;
        den_out += 1.0 - s;
        for k in 0..ch {
            num_in[k] += px[k] * s;
            num_out[k] += px[k] * (1.0 - s);
        }
    }
    RegionMeans {
        inside: num_in.iter().map(|n| n / (den_in + MEAN_GUARD)).collect(),
        outside: num_out.iter().map(|n| n / (den_out + MEAN_GUARD)).collect(),
    }
}

/// Sigmoid-weighted inside/outside means `(c1, c2)` per channel.
pub fn region_means(data: &PixelGrid, phi: &LevelSetField) -> Result<RegionMeans> {
    check_frame(data, phi)?;
    Ok(means_from_char(data, &sigmoid_values(phi.values())))
}

/// Forward differences of `chi` on an `h × w` frame, zero past the far borders.
#[inline]
pub(crate) fn forward_diffs(chi: &[f64], h: usize, w: usize, r: usize, c: usize) -> (f64, f64) {
    let i = r * w + c;
    let gx = if c + 1 < w { chi[i + 1] - chi[i] } else { 0.0 };
    let gy = if r + 1 < h { chi[i + w] - chi[i] } else { 0.0 };
    (gx, gy)
}

pub(crate) fn length_sum(chi: &[f64], h: usize, w: usize, eps: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let (gx, gy) = forward_diffs(chi, h, w, r, c);
            total += (gx * gx + gy * gy + eps * eps).sqrt();
        }
    }
    total
}

/// Region fit terms with the means held fixed.
pub(crate) fn region_terms(data: &PixelGrid, chi: &[f64], means: &RegionMeans) -> (f64, f64) {
    let ch = data.channels();
    let (mut r_in, mut r_out) = (0.0, 0.0);
    for (px, &s) in data.data().chunks_exact(ch).zip(chi) {
        let (mut d_in, mut d_out) = (0.0, 0.0);
        for ((v, ci), co) in px.iter().zip(&means.inside).zip(&means.outside) {
            d_in += (v - ci).powi(2);
            d_out += (v - co).powi(2);
        }
        r_in += d_in * s;
        r_out += d_out * (1.0 - s);
    }
    (r_in, r_out)
}

pub(crate) fn term_with_means(
    data: &PixelGrid,
    chi: &[f64],
    means: &RegionMeans,
    gamma: f64,
    eps_curv: f64,
) -> TermEnergy {
    let (region_in, region_out) = region_terms(data, chi, means);
    let length = gamma * length_sum(chi, data.height(), data.width(), eps_curv);
    TermEnergy {
        region_in,
        region_out,
        length,
        total: region_in + region_out + length,
    }
}

/// Chan-Vese energy of one data term with means recomputed from `phi`.
pub fn chanvese_energy(
    data: &PixelGrid,
    phi: &LevelSetField,
    gamma: f64,
    eps_curv: f64,
) -> Result<TermEnergy> {
    check_frame(data, phi)?;
    let chi = sigmoid_values(phi.values());
    let means = means_from_char(data, &chi);
    Ok(term_with_means(data, &chi, &means, gamma, eps_curv))
}

pub(crate) fn combine(
    image: TermEnergy,
    feature: TermEnergy,
    config: &EvolutionConfig,
) -> EnergyBreakdown {
    EnergyBreakdown {
        image,
        feature,
        total: config.lambda1 * image.total + config.lambda2 * feature.total,
    }
}

/// `λ1 · F(I_u) + λ2 · F(I_f)` over the box.
pub fn combined_energy(
    image_term: &PixelGrid,
    feature_term: &PixelGrid,
    phi: &LevelSetField,
    config: &EvolutionConfig,
) -> Result<EnergyBreakdown> {
    let image = chanvese_energy(image_term, phi, config.gamma, config.eps_curv)?;
    let feature = chanvese_energy(feature_term, phi, config.gamma, config.eps_curv)?;
    Ok(combine(image, feature, config))
}
