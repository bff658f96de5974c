//! Full-image segmentation: data terms, independent per-box evolution and
//! overlap resolution.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::energy::sigmoid;
use crate::error::{Error, Result};
use crate::evolution::{init_values, initialize_phi, InstanceProblem};
use crate::features::{build_feature_stack, normalize_image};
use crate::types::{crop, BoxAnnotation, EvolutionConfig, InstanceMask, LevelSetField, PixelGrid};

/// Evolution that failed for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFailure {
    pub id: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub height: usize,
    pub width: usize,
    /// Successful instances in ascending id order.
    pub masks: Vec<InstanceMask>,
    pub failures: Vec<InstanceFailure>,
    /// Mean final objective over the successful instances.
    pub mean_objective: f64,
    /// Row-major instance ids, 0 for background.
    pub label_map: Vec<u32>,
}

impl SegmentationResult {
    pub fn mask(&self, id: u32) -> Option<&InstanceMask> {
        self.masks.iter().find(|m| m.id == id)
    }
}

/// Normalized image and tree-filtered feature stack for a raw image.
pub fn prepare_data_terms(
    image: &PixelGrid,
    config: &EvolutionConfig,
) -> Result<(PixelGrid, PixelGrid)> {
    let normalized = normalize_image(image);
    let features = build_feature_stack(&normalized, config)?;
    Ok((normalized, features.grid))
}

fn validate_boxes(image: &PixelGrid, boxes: &[BoxAnnotation]) -> Result<()> {
    if boxes.is_empty() {
        return Err(Error::invalid("at least one box is required"));
    }
    let mut seen = HashSet::new();
    for b in boxes {
        if b.id == 0 {
            return Err(Error::invalid("instance id 0 is reserved for background"));
        }
        if !seen.insert(b.id) {
            return Err(Error::invalid(format!("duplicate instance id {}", b.id)));
        }
        b.check_within(image.height(), image.width())?;
    }
    Ok(())
}

fn segment_instance(
    bx: &BoxAnnotation,
    image_term: &PixelGrid,
    feature_term: &PixelGrid,
    config: &EvolutionConfig,
) -> Result<InstanceMask> {
    let iu = crop(image_term, bx)?;
    let ifeat = crop(feature_term, bx)?;
    let problem = InstanceProblem::new(&iu, &ifeat, config)?;
    let outcome = problem.run(initialize_phi(bx, config.init_mode, config.init_scale))?;
    InstanceMask::from_phi(
        outcome.state.phi,
        image_term.height(),
        image_term.width(),
        outcome.trajectory,
        outcome.state.total_objective,
    )
}

/// Segments every box of `image` independently; the result does not depend
/// on the order of `boxes`.
pub fn segment_image(
    image: &PixelGrid,
    boxes: &[BoxAnnotation],
    config: &EvolutionConfig,
) -> Result<SegmentationResult> {
    config.validate()?;
    validate_boxes(image, boxes)?;
    let (image_term, feature_term) = prepare_data_terms(image, config)?;

    let mut sorted = boxes.to_vec();
    sorted.sort_by_key(|b| b.id);
    let outcomes: Vec<(u32, Result<InstanceMask>)> = sorted
        .par_iter()
        .map(|b| {
            (
                b.id,
                segment_instance(b, &image_term, &feature_term, config),
            )
        })
        .collect();

    let mut masks = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (id, r) in outcomes {
        match r {
            Ok(m) => masks.push(m),
            Err(e) => failures.push(InstanceFailure {
                id,
                message: e.to_string(),
            }),
        }
    }

    let mean_objective = if masks.is_empty() {
        f64::NAN
    } else {
        masks.iter().map(|m| m.final_objective).sum::<f64>() / masks.len() as f64
    };
    let label_map = resolve_labels(image.height(), image.width(), &masks);

    Ok(SegmentationResult {
        height: image.height(),
        width: image.width(),
        masks,
        failures,
        mean_objective,
        label_map,
    })
}

/// Assigns each foreground pixel to the instance with the largest `σ(φ)`
/// there, ties to the smaller id. `masks` must be in ascending id order.
pub fn resolve_labels(height: usize, width: usize, masks: &[InstanceMask]) -> Vec<u32> {
    let mut labels = vec![0u32; height * width];
    let mut best = vec![f64::NEG_INFINITY; height * width];
    for m in masks {
        let b = m.bbox();
        let phi = m.final_phi.values();
        for r in b.y0..b.y1 {
            for c in b.x0..b.x1 {
                let i = r * width + c;
                if m.mask[i] == 0 {
                    continue;
                }
                let s = sigmoid(phi[(r - b.y0) * b.width() + (c - b.x0)]);
                if s > best[i] {
                    best[i] = s;
                    labels[i] = m.id;
                }
            }
        }
    }
    labels
}

/// Evolves one instance with every integral taken over the whole image
/// instead of the box; the box only enters through the projection term.
/// Returns the full-frame `{0, 1}` mask. Exists for ablation tests.
#[doc(hidden)]
pub fn segment_instance_unrestricted(
    image: &PixelGrid,
    bx: &BoxAnnotation,
    config: &EvolutionConfig,
) -> Result<Vec<u8>> {
    config.validate()?;
    validate_boxes(image, std::slice::from_ref(bx))?;
    let (h, w) = (image.height(), image.width());
    let (image_term, feature_term) = prepare_data_terms(image, config)?;
    let region = PixelGrid::from_fn(h, w, 1, |r, c, _| if bx.contains(r, c) { 1.0 } else { 0.0 })?;
    let problem = InstanceProblem::with_box_region(&image_term, &feature_term, region, config)?;

    let local = initialize_phi(bx, config.init_mode, config.init_scale);
    let seed = {
        // recover the seed rectangle from the local initialization
        let vals = local.values();
        let inside: Vec<(usize, usize)> = (0..bx.area())
            .filter(|&i| vals[i] >= 0.0)
            .map(|i| (i / bx.width() + bx.y0, i % bx.width() + bx.x0))
            .collect();
        let r0 = inside.iter().map(|p| p.0).min().unwrap_or(bx.y0);
        let r1 = inside.iter().map(|p| p.0).max().unwrap_or(bx.y1 - 1);
        let c0 = inside.iter().map(|p| p.1).min().unwrap_or(bx.x0);
        let c1 = inside.iter().map(|p| p.1).max().unwrap_or(bx.x1 - 1);
        (r0, r1, c0, c1)
    };
    let full = BoxAnnotation::full(bx.id, h, w)?;
    let phi0 = LevelSetField::new(full, init_values(h, w, seed, config.init_mode))?;
    let outcome = problem.run(phi0)?;
    Ok(outcome
        .state
        .phi
        .values()
        .iter()
        .map(|&p| u8::from(p > 0.0))
        .collect())
}
