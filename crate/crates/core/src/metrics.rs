use crate::error::{Error, Result};
use crate::types::InstanceMask;

/// Intersection over union of two `{0, 1}` masks; 1 when both are empty.
pub fn mask_iou(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "mask sizes differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (p != 0, t != 0);
        inter += usize::from(p && t);
        union += usize::from(p || t);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn evaluate_iou(pred: &InstanceMask, truth: &[u8]) -> Result<f64> {
    mask_iou(&pred.mask, truth)
}
