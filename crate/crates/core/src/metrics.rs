//! Evaluation metrics: torso-normalized PCK, top-1 accuracy and Spearman rank
//! correlation.

use serde::{Deserialize, Serialize};

use crate::capture::Visibility;
use crate::error::{Error, Result};
use crate::kinematics::layout::{MID_HIP, NECK};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PckConfig {
    /// Fraction of the ground-truth torso length.
    pub threshold: f64,
    /// Torso endpoints (neck, pelvis).
    pub torso: (usize, usize),
}

impl PckConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        let c = PckConfig {
            threshold,
            torso: (NECK, MID_HIP),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidInput(format!(
                "PCK threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.torso.0 == self.torso.1 {
            return Err(Error::InvalidInput("torso endpoints must differ".into()));
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Percentage of visible keypoints within `threshold ×` the frame's ground-truth
/// torso length. Frames with zero torso length are skipped.
pub fn pck(
    pred: &[Vec<[f64; 2]>],
    gt: &[Vec<[f64; 2]>],
    vis: &[Vec<Visibility>],
    config: &PckConfig,
) -> Result<f64> {
    config.validate()?;
    if pred.len() != gt.len() || vis.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "PCK inputs disagree: {} predicted, {} ground-truth, {} visibility frames",
            pred.len(),
            gt.len(),
            vis.len()
        )));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (f, ((p, g), v)) in pred.iter().zip(gt).zip(vis).enumerate() {
        if p.len() != g.len() || v.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: p.len().min(v.len()),
            });
        }
        let (a, b) = config.torso;
        if a >= g.len() || b >= g.len() {
            return Err(Error::IndexOutOfRange {
                what: "torso endpoint".into(),
                index: a.max(b),
                len: g.len(),
            });
        }
        let torso = dist(g[a], g[b]);
        if !(torso > 0.0) {
            log::warn!("PCK: frame {f} has zero torso length, skipped");
            continue;
        }
        let radius = config.threshold * torso;
        for ((pp, gg), vv) in p.iter().zip(g).zip(v) {
            if vv.is_visible() {
                total += 1;
                if dist(*pp, *gg) <= radius {
                    hits += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput(
            "PCK needs at least one visible keypoint".into(),
        ));
    }
    Ok(100.0 * hits as f64 / total as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Percentage of distributions whose argmax (lowest index on ties) equals the label.
pub fn top1(pred: &[Vec<f64>], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "top-1 needs matching nonempty inputs, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, &g)| !p.is_empty() && argmax(p) == g)
        .count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j share the mean of ranks i+1..=j
        let r = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Spearman needs two equal-length samples of at least 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in Spearman input".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "Spearman correlation of a constant ranking".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
