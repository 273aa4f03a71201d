use super::{AnnotatedClip, AnnotatedFrame};
use crate::capture::Visibility;
use crate::error::{Error, Result};

/// Frame count clips are resampled to before parsing.
pub const CLIP_FRAMES: usize = 90;

fn combine(a: Visibility, b: Visibility) -> Visibility {
    use Visibility::*;
    match (a, b) {
        (Visible, Visible) => Visible,
        (Unlabeled, _) | (_, Unlabeled) => Unlabeled,
        _ => Occluded,
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    if f == 0.0 {
        a
    } else {
        a + (b - a) * f
    }
}

/// Resamples a clip to `target` frames on a uniform time grid.
///
/// Keypoints are linearly interpolated; visibility is visible only when both
/// bracketing frames are visible; labels come from the nearest frame (earlier frame
/// on a tie). Coefficients are interpolated when both bracketing frames share a
/// sub-motion and copied from the nearest frame otherwise.
pub fn resample_clip(clip: &AnnotatedClip, target: usize) -> Result<AnnotatedClip> {
    let n = clip.frames.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 frames, got {n}"
        )));
    }
    if target < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling target must be at least 2, got {target}"
        )));
    }
    let mut frames = Vec::with_capacity(target);
    for j in 0..target {
        let pos = (j * (n - 1)) as f64 / (target - 1) as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let f = pos - i as f64;
        let a = &clip.frames[i];
        let b = &clip.frames[(i + 1).min(n - 1)];
        let nearest = if f > 0.5 { b } else { a };
        let keypoints = a
            .keypoints
            .iter()
            .zip(&b.keypoints)
            .map(|(p, q)| [lerp(p[0], q[0], f), lerp(p[1], q[1], f)])
            .collect();
        let visibility = if f == 0.0 {
            a.visibility.clone()
        } else {
            a.visibility
                .iter()
                .zip(&b.visibility)
                .map(|(&x, &y)| combine(x, y))
                .collect()
        };
        let alpha = match (&a.alpha, &b.alpha) {
            (Some(x), Some(y)) if a.submotion == b.submotion && x.len() == y.len() => {
                Some(x.iter().zip(y).map(|(p, q)| lerp(*p, *q, f)).collect())
            }
            _ => nearest.alpha.clone(),
        };
        frames.push(AnnotatedFrame {
            keypoints,
            visibility,
            submotion: nearest.submotion.clone(),
            alpha,
        });
    }
    Ok(AnnotatedClip {
        frames,
        attributes: clip.attributes.clone(),
        action: clip.action,
        score: clip.score,
    })
}
