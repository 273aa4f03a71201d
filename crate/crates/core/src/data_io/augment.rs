use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AnnotatedClip;
use crate::kinematics::layout::keypoint_flip_permutation;
use crate::kinematics::NUM_KEYPOINTS;

/// Ranges for random clip augmentation. Ranges with equal ends are constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rotation_deg: [f64; 2],
    pub scale: [f64; 2],
    pub flip_probability: f64,
    /// Multiply pose coefficients by the sampled scale as well.
    pub scale_coefficients: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: [-45.0, 45.0],
            scale: [0.7, 1.3],
            flip_probability: 0.5,
            scale_coefficients: true,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            rotation_deg: [0.0, 0.0],
            scale: [1.0, 1.0],
            flip_probability: 0.0,
            scale_coefficients: true,
        }
    }
}

fn sample(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] < range[1] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn centroid(clip: &AnnotatedClip) -> [f64; 2] {
    let mut sum = [0.0; 2];
    let mut n = 0usize;
    for f in &clip.frames {
        for (k, v) in f.keypoints.iter().zip(&f.visibility) {
            if v.is_visible() {
                sum[0] += k[0];
                sum[1] += k[1];
                n += 1;
            }
        }
    }
    if n == 0 {
        return [0.0; 2];
    }
    [sum[0] / n as f64, sum[1] / n as f64]
}

/// Mirrors a clip horizontally about its keypoint centroid and swaps left/right
/// keypoints. Clips without the 25-keypoint layout are mirrored without swapping.
pub fn flip_clip(clip: &AnnotatedClip) -> AnnotatedClip {
    let c = centroid(clip);
    let perm = keypoint_flip_permutation();
    let mut out = clip.clone();
    for f in &mut out.frames {
        let swap = f.keypoints.len() == NUM_KEYPOINTS;
        let kp = f.keypoints.clone();
        let vis = f.visibility.clone();
        for i in 0..kp.len() {
            let src = if swap { perm[i] } else { i };
            f.keypoints[i] = [c[0] - (kp[src][0] - c[0]), kp[src][1]];
            f.visibility[i] = vis[src];
        }
    }
    out
}

/// Random rotation, scaling and horizontal flip about the clip centroid.
///
/// Visibility flags move with their keypoints, so visible counts are preserved. Pose
/// coefficients are left unchanged by the flip.
pub fn augment(clip: &AnnotatedClip, config: &AugmentConfig, rng: &mut impl Rng) -> AnnotatedClip {
    let angle = sample(rng, config.rotation_deg).to_radians();
    let scale = sample(rng, config.scale);
    let flip = config.flip_probability > 0.0 && rng.gen::<f64>() < config.flip_probability;

    let mut out = if flip { flip_clip(clip) } else { clip.clone() };
    if angle == 0.0 && scale == 1.0 {
        return out;
    }
    let c = centroid(&out);
    let (sin, cos) = angle.sin_cos();
    for f in &mut out.frames {
        for k in &mut f.keypoints {
            let dx = k[0] - c[0];
            let dy = k[1] - c[1];
            *k = [
                c[0] + scale * (cos * dx - sin * dy),
                c[1] + scale * (sin * dx + cos * dy),
            ];
        }
        if config.scale_coefficients {
            if let Some(a) = &mut f.alpha {
                a.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::Visibility;
    use crate::data_io::AnnotatedFrame;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clip() -> AnnotatedClip {
        let frames = (0..3)
            .map(|t| AnnotatedFrame {
                keypoints: (0..25)
                    .map(|i| [100.0 + 3.0 * i as f64 + t as f64, 50.0 + (i * i % 7) as f64])
                    .collect(),
                visibility: (0..25)
                    .map(|i| {
                        if i % 6 == 0 {
                            Visibility::Occluded
                        } else {
                            Visibility::Visible
                        }
                    })
                    .collect(),
                submotion: "twist".into(),
                alpha: Some(vec![0.5, -1.0]),
            })
            .collect();
        AnnotatedClip {
            frames,
            attributes: vec![1],
            action: 2,
            score: 60.0,
        }
    }

    #[test]
    fn identity_config_is_noop() {
        let c = clip();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&c, &AugmentConfig::identity(), &mut rng), c);
    }

    #[test]
    fn double_flip_is_identity() {
        let c = clip();
        let back = flip_clip(&flip_clip(&c));
        for (a, b) in back.frames.iter().zip(&c.frames) {
            assert_eq!(a.visibility, b.visibility);
            for (p, q) in a.keypoints.iter().zip(&b.keypoints) {
                assert!((p[0] - q[0]).abs() < 1e-12 && p[1] == q[1]);
            }
        }
    }

    #[test]
    fn flip_swaps_left_and_right() {
        let c = clip();
        let f = flip_clip(&c);
        // right shoulder (2) takes the mirrored left shoulder (5)
        let cx = centroid(&c)[0];
        let expected = 2.0 * cx - c.frames[0].keypoints[5][0];
        assert!((f.frames[0].keypoints[2][0] - expected).abs() < 1e-9);
    }

    #[test]
    fn augmentation_preserves_visible_counts_and_labels() {
        let c = clip();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = augment(&c, &AugmentConfig::default(), &mut rng);
            for (x, y) in a.frames.iter().zip(&c.frames) {
                let cx = x.visibility.iter().filter(|v| v.is_visible()).count();
                let cy = y.visibility.iter().filter(|v| v.is_visible()).count();
                assert_eq!(cx, cy);
                assert_eq!(x.submotion, y.submotion);
            }
            assert_eq!(a.attributes, c.attributes);
            assert_eq!(a.action, c.action);
        }
    }

    #[test]
    fn rotation_and_scale_preserve_centroid_and_scale_distances() {
        let c = clip();
        let cfg = AugmentConfig {
            rotation_deg: [30.0, 30.0],
            scale: [1.25, 1.25],
            flip_probability: 0.0,
            scale_coefficients: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = augment(&c, &cfg, &mut rng);
        let d = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let before = d(c.frames[0].keypoints[1], c.frames[0].keypoints[8]);
        let after = d(a.frames[0].keypoints[1], a.frames[0].keypoints[8]);
        assert!((after - 1.25 * before).abs() < 1e-9);
        let (c0, c1) = (centroid(&c), centroid(&a));
        assert!((c0[0] - c1[0]).abs() < 1e-9 && (c0[1] - c1[1]).abs() < 1e-9);
        assert_eq!(a.frames[0].alpha, Some(vec![0.625, -1.25]));
    }
}
