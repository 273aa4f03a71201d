//! Built-in joint and keypoint layouts.
//!
//! Model joints follow the 24-joint SMPL ordering. Annotation keypoints follow the
//! 25-keypoint OpenPose BODY_25 ordering.

/// Model joint names, index order.
pub const JOINT_NAMES: [&str; 24] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const JOINT_PARENTS: [i64; 24] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

/// Rest offsets from parent, meters. `+y` up, `+x` toward the body's left, `+z` forward.
pub const REST_OFFSETS: [[f64; 3]; 24] = [
    [0.0, 0.0, 0.0],
    [0.07, -0.09, 0.0],
    [-0.07, -0.09, 0.0],
    [0.0, 0.11, -0.01],
    [0.03, -0.38, 0.0],
    [-0.03, -0.38, 0.0],
    [0.0, 0.13, 0.0],
    [-0.01, -0.40, -0.03],
    [0.01, -0.40, -0.03],
    [0.0, 0.05, 0.02],
    [0.02, -0.05, 0.12],
    [-0.02, -0.05, 0.12],
    [0.0, 0.21, -0.03],
    [0.07, 0.12, -0.01],
    [-0.07, 0.12, -0.01],
    [0.0, 0.09, 0.05],
    [0.11, 0.04, -0.01],
    [-0.11, 0.04, -0.01],
    [0.26, 0.0, -0.02],
    [-0.26, 0.0, -0.02],
    [0.25, 0.01, 0.0],
    [-0.25, 0.01, 0.0],
    [0.08, -0.01, -0.01],
    [-0.08, -0.01, -0.01],
];

pub const KEYPOINT_NAMES: [&str; 25] = [
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "mid_hip",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
    "left_big_toe",
    "left_small_toe",
    "left_heel",
    "right_big_toe",
    "right_small_toe",
    "right_heel",
];

pub const NECK: usize = 1;
pub const MID_HIP: usize = 8;

/// Keypoint bones as (parent, child) pairs of a tree rooted at the mid hip.
pub const KEYPOINT_EDGES: [(usize, usize); 24] = [
    (8, 1),
    (1, 0),
    (1, 2),
    (2, 3),
    (3, 4),
    (1, 5),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

/// Left/right keypoint pairs swapped by a horizontal flip.
pub const KEYPOINT_FLIP_PAIRS: [(usize, usize); 11] = [
    (2, 5),
    (3, 6),
    (4, 7),
    (9, 12),
    (10, 13),
    (11, 14),
    (15, 16),
    (17, 18),
    (19, 22),
    (20, 23),
    (21, 24),
];

/// Permutation applying [`KEYPOINT_FLIP_PAIRS`].
pub fn keypoint_flip_permutation() -> [usize; 25] {
    let mut perm: [usize; 25] = std::array::from_fn(|i| i);
    for &(a, b) in &KEYPOINT_FLIP_PAIRS {
        perm[a] = b;
        perm[b] = a;
    }
    perm
}

/// Hand-built convex regressor: each keypoint as weighted model joints.
/// Face and foot points are blends; the rest map to a single joint.
pub fn keypoint_regressor_weights() -> Vec<Vec<(usize, f64)>> {
    vec![
        vec![(15, 0.85), (12, 0.15)],
        vec![(12, 1.0)],
        vec![(17, 1.0)],
        vec![(19, 1.0)],
        vec![(21, 1.0)],
        vec![(16, 1.0)],
        vec![(18, 1.0)],
        vec![(20, 1.0)],
        vec![(0, 1.0)],
        vec![(2, 1.0)],
        vec![(5, 1.0)],
        vec![(8, 1.0)],
        vec![(1, 1.0)],
        vec![(4, 1.0)],
        vec![(7, 1.0)],
        vec![(15, 0.9), (14, 0.1)],
        vec![(15, 0.9), (13, 0.1)],
        vec![(15, 0.8), (14, 0.2)],
        vec![(15, 0.8), (13, 0.2)],
        vec![(10, 1.0)],
        vec![(10, 0.7), (7, 0.3)],
        vec![(7, 0.85), (10, 0.15)],
        vec![(11, 1.0)],
        vec![(11, 0.7), (8, 0.3)],
        vec![(8, 0.85), (11, 0.15)],
    ]
}

/// Ten linear shape directions, each a per-joint offset delta.
/// Every direction lengthens or widens a body part; none scales the whole body.
pub fn shape_directions() -> Vec<[[f64; 3]; 24]> {
    let scaled = |joints: &[(usize, f64)], mask: [f64; 3]| {
        let mut d = [[0.0; 3]; 24];
        for &(j, f) in joints {
            for c in 0..3 {
                d[j][c] = 0.1 * f * REST_OFFSETS[j][c] * mask[c];
            }
        }
        d
    };
    let all = [1.0, 1.0, 1.0];
    let x_only = [1.0, 0.0, 0.0];
    vec![
        scaled(&[(4, 1.0), (5, 1.0), (7, 1.0), (8, 1.0)], all),
        scaled(&[(18, 1.0), (19, 1.0), (20, 1.0), (21, 1.0)], all),
        scaled(&[(16, 1.0), (17, 1.0)], x_only),
        scaled(&[(1, 1.0), (2, 1.0)], x_only),
        scaled(&[(12, 1.0), (15, 1.0)], all),
        scaled(&[(4, 1.0), (7, 1.0), (5, -1.0), (8, -1.0)], all),
        scaled(&[(10, 1.0), (11, 1.0)], all),
        scaled(&[(6, 1.0), (9, 1.0)], all),
        scaled(&[(13, 1.0), (14, 1.0)], all),
        scaled(&[(18, 1.0), (20, 1.0), (19, -1.0), (21, -1.0)], all),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_permutation_is_an_involution() {
        let p = keypoint_flip_permutation();
        for i in 0..25 {
            assert_eq!(p[p[i]], i);
        }
    }

    #[test]
    fn keypoint_edges_form_a_tree() {
        let mut seen = [false; 25];
        seen[MID_HIP] = true;
        for &(p, c) in &KEYPOINT_EDGES {
            assert!(seen[p], "parent {p} before child {c}");
            assert!(!seen[c]);
            seen[c] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
