//! Rigid kinematic body model: axis-angle forward kinematics with linear shape
//! offsets, a linear keypoint regressor and a weak-perspective camera.

pub mod layout;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 24;
pub const POSE_DIM: usize = 3 * NUM_JOINTS;
pub const SHAPE_DIM: usize = 10;
pub const NUM_KEYPOINTS: usize = 25;

/// Synthetic range for shape coefficients.
pub const SHAPE_LIMIT: f64 = 5.0;

pub type Joints3D = Vec<[f64; 3]>;
pub type Keypoints2D = Vec<[f64; 2]>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDef {
    pub name: String,
    pub parent: i64,
    pub offset: [f64; 3],
}

/// Kinematic tree, shape directions and keypoint regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDef {
    pub joints: Vec<JointDef>,
    /// One flattened `3N` offset delta per shape coefficient.
    pub shape_basis: Vec<Vec<f64>>,
    /// `keypoints x joints`, rows are convex weights.
    pub keypoint_regressor: Vec<Vec<f64>>,
}

impl SkeletonDef {
    /// The built-in 24-joint body with a 25-keypoint regressor.
    pub fn standard() -> Self {
        let joints = layout::JOINT_NAMES
            .iter()
            .zip(layout::JOINT_PARENTS)
            .zip(layout::REST_OFFSETS)
            .map(|((name, parent), offset)| JointDef {
                name: name.to_string(),
                parent,
                offset,
            })
            .collect();
        let shape_basis = layout::shape_directions()
            .into_iter()
            .map(|d| d.iter().flatten().copied().collect())
            .collect();
        let keypoint_regressor = layout::keypoint_regressor_weights()
            .into_iter()
            .map(|row| {
                let mut r = vec![0.0; NUM_JOINTS];
                for (j, w) in row {
                    r[j] = w;
                }
                r
            })
            .collect();
        SkeletonDef {
            joints,
            shape_basis,
            keypoint_regressor,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn pose_dim(&self) -> usize {
        3 * self.joints.len()
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoint_regressor.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if self.joints[0].parent != -1 {
            return Err(Error::InvalidSkeleton(
                "joint 0 must be the root (parent -1)".into(),
            ));
        }
        for (i, j) in self.joints.iter().enumerate().skip(1) {
            if j.parent < 0 || j.parent as usize >= i {
                return Err(Error::InvalidSkeleton(format!(
                    "joint {i} ({}) has parent {}, must precede it",
                    j.name, j.parent
                )));
            }
        }
        if self
            .joints
            .iter()
            .any(|j| j.offset.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidSkeleton("non-finite rest offset".into()));
        }
        for (k, s) in self.shape_basis.iter().enumerate() {
            if s.len() != 3 * n {
                return Err(Error::InvalidSkeleton(format!(
                    "shape direction {k} has {} entries, expected {}",
                    s.len(),
                    3 * n
                )));
            }
        }
        if self.keypoint_regressor.is_empty() {
            return Err(Error::InvalidSkeleton("empty keypoint regressor".into()));
        }
        for (k, row) in self.keypoint_regressor.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidSkeleton(format!(
                    "regressor row {k} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "regressor row {k} is not a convex combination (sum {total})"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let skel: SkeletonDef = serde_json::from_str(text)?;
        skel.validate()?;
        Ok(skel)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn has_children(&self) -> Vec<bool> {
        let mut out = vec![false; self.joints.len()];
        for j in &self.joints[1..] {
            out[j.parent as usize] = true;
        }
        out
    }

    pub(crate) fn rest_tensor(&self) -> Tensor {
        let data = self.joints.iter().flat_map(|j| j.offset).collect();
        Tensor::from_parts(vec![self.joints.len(), 3], data)
    }

    pub(crate) fn shape_basis_tensor(&self) -> Option<Tensor> {
        if self.shape_basis.is_empty() {
            return None;
        }
        Some(Tensor::from_parts(
            vec![self.shape_basis.len(), self.pose_dim()],
            self.shape_basis.concat(),
        ))
    }

    pub(crate) fn regressor_tensor(&self) -> Tensor {
        Tensor::from_parts(
            vec![self.num_keypoints(), self.joints.len()],
            self.keypoint_regressor.concat(),
        )
    }
}

/// Concatenated per-joint axis-angle rotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseVector(pub Vec<f64>);

impl PoseVector {
    pub fn zeros(num_joints: usize) -> Self {
        PoseVector(vec![0.0; 3 * num_joints])
    }

    pub fn new(theta: Vec<f64>, num_joints: usize) -> Result<Self> {
        if theta.len() != 3 * num_joints {
            return Err(Error::DimensionMismatch {
                expected: 3 * num_joints,
                got: theta.len(),
            });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("pose vector".into()));
        }
        Ok(PoseVector(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn joint(&self, i: usize) -> [f64; 3] {
        [self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2]]
    }

    /// Reduces every rotation angle into `[0, 2π)`, preserving the rotation.
    pub fn canonicalize(&mut self) {
        use std::f64::consts::TAU;
        for v in self.0.chunks_mut(3) {
            let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if angle >= TAU {
                let reduced = angle.rem_euclid(TAU);
                for x in v.iter_mut() {
                    *x *= reduced / angle;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeVector(pub Vec<f64>);

impl ShapeVector {
    pub fn zeros(dim: usize) -> Self {
        ShapeVector(vec![0.0; dim])
    }

    pub fn clamp(&mut self) {
        for b in &mut self.0 {
            *b = b.clamp(-SHAPE_LIMIT, SHAPE_LIMIT);
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Weak-perspective camera: pixels = `s * (x, y) + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub s: f64,
    pub t: [f64; 2],
}

impl CameraParams {
    pub fn new(s: f64, t: [f64; 2]) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() || t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "camera scale must be positive, got {s}"
            )));
        }
        Ok(CameraParams { s, t })
    }
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(axis_angle: [f64; 3]) -> [[f64; 3]; 3] {
    let r = kernels::rodrigues(axis_angle);
    [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]
}

/// Constant skeleton tensors placed on a tape once per evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SkeletonVars {
    rest: Var,
    shape_basis: Option<Var>,
    regressor: Var,
}

impl SkeletonVars {
    pub fn new(tape: &mut Tape, skel: &SkeletonDef) -> Self {
        SkeletonVars {
            rest: tape.constant(skel.rest_tensor()),
            shape_basis: skel.shape_basis_tensor().map(|t| tape.constant(t)),
            regressor: tape.constant(skel.regressor_tensor()),
        }
    }
}

/// Differentiable forward kinematics: `theta [3N]`, `beta [S]` to joints `[N, 3]`.
///
/// Joint `i` sits at its parent plus the parent's accumulated rotation applied to
/// the shaped rest offset; the root sits at its own offset.
pub fn forward_kinematics_on_tape(
    tape: &mut Tape,
    skel: &SkeletonDef,
    vars: &SkeletonVars,
    theta: Var,
    beta: Var,
) -> Result<Var> {
    let n = skel.num_joints();
    if tape.value(theta).len() != 3 * n {
        return Err(Error::DimensionMismatch {
            expected: 3 * n,
            got: tape.value(theta).len(),
        });
    }
    let offsets = match vars.shape_basis {
        Some(basis) => {
            let s = tape.value(basis).shape()[0];
            if tape.value(beta).len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: tape.value(beta).len(),
                });
            }
            let b = tape.reshape(beta, &[1, s])?;
            let delta = tape.matmul(b, basis)?;
            let delta = tape.reshape(delta, &[n, 3])?;
            tape.add(vars.rest, delta)?
        }
        None => vars.rest,
    };
    let has_children = skel.has_children();
    let mut global_rot: Vec<Option<Var>> = vec![None; n];
    let mut positions: Vec<Var> = Vec::with_capacity(n);
    for i in 0..n {
        let off = tape.slice(offsets, 0, i, i + 1)?;
        let local = if has_children[i] {
            let v = tape.slice(theta, 0, 3 * i, 3 * i + 3)?;
            Some(tape.rodrigues(v)?)
        } else {
            None
        };
        if i == 0 {
            positions.push(off);
            global_rot[0] = local;
            continue;
        }
        let p = skel.joints[i].parent as usize;
        let parent_rot = global_rot[p].expect("parents with children carry a rotation");
        let col = tape.reshape(off, &[3, 1])?;
        let rotated = tape.matmul(parent_rot, col)?;
        let rotated = tape.reshape(rotated, &[1, 3])?;
        positions.push(tape.add(positions[p], rotated)?);
        if let Some(local) = local {
            global_rot[i] = Some(tape.matmul(parent_rot, local)?);
        }
    }
    tape.concat(&positions, 0)
}

/// Differentiable weak-perspective projection of regressed keypoints:
/// `s * drop_z(regressor * joints) + t`, with `s` of shape `[1]` and `t` of shape `[2]`.
pub fn project_on_tape(
    tape: &mut Tape,
    vars: &SkeletonVars,
    joints: Var,
    s: Var,
    t: Var,
) -> Result<Var> {
    let kp3 = tape.matmul(vars.regressor, joints)?;
    let k = tape.shape(kp3)[0];
    let xy = tape.slice(kp3, 1, 0, 2)?;
    let col = tape.reshape(xy, &[2 * k, 1])?;
    let s = tape.reshape(s, &[1, 1])?;
    let scaled = tape.matmul(col, s)?;
    let scaled = tape.reshape(scaled, &[k, 2])?;
    tape.add(scaled, t)
}

/// 3D joint positions for a pose and shape, in meters.
pub fn forward_kinematics(
    skel: &SkeletonDef,
    theta: &PoseVector,
    beta: &ShapeVector,
) -> Result<Joints3D> {
    if theta.0.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("NaN in pose vector".into()));
    }
    let mut tape = Tape::new();
    let vars = SkeletonVars::new(&mut tape, skel);
    let th = tape.constant(Tensor::new(vec![theta.0.len()], theta.0.clone())?);
    let be = if beta.0.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        tape.constant(Tensor::new(vec![beta.0.len()], beta.0.clone())?)
    };
    let joints = forward_kinematics_on_tape(&mut tape, skel, &vars, th, be)?;
    Ok(tape
        .value(joints)
        .data()
        .chunks(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect())
}

/// Regresses keypoints from joints and projects them with a weak-perspective camera.
pub fn project(joints: &[[f64; 3]], cam: &CameraParams, regressor: &[Vec<f64>]) -> Keypoints2D {
    regressor
        .iter()
        .map(|row| {
            let mut p = [0.0; 3];
            for (w, j) in row.iter().zip(joints) {
                for c in 0..3 {
                    p[c] += w * j[c];
                }
            }
            [cam.s * p[0] + cam.t[0], cam.s * p[1] + cam.t[1]]
        })
        .collect()
}

/// Convenience: pose and shape straight to projected keypoints.
pub fn render_keypoints(
    skel: &SkeletonDef,
    theta: &PoseVector,
    beta: &ShapeVector,
    cam: &CameraParams,
) -> Result<Keypoints2D> {
    let joints = forward_kinematics(skel, theta, beta)?;
    Ok(project(&joints, cam, &skel.keypoint_regressor))
}
