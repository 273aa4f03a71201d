use serde::{Deserialize, Serialize};

use super::{CaptureState, ObservedFrame, Supervision};
use crate::autodiff::{Tape, Tensor, Var};
use crate::embedding::{decode_on_tape, EmbeddingSpace, SpaceVars};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_on_tape, project_on_tape, SkeletonDef, SkeletonVars};

/// Weights of the data and supervision terms relative to the prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: f64,
    pub smpl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            data: 10.0,
            smpl: 2.0,
        }
    }
}

/// Individual loss values at one state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub prior: f64,
    pub data: f64,
    pub smpl: Option<f64>,
    pub total: f64,
}

/// Tape handles for the capture parameters.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub alpha: Var,
    pub beta: Var,
    pub s: Var,
    pub t: Var,
}

impl StateVars {
    /// Slices a packed `[α, β, s, t]` vector.
    pub fn unpack(tape: &mut Tape, packed: Var, k: usize, shape_dim: usize) -> Result<Self> {
        let expected = k + shape_dim + 3;
        if tape.value(packed).len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: tape.value(packed).len(),
            });
        }
        let alpha = tape.slice(packed, 0, 0, k)?;
        let beta = if shape_dim > 0 {
            tape.slice(packed, 0, k, k + shape_dim)?
        } else {
            tape.constant(Tensor::scalar(0.0))
        };
        let s = tape.slice(packed, 0, k + shape_dim, k + shape_dim + 1)?;
        let t = tape.slice(packed, 0, k + shape_dim + 1, k + shape_dim + 3)?;
        Ok(StateVars { alpha, beta, s, t })
    }
}

/// Packs a state as `[α, β, s, t]`.
pub fn pack_state(state: &CaptureState) -> Tensor {
    let mut v = state.alpha.0.clone();
    v.extend_from_slice(&state.beta.0);
    v.push(state.cam.s);
    v.extend_from_slice(&state.cam.t);
    Tensor::vector(v)
}

/// Observed keypoints with non-visible entries zeroed, and the matching mask.
pub(crate) fn frame_tensors(frame: &ObservedFrame) -> (Tensor, Tensor) {
    let n = frame.keypoints.len();
    let mut obs = Vec::with_capacity(2 * n);
    let mut mask = Vec::with_capacity(2 * n);
    for (kp, vis) in frame.keypoints.iter().zip(&frame.visibility) {
        let v = if vis.is_visible() { 1.0 } else { 0.0 };
        for c in kp {
            obs.push(if v > 0.0 { *c } else { 0.0 });
            mask.push(v);
        }
    }
    (
        Tensor::from_parts(vec![n, 2], obs),
        Tensor::from_parts(vec![n, 2], mask),
    )
}

/// `‖W ∘ (ᾱ − α)‖₂`.
pub fn loss_prior_on_tape(tape: &mut Tape, space: &SpaceVars, alpha: Var) -> Result<Var> {
    let diff = tape.sub(space.coefficient_mean, alpha)?;
    let weighted = tape.mul(space.weights, diff)?;
    Ok(tape.norm(weighted))
}

/// Predicted keypoints `s Π(J(M(α), β)) + t`.
pub fn predicted_keypoints_on_tape(
    tape: &mut Tape,
    skel: &SkeletonDef,
    skel_vars: &SkeletonVars,
    space: &SpaceVars,
    state: &StateVars,
) -> Result<(Var, Var)> {
    let theta = decode_on_tape(tape, space, state.alpha)?;
    let joints = forward_kinematics_on_tape(tape, skel, skel_vars, theta, state.beta)?;
    let kp = project_on_tape(tape, skel_vars, joints, state.s, state.t)?;
    Ok((kp, joints))
}

/// `‖V ∘ (J − Ĵ)‖₂` with the observed keypoints and mask as constants.
pub fn loss_data_on_tape(tape: &mut Tape, predicted: Var, observed: Var, mask: Var) -> Result<Var> {
    let diff = tape.sub(observed, predicted)?;
    let masked = tape.mul(mask, diff)?;
    Ok(tape.norm(masked))
}

/// `‖θ − θ̂‖₂ + ‖β − β̂‖₂`.
pub fn loss_smpl_on_tape(
    tape: &mut Tape,
    space: &SpaceVars,
    state: &StateVars,
    supervision: &Supervision,
) -> Result<Var> {
    let theta_hat = decode_on_tape(tape, space, state.alpha)?;
    let theta = tape.constant(Tensor::new(
        vec![supervision.theta.0.len()],
        supervision.theta.0.clone(),
    )?);
    let dt = tape.sub(theta, theta_hat)?;
    let pose_term = tape.norm(dt);
    if supervision.beta.0.is_empty() {
        return Ok(pose_term);
    }
    let beta = tape.constant(Tensor::new(
        vec![supervision.beta.0.len()],
        supervision.beta.0.clone(),
    )?);
    let db = tape.sub(beta, state.beta)?;
    let shape_term = tape.norm(db);
    tape.add(pose_term, shape_term)
}

/// Handles to every loss term built on one tape.
#[derive(Clone, Copy, Debug)]
pub struct LossGraph {
    pub prior: Var,
    pub data: Var,
    pub smpl: Option<Var>,
    pub total: Var,
    pub predicted: Var,
    pub joints: Var,
}

/// Everything a capture objective needs besides the state.
#[derive(Clone, Copy)]
pub struct CaptureProblem<'a> {
    pub skel: &'a SkeletonDef,
    pub space: &'a EmbeddingSpace,
    pub frame: &'a ObservedFrame,
    pub supervision: Option<&'a Supervision>,
    pub weights: LossWeights,
}

impl CaptureProblem<'_> {
    pub fn packed_len(&self) -> usize {
        self.space.k + self.skel.shape_dim() + 3
    }

    /// Builds `L_mem = L_prior + λ_data L_data + λ_smpl L_smpl` from a packed state leaf.
    pub fn build(&self, tape: &mut Tape, packed: Var) -> Result<LossGraph> {
        if self.frame.keypoints.len() != self.skel.num_keypoints()
            || self.frame.visibility.len() != self.skel.num_keypoints()
        {
            return Err(Error::DimensionMismatch {
                expected: self.skel.num_keypoints(),
                got: self.frame.keypoints.len(),
            });
        }
        let skel_vars = SkeletonVars::new(tape, self.skel);
        let space_vars = SpaceVars::new(tape, self.space);
        let state = StateVars::unpack(tape, packed, self.space.k, self.skel.shape_dim())?;
        let (obs, mask) = frame_tensors(self.frame);
        let obs = tape.constant(obs);
        let mask = tape.constant(mask);

        let prior = loss_prior_on_tape(tape, &space_vars, state.alpha)?;
        let (predicted, joints) =
            predicted_keypoints_on_tape(tape, self.skel, &skel_vars, &space_vars, &state)?;
        let data = loss_data_on_tape(tape, predicted, obs, mask)?;
        let weighted_data = tape.scale(data, self.weights.data);
        let mut total = tape.add(prior, weighted_data)?;
        let smpl = match self.supervision {
            Some(sup) => {
                let l = loss_smpl_on_tape(tape, &space_vars, &state, sup)?;
                let w = tape.scale(l, self.weights.smpl);
                total = tape.add(total, w)?;
                Some(l)
            }
            None => None,
        };
        Ok(LossGraph {
            prior,
            data,
            smpl,
            total,
            predicted,
            joints,
        })
    }

    /// Loss terms at a state.
    pub fn evaluate(&self, state: &CaptureState) -> Result<LossTerms> {
        let mut tape = Tape::new();
        let packed = tape.constant(pack_state(state));
        let g = self.build(&mut tape, packed)?;
        Ok(LossTerms {
            prior: tape.value(g.prior).item(),
            data: tape.value(g.data).item(),
            smpl: g.smpl.map(|v| tape.value(v).item()),
            total: tape.value(g.total).item(),
        })
    }
}

/// Combines precomputed terms: `prior + w_data * data + w_smpl * smpl`.
pub fn combine_mem(prior: f64, data: f64, smpl: Option<f64>, weights: LossWeights) -> f64 {
    prior + weights.data * data + smpl.map_or(0.0, |s| weights.smpl * s)
}

/// `L_prior` of a coefficient vector in a space.
pub fn loss_prior(space: &EmbeddingSpace, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != space.k {
        return Err(Error::DimensionMismatch {
            expected: space.k,
            got: alpha.len(),
        });
    }
    let mut tape = Tape::new();
    let vars = SpaceVars::new(&mut tape, space);
    let a = tape.constant(Tensor::vector(alpha.to_vec()));
    let l = loss_prior_on_tape(&mut tape, &vars, a)?;
    Ok(tape.value(l).item())
}

/// `L_data` of a state against an observed frame.
pub fn loss_data(
    state: &CaptureState,
    frame: &ObservedFrame,
    skel: &SkeletonDef,
    space: &EmbeddingSpace,
) -> Result<f64> {
    let problem = CaptureProblem {
        skel,
        space,
        frame,
        supervision: None,
        weights: LossWeights::default(),
    };
    Ok(problem.evaluate(state)?.data)
}

/// `L_smpl` of a state against pose and shape supervision.
pub fn loss_smpl(
    state: &CaptureState,
    supervision: &Supervision,
    space: &EmbeddingSpace,
) -> Result<f64> {
    let theta_hat = space.decode(&state.alpha.0)?;
    if supervision.theta.0.len() != theta_hat.0.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_hat.0.len(),
            got: supervision.theta.0.len(),
        });
    }
    let pose: f64 = supervision
        .theta
        .0
        .iter()
        .zip(&theta_hat.0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let shape: f64 = supervision
        .beta
        .0
        .iter()
        .zip(&state.beta.0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(pose + shape)
}

/// `L_mem` of a state; the supervision term is dropped when `supervision` is `None`.
pub fn loss_mem(
    state: &CaptureState,
    frame: &ObservedFrame,
    supervision: Option<&Supervision>,
    space: &EmbeddingSpace,
    skel: &SkeletonDef,
    weights: LossWeights,
) -> Result<LossTerms> {
    CaptureProblem {
        skel,
        space,
        frame,
        supervision,
        weights,
    }
    .evaluate(state)
}
