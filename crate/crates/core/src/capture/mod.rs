//! Analysis-by-synthesis capture: recover per-frame pose coefficients, shape and a
//! weak-perspective camera by minimizing the embedding objective against 2D keypoints.

mod fit;
pub mod losses;
mod optim;

use serde::{Deserialize, Serialize};

use crate::embedding::PoseCoefficients;
use crate::kinematics::{CameraParams, Keypoints2D, PoseVector, ShapeVector};

pub use fit::{
    capture_clip, fit_frame, fit_frame_with, initial_state, select_submotion, CaptureConfig,
    ClipCapture, FitDiagnostics, FrameCapture, Method, Selection, StopReason,
};
pub use losses::{
    combine_mem, loss_data, loss_mem, loss_prior, loss_smpl, pack_state, CaptureProblem, LossGraph,
    LossTerms, LossWeights,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Visible,
    /// Labeled but hidden.
    Occluded,
    Unlabeled,
}

impl Visibility {
    pub fn is_visible(self) -> bool {
        self == Visibility::Visible
    }
}

/// 2D keypoints of one frame with per-keypoint visibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedFrame {
    pub keypoints: Keypoints2D,
    pub visibility: Vec<Visibility>,
}

impl ObservedFrame {
    pub fn all_visible(keypoints: Keypoints2D) -> Self {
        let visibility = vec![Visibility::Visible; keypoints.len()];
        ObservedFrame {
            keypoints,
            visibility,
        }
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|v| v.is_visible()).count()
    }

    pub fn visibility_mask(&self) -> Vec<bool> {
        self.visibility.iter().map(|v| v.is_visible()).collect()
    }
}

/// Per-frame capture variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureState {
    pub alpha: PoseCoefficients,
    pub beta: ShapeVector,
    pub cam: CameraParams,
    pub submotion: String,
}

/// Pose and shape supervision for the supervised loss term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Supervision {
    pub theta: PoseVector,
    pub beta: ShapeVector,
}

#[cfg(test)]
mod tests;
