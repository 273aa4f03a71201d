//! File formats, synthetic data, clip resampling and augmentation.

mod augment;
mod resample;
mod rng;
pub mod synth;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::capture::{CaptureState, FrameCapture, ObservedFrame, Visibility};
use crate::error::{Error, Result};
use crate::kinematics::Keypoints2D;

pub use augment::{augment, flip_clip, AugmentConfig};
pub use resample::{resample_clip, CLIP_FRAMES};
pub use rng::SeedStreams;
pub use synth::{synth_generate, SubmotionModel, SynthConfig, SynthOutput, SUBMOTIONS};

/// One motion-capture frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MocapFrame {
    pub submotion: String,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MocapSequence {
    pub sport: String,
    pub fps: f64,
    pub frames: Vec<MocapFrame>,
}

impl MocapSequence {
    /// Poses of the frames with the given sub-motion label.
    pub fn poses_for(&self, submotion: &str) -> Vec<crate::kinematics::PoseVector> {
        self.frames
            .iter()
            .filter(|f| f.submotion == submotion)
            .map(|f| crate::kinematics::PoseVector(f.theta.clone()))
            .collect()
    }

    /// Distinct sub-motion labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.frames {
            if !out.contains(&f.submotion) {
                out.push(f.submotion.clone());
            }
        }
        out
    }
}

/// One annotated frame: keypoints, visibility, sub-motion label, and optionally the
/// pose coefficients used as P-stream input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub keypoints: Keypoints2D,
    pub visibility: Vec<Visibility>,
    pub submotion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

impl AnnotatedFrame {
    pub fn observed(&self) -> ObservedFrame {
        ObservedFrame {
            keypoints: self.keypoints.clone(),
            visibility: self.visibility.clone(),
        }
    }
}

/// A clip with per-frame annotations and clip-level labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedClip {
    pub frames: Vec<AnnotatedFrame>,
    /// Class index per semantic attribute.
    pub attributes: Vec<usize>,
    pub action: usize,
    pub score: f64,
}

impl AnnotatedClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn observed(&self) -> Vec<ObservedFrame> {
        self.frames.iter().map(|f| f.observed()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.submotion.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("clip has no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.keypoints.len() != f.visibility.len() {
                return Err(Error::InvalidInput(format!(
                    "frame {i}: {} keypoints but {} visibility flags",
                    f.keypoints.len(),
                    f.visibility.len()
                )));
            }
            for (k, v) in f.keypoints.iter().zip(&f.visibility) {
                if v.is_visible() && !(k[0].is_finite() && k[1].is_finite()) {
                    return Err(Error::NonFinite(format!("frame {i}: visible keypoint")));
                }
            }
        }
        Ok(())
    }
}

/// Per-frame capture output record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub submotion: Option<String>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub s: Option<f64>,
    pub t: Option<[f64; 2]>,
    pub joints3d: Option<Vec<[f64; 3]>>,
    pub reproj2d: Option<Keypoints2D>,
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StateRecord {
    pub fn from_capture(frame: &FrameCapture) -> Self {
        let st: Option<&CaptureState> = frame.state.as_ref();
        StateRecord {
            submotion: st.map(|s| s.submotion.clone()),
            alpha: st.map(|s| s.alpha.0.clone()),
            beta: st.map(|s| s.beta.0.clone()),
            s: st.map(|s| s.cam.s),
            t: st.map(|s| s.cam.t),
            joints3d: frame.joints3d.clone(),
            reproj2d: frame.reproj2d.clone(),
            loss: frame.diagnostics.as_ref().map(|d| d.loss.total),
            error: frame.error.clone(),
        }
    }
}

/// Names the file in I/O errors, which `std::io::Error` alone does not.
fn with_path(path: &Path, e: std::io::Error) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| with_path(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string(value)?).map_err(|e| with_path(path, e))?;
    Ok(())
}

pub fn load_clips(path: impl AsRef<Path>) -> Result<Vec<AnnotatedClip>> {
    let clips: Vec<AnnotatedClip> = read_json(path)?;
    for c in &clips {
        c.validate()?;
    }
    Ok(clips)
}

pub fn save_clips(path: impl AsRef<Path>, clips: &[AnnotatedClip]) -> Result<()> {
    write_json(path, clips)
}
