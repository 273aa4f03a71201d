use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{CaptureProblem, LossTerms, LossWeights};
use super::optim::{minimize, Objective};
use super::{CaptureState, ObservedFrame, Supervision};
use crate::embedding::{EmbeddingSpace, PoseCoefficients};
use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, layout, project, CameraParams, Joints3D, Keypoints2D, ShapeVector,
    SkeletonDef,
};

/// Search-direction rule of the frame optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adam moments with a backtracked step scale.
    Adam,
    /// Damped steps preconditioned by the data-term curvature along the keypoint
    /// Jacobian.
    GaussNewton,
}

/// Optimizer settings for per-frame fitting.
///
/// Every method only accepts trial points that lower the loss, so the objective is
/// monotone over accepted iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureConfig {
    pub weights: LossWeights,
    pub method: Method,
    /// Cap on accepted steps.
    pub max_iterations: usize,
    /// Cap on loss evaluations, including rejected trials.
    pub max_evaluations: usize,
    pub grad_tol: f64,
    /// Stop once an accepted step improves the loss by less than this fraction. The
    /// data norm has a kink at an exact fit, where the gradient never vanishes.
    pub loss_tol: f64,
    /// Adam base step for pose coefficients.
    pub lr_alpha: f64,
    pub lr_beta: f64,
    /// Adam base step for the log of the camera scale.
    pub lr_log_scale: f64,
    /// Adam base step for the camera translation, pixels.
    pub lr_translation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Adam step-scale growth after an accepted step (capped at 1).
    pub step_growth: f64,
    /// Adam stops as converged once the step scale falls below this.
    pub min_step_scale: f64,
    pub initial_damping: f64,
    pub min_damping: f64,
    /// Gauss-Newton stops as converged once the damping exceeds this.
    pub max_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub min_visible: usize,
    pub warm_start: bool,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            weights: LossWeights::default(),
            method: Method::GaussNewton,
            max_iterations: 2000,
            max_evaluations: 20_000,
            grad_tol: 1e-6,
            loss_tol: 1e-10,
            lr_alpha: 0.05,
            lr_beta: 0.05,
            lr_log_scale: 0.02,
            lr_translation: 2.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-12,
            step_growth: 1.2,
            min_step_scale: 1e-9,
            initial_damping: 1e-3,
            min_damping: 1e-12,
            max_damping: 1e10,
            damping_increase: 4.0,
            damping_decrease: 3.0,
            min_visible: 6,
            warm_start: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientNorm,
    /// No trial step of any usable size lowers the loss.
    StepCollapse,
    /// The last accepted step barely lowered the loss.
    LossStalled,
    MaxIterations,
    MaxEvaluations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub loss: LossTerms,
    /// Accepted steps.
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub grad_norm: f64,
    /// Objective at the start and after each accepted step.
    pub loss_trace: Vec<f64>,
}

/// Default starting point: space mean, zero shape, camera from the visible keypoints.
///
/// The scale is the ratio of observed to model torso length (neck to mid hip) when
/// both are visible, else of the visible bounding-box extents. The translation
/// aligns the visible keypoint centroids.
pub fn initial_state(
    frame: &ObservedFrame,
    space: &EmbeddingSpace,
    skel: &SkeletonDef,
) -> Result<CaptureState> {
    let theta = space.decode(&vec![0.0; space.k])?;
    let joints = forward_kinematics(skel, &theta, &ShapeVector::zeros(skel.shape_dim()))?;
    let unit = CameraParams {
        s: 1.0,
        t: [0.0, 0.0],
    };
    let model = project(&joints, &unit, &skel.keypoint_regressor);
    let vis = frame.visibility_mask();
    let visible: Vec<usize> = (0..vis.len()).filter(|&i| vis[i]).collect();
    if visible.is_empty() {
        return Err(Error::UnderDetermined {
            visible: 0,
            needed: 1,
        });
    }
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let torso = (layout::NECK, layout::MID_HIP);
    let mut s = None;
    if vis.len() > torso.0.max(torso.1) && vis[torso.0] && vis[torso.1] {
        let model_len = dist(model[torso.0], model[torso.1]);
        let obs_len = dist(frame.keypoints[torso.0], frame.keypoints[torso.1]);
        if model_len > 1e-9 && obs_len > 1e-9 {
            s = Some(obs_len / model_len);
        }
    }
    if s.is_none() {
        let extent = |pts: &dyn Fn(usize) -> [f64; 2]| {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for &i in &visible {
                let p = pts(i);
                for c in 0..2 {
                    lo[c] = lo[c].min(p[c]);
                    hi[c] = hi[c].max(p[c]);
                }
            }
            (hi[0] - lo[0]).max(hi[1] - lo[1])
        };
        let obs = extent(&|i| frame.keypoints[i]);
        let mdl = extent(&|i| model[i]);
        s = Some(if obs > 1e-9 && mdl > 1e-9 {
            obs / mdl
        } else {
            1.0
        });
    }
    let s = s.unwrap();
    let n = visible.len() as f64;
    let mut t = [0.0; 2];
    for &i in &visible {
        for c in 0..2 {
            t[c] += (frame.keypoints[i][c] - s * model[i][c]) / n;
        }
    }
    Ok(CaptureState {
        alpha: PoseCoefficients::zeros(space.k),
        beta: ShapeVector::zeros(skel.shape_dim()),
        cam: CameraParams { s, t },
        submotion: space.submotion.clone(),
    })
}

/// Fits one frame without pose/shape supervision.
pub fn fit_frame(
    frame: &ObservedFrame,
    space: &EmbeddingSpace,
    skel: &SkeletonDef,
    init: &CaptureState,
    config: &CaptureConfig,
) -> Result<(CaptureState, FitDiagnostics)> {
    fit_frame_with(frame, space, skel, init, config, None)
}

/// Fits one frame, optionally including the supervised pose/shape term.
pub fn fit_frame_with(
    frame: &ObservedFrame,
    space: &EmbeddingSpace,
    skel: &SkeletonDef,
    init: &CaptureState,
    config: &CaptureConfig,
    supervision: Option<&Supervision>,
) -> Result<(CaptureState, FitDiagnostics)> {
    let visible = frame.visible_count();
    if visible < config.min_visible {
        return Err(Error::UnderDetermined {
            visible,
            needed: config.min_visible,
        });
    }
    if init.alpha.0.len() != space.k {
        return Err(Error::DimensionMismatch {
            expected: space.k,
            got: init.alpha.0.len(),
        });
    }
    if init.beta.0.len() != skel.shape_dim() {
        return Err(Error::DimensionMismatch {
            expected: skel.shape_dim(),
            got: init.beta.0.len(),
        });
    }
    CameraParams::new(init.cam.s, init.cam.t)?;
    let problem = CaptureProblem {
        skel,
        space,
        frame,
        supervision,
        weights: config.weights,
    };
    let obj = Objective {
        problem,
        k: space.k,
        shape_dim: skel.shape_dim(),
    };
    let run = minimize(&obj, obj.to_unconstrained(init), config)?;
    let state = obj.to_state(&run.u, &space.submotion);
    let loss = problem.evaluate(&state)?;
    Ok((
        state,
        FitDiagnostics {
            loss,
            iterations: run.iterations,
            evaluations: run.evaluations,
            converged: matches!(
                run.stop,
                StopReason::GradientNorm | StopReason::StepCollapse | StopReason::LossStalled
            ),
            stop: run.stop,
            grad_norm: run.grad_norm,
            loss_trace: run.trace,
        },
    ))
}

/// Result of choosing among candidate sub-motion spaces.
#[derive(Clone, Debug)]
pub struct Selection {
    pub index: usize,
    pub label: String,
    /// Final data loss per space; `None` where the fit failed.
    pub residuals: Vec<Option<f64>>,
    pub state: CaptureState,
    pub diagnostics: FitDiagnostics,
}

/// Fits the frame in every space from its mean and picks the smallest final data
/// loss; ties go to the lower index.
pub fn select_submotion(
    frame: &ObservedFrame,
    spaces: &[EmbeddingSpace],
    skel: &SkeletonDef,
    config: &CaptureConfig,
) -> Result<Selection> {
    select_from(frame, spaces, skel, config, None)
}

fn select_from(
    frame: &ObservedFrame,
    spaces: &[EmbeddingSpace],
    skel: &SkeletonDef,
    config: &CaptureConfig,
    warm: Option<&CaptureState>,
) -> Result<Selection> {
    if spaces.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sub-motion selection needs at least 2 spaces, got {}",
            spaces.len()
        )));
    }
    let fits: Vec<Result<(CaptureState, FitDiagnostics)>> = spaces
        .par_iter()
        .map(|space| {
            let init = start_state(frame, space, skel, warm)?;
            fit_frame(frame, space, skel, &init, config)
        })
        .collect();
    let residuals: Vec<Option<f64>> = fits
        .iter()
        .map(|r| r.as_ref().ok().map(|(_, d)| d.loss.data))
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in residuals.iter().enumerate() {
        if let Some(r) = r {
            if best.is_none_or(|b| *r < residuals[b].unwrap()) {
                best = Some(i);
            }
        }
    }
    let Some(index) = best else {
        let first_err = fits.into_iter().find_map(|r| r.err());
        return Err(first_err.unwrap_or_else(|| Error::InvalidInput("no spaces".into())));
    };
    let (state, diagnostics) = fits.into_iter().nth(index).unwrap().unwrap();
    Ok(Selection {
        index,
        label: spaces[index].submotion.clone(),
        residuals,
        state,
        diagnostics,
    })
}

fn start_state(
    frame: &ObservedFrame,
    space: &EmbeddingSpace,
    skel: &SkeletonDef,
    warm: Option<&CaptureState>,
) -> Result<CaptureState> {
    match warm {
        Some(prev) if prev.submotion == space.submotion && prev.alpha.0.len() == space.k => {
            Ok(prev.clone())
        }
        Some(prev) => {
            let mut s = initial_state(frame, space, skel)?;
            s.beta = prev.beta.clone();
            s.cam = prev.cam;
            Ok(s)
        }
        None => initial_state(frame, space, skel),
    }
}

/// Capture output for one frame.
#[derive(Clone, Debug)]
pub struct FrameCapture {
    pub state: Option<CaptureState>,
    pub joints3d: Option<Joints3D>,
    pub reproj2d: Option<Keypoints2D>,
    pub diagnostics: Option<FitDiagnostics>,
    pub residuals: Option<Vec<Option<f64>>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ClipCapture {
    pub frames: Vec<FrameCapture>,
}

impl ClipCapture {
    pub fn total_iterations(&self) -> usize {
        self.frames
            .iter()
            .filter_map(|f| f.diagnostics.as_ref())
            .map(|d| d.iterations)
            .sum()
    }

    pub fn alphas(&self) -> Vec<Option<Vec<f64>>> {
        self.frames
            .iter()
            .map(|f| f.state.as_ref().map(|s| s.alpha.0.clone()))
            .collect()
    }
}

/// Captures a clip frame by frame.
///
/// Frames use the given sub-motion labels when present and are otherwise assigned by
/// [`select_submotion`]. With `warm_start`, each frame starts from the previous frame's
/// state. A failed frame is recorded and later frames continue from the last good state.
pub fn capture_clip(
    clip: &[ObservedFrame],
    spaces: &[EmbeddingSpace],
    skel: &SkeletonDef,
    labels: Option<&[String]>,
    config: &CaptureConfig,
) -> Result<ClipCapture> {
    if clip.is_empty() {
        return Err(Error::InvalidInput("empty clip".into()));
    }
    if let Some(l) = labels {
        if l.len() != clip.len() {
            return Err(Error::DimensionMismatch {
                expected: clip.len(),
                got: l.len(),
            });
        }
    }
    let mut last_good: Option<CaptureState> = None;
    let mut frames = Vec::with_capacity(clip.len());
    for (i, frame) in clip.iter().enumerate() {
        let warm = if config.warm_start {
            last_good.as_ref()
        } else {
            None
        };
        let result: Result<(CaptureState, FitDiagnostics, Option<Vec<Option<f64>>>)> = match labels
        {
            Some(labels) => (|| {
                let space = spaces
                    .iter()
                    .find(|s| s.submotion == labels[i])
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("no space for sub-motion {}", labels[i]))
                    })?;
                let init = start_state(frame, space, skel, warm)?;
                let (s, d) = fit_frame(frame, space, skel, &init, config)?;
                Ok((s, d, None))
            })(),
            None if spaces.len() == 1 => (|| {
                let init = start_state(frame, &spaces[0], skel, warm)?;
                let (s, d) = fit_frame(frame, &spaces[0], skel, &init, config)?;
                Ok((s, d, None))
            })(),
            None => select_from(frame, spaces, skel, config, warm)
                .map(|sel| (sel.state, sel.diagnostics, Some(sel.residuals))),
        };
        match result {
            Ok((state, diagnostics, residuals)) => {
                let space = spaces
                    .iter()
                    .find(|s| s.submotion == state.submotion)
                    .expect("state comes from one of the spaces");
                let theta = space.decode(&state.alpha.0)?;
                let joints = forward_kinematics(skel, &theta, &state.beta)?;
                let reproj = project(&joints, &state.cam, &skel.keypoint_regressor);
                last_good = Some(state.clone());
                frames.push(FrameCapture {
                    state: Some(state),
                    joints3d: Some(joints),
                    reproj2d: Some(reproj),
                    diagnostics: Some(diagnostics),
                    residuals,
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("frame {i}: {e}");
                frames.push(FrameCapture {
                    state: None,
                    joints3d: None,
                    reproj2d: None,
                    diagnostics: None,
                    residuals: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(ClipCapture { frames })
}
