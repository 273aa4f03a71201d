//! Synthetic sport data with exact ground truth.
//!
//! Mocap poses are drawn from a low-dimensional linear model per sub-motion; PCA spaces
//! are fitted to them; clips are then rendered from coefficient trajectories in the
//! fitted spaces, so every rendered frame has a known exact capture state.
//!
//! Attribute classes are written into the trajectories: the somersault class `c` gives
//! the first somersault coefficient `c + 1` half-periods of a cosine, the twist class
//! `c` gives the first twist coefficient `c` half-periods, and every other attribute
//! holds one coefficient at one of evenly spaced levels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{AnnotatedClip, AnnotatedFrame, MocapFrame, MocapSequence, SeedStreams};
use crate::action_parse::AttributeSchema;
use crate::capture::{CaptureState, Visibility};
use crate::embedding::{fit_space, EmbeddingSpace, PoseCoefficients};
use crate::error::{Error, Result};
use crate::kinematics::layout::JOINT_PARENTS;
use crate::kinematics::{
    render_keypoints, CameraParams, PoseVector, ShapeVector, SkeletonDef, SHAPE_LIMIT,
};

/// Sub-motion labels of the synthetic diving sport, in clip order.
pub const SUBMOTIONS: [&str; 2] = ["somersault", "twist"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub clips: usize,
    /// Mocap frames per sub-motion.
    pub mocap_frames: usize,
    /// Latent dimensions of each sub-motion pose model.
    pub latent_dims: usize,
    /// Std of the first latent pose direction, radians.
    pub pose_std: f64,
    /// Ratio between consecutive latent stds.
    pub pose_decay: f64,
    /// Coefficient width of fitted spaces.
    pub k: usize,
    /// Inclusive clip length range before resampling.
    pub frames: [usize; 2],
    /// Share of a clip spent in the somersault sub-motion.
    pub somersault_share: [f64; 2],
    /// Standard deviation of Gaussian keypoint noise, pixels.
    pub keypoint_noise: f64,
    pub occlusion_rate: f64,
    /// Camera scale range, pixels per meter.
    pub scale: [f64; 2],
    pub center: [f64; 2],
    pub center_jitter: f64,
    pub shape_std: f64,
    /// Amplitude of label-free coefficient motion, in units of each coefficient's std.
    pub nuisance: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            clips: 400,
            mocap_frames: 600,
            latent_dims: 30,
            pose_std: 0.35,
            pose_decay: 0.97,
            k: crate::embedding::DEFAULT_K,
            frames: [70, 130],
            somersault_share: [0.55, 0.65],
            keypoint_noise: 0.0,
            occlusion_rate: 0.0,
            scale: [150.0, 250.0],
            center: [320.0, 240.0],
            center_jitter: 20.0,
            shape_std: 0.5,
            nuisance: 0.3,
        }
    }
}

/// Linear pose model `θ = mean + Σ z_i σ_i d_i + noise` with orthonormal `d_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmotionModel {
    pub label: String,
    pub mean: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub noise: f64,
}

/// Pose-vector coordinates of joints that have children; leaf rotations move nothing.
fn active_coordinates() -> Vec<usize> {
    let mut has_child = [false; 24];
    for &p in &JOINT_PARENTS[1..] {
        has_child[p as usize] = true;
    }
    (0..72).filter(|&i| has_child[i / 3]).collect()
}

fn set_joint(theta: &mut [f64], joint: usize, aa: [f64; 3]) {
    theta[3 * joint..3 * joint + 3].copy_from_slice(&aa);
}

impl SubmotionModel {
    /// Random orthonormal directions over the non-leaf joints with geometrically
    /// decaying spread.
    pub fn random(
        label: &str,
        mean: Vec<f64>,
        latent_dims: usize,
        std: f64,
        decay: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let active = active_coordinates();
        let latent_dims = latent_dims.min(active.len());
        let mut directions: Vec<Vec<f64>> = Vec::with_capacity(latent_dims);
        while directions.len() < latent_dims {
            let mut v = vec![0.0; mean.len()];
            for &i in &active {
                v[i] = rng.sample(StandardNormal);
            }
            for d in &directions {
                let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= proj * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                v.iter_mut().for_each(|x| *x /= n);
                directions.push(v);
            }
        }
        let stds = (0..latent_dims)
            .map(|i| std * decay.powi(i as i32))
            .collect();
        SubmotionModel {
            label: label.to_string(),
            mean,
            directions,
            stds,
            noise: 0.003,
        }
    }

    /// The two diving models: a tucked somersault and a straight-body twist.
    pub fn diving(config: &SynthConfig, streams: &SeedStreams) -> Vec<SubmotionModel> {
        let (dims, std, decay) = (config.latent_dims, config.pose_std, config.pose_decay);
        let mut tuck = vec![0.0; 72];
        set_joint(&mut tuck, 1, [-1.3, 0.0, 0.1]);
        set_joint(&mut tuck, 2, [-1.3, 0.0, -0.1]);
        set_joint(&mut tuck, 4, [1.7, 0.0, 0.0]);
        set_joint(&mut tuck, 5, [1.7, 0.0, 0.0]);
        set_joint(&mut tuck, 3, [-0.3, 0.0, 0.0]);
        set_joint(&mut tuck, 16, [-0.6, 0.0, -0.6]);
        set_joint(&mut tuck, 17, [-0.6, 0.0, 0.6]);
        set_joint(&mut tuck, 18, [0.0, -1.2, 0.0]);
        set_joint(&mut tuck, 19, [0.0, 1.2, 0.0]);

        let mut straight = vec![0.0; 72];
        set_joint(&mut straight, 16, [0.0, 0.0, -1.25]);
        set_joint(&mut straight, 17, [0.0, 0.0, 1.25]);
        set_joint(&mut straight, 18, [0.0, -0.4, 0.0]);
        set_joint(&mut straight, 19, [0.0, 0.4, 0.0]);
        set_joint(&mut straight, 0, [0.0, 0.4, 0.0]);

        vec![
            SubmotionModel::random(
                SUBMOTIONS[0],
                tuck,
                dims,
                std,
                decay,
                &mut streams.stream("model/somersault"),
            ),
            SubmotionModel::random(
                SUBMOTIONS[1],
                straight,
                dims,
                std,
                decay,
                &mut streams.stream("model/twist"),
            ),
        ]
    }

    pub fn pose(&self, z: &[f64]) -> PoseVector {
        let mut theta = self.mean.clone();
        for ((d, s), zi) in self.directions.iter().zip(&self.stds).zip(z) {
            theta.iter_mut().zip(d).for_each(|(t, x)| *t += zi * s * x);
        }
        PoseVector(theta)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> PoseVector {
        let z: Vec<f64> = (0..self.stds.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mut p = self.pose(&z);
        for i in active_coordinates() {
            p.0[i] += self.noise * rng.sample::<f64, _>(StandardNormal);
        }
        p.canonicalize();
        p
    }
}

/// Mocap frames from each model in turn; shape is redrawn every 30 frames.
pub fn generate_mocap(
    models: &[SubmotionModel],
    frames_per_model: usize,
    shape_std: f64,
    streams: &SeedStreams,
) -> MocapSequence {
    let mut rng = streams.stream("mocap");
    let shape = Normal::new(0.0, shape_std.max(0.0)).unwrap();
    let mut frames = Vec::with_capacity(models.len() * frames_per_model);
    for m in models {
        let mut beta = Vec::new();
        for i in 0..frames_per_model {
            if i % 30 == 0 {
                beta = (0..10)
                    .map(|_| shape.sample(&mut rng).clamp(-SHAPE_LIMIT, SHAPE_LIMIT))
                    .collect();
            }
            frames.push(MocapFrame {
                submotion: m.label.clone(),
                theta: m.sample(&mut rng).0,
                beta: beta.clone(),
            });
        }
    }
    MocapSequence {
        sport: "diving".into(),
        fps: 30.0,
        frames,
    }
}

/// Fits one space per sub-motion label of the sequence, in label order.
pub fn fit_spaces(mocap: &MocapSequence, k: usize) -> Result<Vec<EmbeddingSpace>> {
    mocap
        .labels()
        .par_iter()
        .map(|label| fit_space(&mocap.poses_for(label), k, label))
        .collect()
}

/// Everything one synthetic run produces.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub mocap: MocapSequence,
    pub spaces: Vec<EmbeddingSpace>,
    pub clips: Vec<AnnotatedClip>,
    /// Ground-truth capture state of every clip frame.
    pub states: Vec<Vec<CaptureState>>,
}

#[derive(Clone, Copy, Debug)]
enum Signal {
    /// Cosine with `offset + class` half-periods over the segment.
    HalfPeriods {
        offset: usize,
    },
    Level,
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    attribute: usize,
    space: usize,
    component: usize,
    signal: Signal,
}

fn attribute_slots(schema: &AttributeSchema, components: usize) -> Vec<Slot> {
    let mut slots = Vec::new();
    if let Some(a) = schema.attribute_index("somersault") {
        slots.push(Slot {
            attribute: a,
            space: 0,
            component: 0,
            signal: Signal::HalfPeriods { offset: 1 },
        });
    }
    if let Some(a) = schema.attribute_index("twist") {
        slots.push(Slot {
            attribute: a,
            space: 1,
            component: 0,
            signal: Signal::HalfPeriods { offset: 0 },
        });
    }
    let mut next = 0usize;
    for a in 0..schema.num_attributes() {
        if slots.iter().any(|s| s.attribute == a) {
            continue;
        }
        let space = next % 2;
        let component = 1 + next / 2;
        next += 1;
        if component < components {
            slots.push(Slot {
                attribute: a,
                space,
                component,
                signal: Signal::Level,
            });
        }
    }
    slots
}

fn level(class: usize, classes: usize) -> f64 {
    -1.5 + 3.0 * class as f64 / (classes - 1) as f64
}

/// Generates mocap, fits (or reuses) sub-motion spaces and renders annotated clips.
///
/// `spaces`, when given, must contain the `somersault` and `twist` spaces.
pub fn synth_generate(
    schema: &AttributeSchema,
    skel: &SkeletonDef,
    spaces: Option<&[EmbeddingSpace]>,
    config: &SynthConfig,
) -> Result<SynthOutput> {
    schema.validate()?;
    skel.validate()?;
    if schema.combinations.is_empty() {
        return Err(Error::InvalidSchema("no legal combinations".into()));
    }
    if config.frames[0] < 2 || config.frames[0] > config.frames[1] {
        return Err(Error::InvalidInput(format!(
            "bad clip length range {:?}",
            config.frames
        )));
    }
    let streams = SeedStreams::new(config.seed);
    let models = SubmotionModel::diving(config, &streams);
    let mocap = generate_mocap(&models, config.mocap_frames, config.shape_std, &streams);
    let fitted = match spaces {
        Some(given) => given.to_vec(),
        None => fit_spaces(&mocap, config.k)?,
    };
    let ordered: Vec<EmbeddingSpace> = SUBMOTIONS
        .iter()
        .map(|label| {
            fitted
                .iter()
                .find(|s| s.submotion == *label)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("missing {label} space")))
        })
        .collect::<Result<_>>()?;

    let generated: Vec<Result<(AnnotatedClip, Vec<CaptureState>)>> = (0..config.clips)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.indexed("clip", i);
            generate_clip(schema, skel, &ordered, config, &mut rng)
        })
        .collect();
    let mut clips = Vec::with_capacity(config.clips);
    let mut states = Vec::with_capacity(config.clips);
    for g in generated {
        let (c, s) = g?;
        clips.push(c);
        states.push(s);
    }
    Ok(SynthOutput {
        mocap,
        spaces: fitted,
        clips,
        states,
    })
}

fn generate_clip(
    schema: &AttributeSchema,
    skel: &SkeletonDef,
    spaces: &[EmbeddingSpace],
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(AnnotatedClip, Vec<CaptureState>)> {
    let combo = &schema.combinations[rng.gen_range(0..schema.combinations.len())];
    let n = rng.gen_range(config.frames[0]..=config.frames[1]);
    let share = if config.somersault_share[0] < config.somersault_share[1] {
        rng.gen_range(config.somersault_share[0]..config.somersault_share[1])
    } else {
        config.somersault_share[0]
    };
    let n_first = ((n as f64 * share).round() as usize).clamp(1, n - 1);
    let quality: f64 = rng.gen();
    let score = (400.0 + 600.0 * quality).round() / 10.0;

    let k = spaces.iter().map(|s| s.k).min().unwrap();
    let slots = attribute_slots(schema, k);

    // z-trajectory generator per space: (frequency, phase) of free components
    let free: Vec<Vec<(f64, f64)>> = spaces
        .iter()
        .map(|s| {
            (0..s.k)
                .map(|_| (rng.gen_range(0.25..1.0), rng.gen_range(0.0..2.0 * PI)))
                .collect()
        })
        .collect();
    let jitter = Normal::new(0.0, 0.1 * (1.0 - quality) + 1e-12).unwrap();

    let beta = ShapeVector(
        (0..skel.shape_dim())
            .map(|_| {
                (config.shape_std * rng.sample::<f64, _>(StandardNormal))
                    .clamp(-SHAPE_LIMIT, SHAPE_LIMIT)
            })
            .collect(),
    );
    let s = if config.scale[0] < config.scale[1] {
        rng.gen_range(config.scale[0]..config.scale[1])
    } else {
        config.scale[0]
    };
    let t = [
        config.center[0] + config.center_jitter * rng.gen_range(-1.0..=1.0),
        config.center[1] + config.center_jitter * rng.gen_range(-1.0..=1.0),
    ];
    let cam = CameraParams::new(s, t)?;
    let noise = Normal::new(0.0, config.keypoint_noise.max(0.0) + 1e-300).unwrap();

    let mut frames = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for f in 0..n {
        let (space_ix, u) = if f < n_first {
            (0, f as f64 / n_first as f64)
        } else {
            (1, (f - n_first) as f64 / (n - n_first) as f64)
        };
        let space = &spaces[space_ix];
        let mut z: Vec<f64> = free[space_ix]
            .iter()
            .map(|&(freq, phase)| {
                config.nuisance * (2.0 * PI * freq * u + phase).sin() + jitter.sample(rng)
            })
            .collect();
        for slot in slots.iter().filter(|s| s.space == space_ix) {
            let class = combo.sas[slot.attribute];
            z[slot.component] = match slot.signal {
                Signal::HalfPeriods { offset } => 2.0 * (PI * (class + offset) as f64 * u).cos(),
                Signal::Level => level(class, schema.attributes[slot.attribute].classes),
            };
        }
        let alpha: Vec<f64> = z
            .iter()
            .zip(&space.eigenvalues)
            .map(|(zi, l)| zi * l.sqrt())
            .collect();
        let theta = space.decode(&alpha)?;
        let clean = render_keypoints(skel, &theta, &beta, &cam)?;
        let keypoints = clean
            .iter()
            .map(|p| {
                if config.keypoint_noise > 0.0 {
                    [p[0] + noise.sample(rng), p[1] + noise.sample(rng)]
                } else {
                    *p
                }
            })
            .collect();
        let visibility = (0..clean.len())
            .map(|_| {
                if config.occlusion_rate > 0.0 && rng.gen::<f64>() < config.occlusion_rate {
                    Visibility::Occluded
                } else {
                    Visibility::Visible
                }
            })
            .collect();
        frames.push(AnnotatedFrame {
            keypoints,
            visibility,
            submotion: space.submotion.clone(),
            alpha: Some(alpha.clone()),
        });
        states.push(CaptureState {
            alpha: PoseCoefficients(alpha),
            beta: beta.clone(),
            cam,
            submotion: space.submotion.clone(),
        });
    }
    Ok((
        AnnotatedClip {
            frames,
            attributes: combo.sas.clone(),
            action: combo.label,
            score,
        },
        states,
    ))
}
