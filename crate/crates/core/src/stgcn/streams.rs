use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{build_partitioned_adjacency, SkeletonGraph};
use super::layer::{init_layer, stgcn_layer, LayerShape, LayerVars};
use super::params::{he_normal, ParamSet, ParamVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::data_io::{AnnotatedClip, CLIP_FRAMES};
use crate::error::{Error, Result};
use crate::kinematics::layout::{MID_HIP, NECK};

/// Which input streams a model uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSet {
    pub joints: bool,
    pub bones: bool,
    pub pose: bool,
}

impl StreamSet {
    pub const ALL: StreamSet = StreamSet {
        joints: true,
        bones: true,
        pose: true,
    };

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = StreamSet {
            joints: false,
            bones: false,
            pose: false,
        };
        for part in text.split(['+', ',']) {
            match part.trim().to_ascii_uppercase().as_str() {
                "J" => s.joints = true,
                "B" => s.bones = true,
                "P" => s.pose = true,
                other => {
                    return Err(Error::InvalidInput(format!("unknown stream {other:?}")));
                }
            }
        }
        if !(s.joints || s.bones || s.pose) {
            return Err(Error::InvalidInput("no stream selected".into()));
        }
        Ok(s)
    }
}

/// Architecture of the three streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StgcnConfig {
    /// Output channels of each graph layer.
    pub channels: Vec<usize>,
    /// Temporal stride of each graph layer.
    pub strides: Vec<usize>,
    pub temporal_kernel: usize,
    /// Width of the pose-coefficient residual blocks.
    pub pose_channels: usize,
    pub pose_blocks: usize,
    pub pose_kernel: usize,
    /// Output width of the pose stream.
    pub pose_features: usize,
    pub frames: usize,
    pub streams: StreamSet,
}

impl Default for StgcnConfig {
    fn default() -> Self {
        StgcnConfig {
            channels: vec![64, 64, 64, 64, 128, 128, 128, 256, 256, 256],
            strides: vec![1, 1, 1, 1, 2, 1, 1, 2, 1, 1],
            temporal_kernel: 9,
            pose_channels: 64,
            pose_blocks: 4,
            pose_kernel: 9,
            pose_features: 256,
            frames: CLIP_FRAMES,
            streams: StreamSet::ALL,
        }
    }
}

impl StgcnConfig {
    /// Same layout with narrow channels, for CPU training runs on small data.
    pub fn compact() -> Self {
        StgcnConfig {
            channels: vec![8, 8, 8, 8, 16, 16, 16, 16, 16, 16],
            pose_channels: 16,
            pose_features: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() {
            return Err(Error::InvalidInput(format!(
                "{} layer channels vs {} strides",
                self.channels.len(),
                self.strides.len()
            )));
        }
        if self.channels.contains(&0) || self.strides.contains(&0) {
            return Err(Error::InvalidInput("zero channels or stride".into()));
        }
        if self.temporal_kernel % 2 == 0 || self.pose_kernel % 2 == 0 {
            return Err(Error::InvalidInput("kernels must be odd".into()));
        }
        if self.pose_channels == 0 || self.pose_features == 0 || self.frames < 2 {
            return Err(Error::InvalidInput("empty pose stream or clip".into()));
        }
        Ok(())
    }

    pub fn layer_shapes(&self, c_in: usize) -> Vec<LayerShape> {
        let mut prev = c_in;
        self.channels
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| {
                let l = LayerShape {
                    c_in: prev,
                    c_out: c,
                    stride: s,
                    kernel: self.temporal_kernel,
                };
                prev = c;
                l
            })
            .collect()
    }

    /// Width of one graph stream's features.
    pub fn graph_features(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    /// Width of the concatenated features of the enabled streams.
    pub fn feature_dim(&self) -> usize {
        let s = self.streams;
        (s.joints as usize + s.bones as usize) * self.graph_features()
            + s.pose as usize * self.pose_features
    }
}

/// Per-clip stream inputs on the common frame grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamInput {
    /// `T × V` normalized 2D joints.
    pub joints: Vec<Vec<[f64; 2]>>,
    /// `T × (V − 1)` bone vectors, child minus parent.
    pub bones: Vec<Vec<[f64; 2]>>,
    /// `T × (K + |sub-motions|)` pose coefficients followed by a sub-motion one-hot.
    pub pose: Vec<Vec<f64>>,
}

impl StreamInput {
    pub fn frames(&self) -> usize {
        self.joints.len()
    }

    pub fn pose_width(&self) -> usize {
        self.pose.first().map_or(0, Vec::len)
    }

    /// Builds inputs from a clip already on the frame grid.
    ///
    /// Joints are centered on the mean mid-hip position and divided by the mean
    /// neck to mid-hip length over the clip; keypoints that are not visible become
    /// zero, as do bones touching them. Every frame needs pose coefficients of
    /// length `k`.
    pub fn from_clip(
        clip: &AnnotatedClip,
        graph: &SkeletonGraph,
        submotions: &[String],
        k: usize,
    ) -> Result<Self> {
        if clip.frames.is_empty() {
            return Err(Error::InvalidInput("empty clip".into()));
        }
        let v = graph.num_nodes;
        let (center, scale) = normalization(clip);
        let mut joints = Vec::with_capacity(clip.frames.len());
        let mut bones = Vec::with_capacity(clip.frames.len());
        let mut pose = Vec::with_capacity(clip.frames.len());
        for f in &clip.frames {
            if f.keypoints.len() != v {
                return Err(Error::DimensionMismatch {
                    expected: v,
                    got: f.keypoints.len(),
                });
            }
            let j: Vec<[f64; 2]> = f
                .keypoints
                .iter()
                .zip(&f.visibility)
                .map(|(p, vis)| {
                    if vis.is_visible() {
                        [(p[0] - center[0]) / scale, (p[1] - center[1]) / scale]
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect();
            let b = graph
                .edges
                .iter()
                .map(|&(parent, child)| {
                    if f.visibility[parent].is_visible() && f.visibility[child].is_visible() {
                        [j[child][0] - j[parent][0], j[child][1] - j[parent][1]]
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect();
            let alpha = f
                .alpha
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("frame lacks pose coefficients".into()))?;
            if alpha.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: alpha.len(),
                });
            }
            let slot = submotions
                .iter()
                .position(|s| *s == f.submotion)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("unknown sub-motion {:?}", f.submotion))
                })?;
            let mut p = alpha.clone();
            p.extend((0..submotions.len()).map(|i| if i == slot { 1.0 } else { 0.0 }));
            joints.push(j);
            bones.push(b);
            pose.push(p);
        }
        Ok(StreamInput {
            joints,
            bones,
            pose,
        })
    }
}

fn normalization(clip: &AnnotatedClip) -> ([f64; 2], f64) {
    let mut hip = [0.0; 2];
    let mut hips = 0usize;
    let mut torso = 0.0;
    let mut torsos = 0usize;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for f in &clip.frames {
        let vis = |i: usize| f.visibility.get(i).is_some_and(|v| v.is_visible());
        if vis(MID_HIP) {
            hip[0] += f.keypoints[MID_HIP][0];
            hip[1] += f.keypoints[MID_HIP][1];
            hips += 1;
        }
        if vis(MID_HIP) && vis(NECK) {
            let (a, b) = (f.keypoints[MID_HIP], f.keypoints[NECK]);
            torso += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            torsos += 1;
        }
        for (p, v) in f.keypoints.iter().zip(&f.visibility) {
            if v.is_visible() {
                for c in 0..2 {
                    lo[c] = lo[c].min(p[c]);
                    hi[c] = hi[c].max(p[c]);
                }
            }
        }
    }
    let center = if hips > 0 {
        [hip[0] / hips as f64, hip[1] / hips as f64]
    } else if lo[0].is_finite() {
        [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0]
    } else {
        [0.0; 2]
    };
    let mut scale = if torsos > 0 {
        torso / torsos as f64
    } else {
        0.0
    };
    if !(scale > 1e-9) && lo[0].is_finite() {
        scale = (hi[0] - lo[0]).max(hi[1] - lo[1]) / 3.0;
    }
    if !(scale > 1e-9) {
        scale = 1.0;
    }
    (center, scale)
}

/// Pooled features of each enabled stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamFeatures {
    pub joints: Option<Vec<f64>>,
    pub bones: Option<Vec<f64>>,
    pub pose: Option<Vec<f64>>,
}

impl StreamFeatures {
    /// `J ‖ B ‖ P` over the enabled streams.
    pub fn concat(&self) -> Vec<f64> {
        [&self.joints, &self.bones, &self.pose]
            .into_iter()
            .flatten()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

/// Adds parameters of the enabled streams under `prefix` (`j.`, `b.`, `p.`).
pub fn init_streams(
    params: &mut ParamSet,
    config: &StgcnConfig,
    graph: &SkeletonGraph,
    pose_width: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    config.validate()?;
    graph.validate()?;
    for (on, name) in [(config.streams.joints, "j"), (config.streams.bones, "b")] {
        if !on {
            continue;
        }
        for (i, shape) in config.layer_shapes(2).iter().enumerate() {
            init_layer(params, &format!("{name}.l{i}"), shape, graph.num_nodes, rng);
        }
    }
    if config.streams.pose {
        let c = config.pose_channels;
        params.insert(
            "p.in_w",
            he_normal(&[1, pose_width, c], pose_width, 1.0, rng),
        );
        params.insert("p.in_b", Tensor::zeros(&[c]));
        let k = config.pose_kernel;
        for i in 0..config.pose_blocks {
            params.insert(format!("p.r{i}.w1"), he_normal(&[k, c, c], k * c, 1.0, rng));
            params.insert(format!("p.r{i}.b1"), Tensor::zeros(&[c]));
            params.insert(format!("p.r{i}.w2"), he_normal(&[k, c, c], k * c, 0.5, rng));
            params.insert(format!("p.r{i}.b2"), Tensor::zeros(&[c]));
        }
        params.insert(
            "p.out_w",
            he_normal(&[c, config.pose_features], c, 1.0, rng),
        );
        params.insert("p.out_b", Tensor::zeros(&[config.pose_features]));
    }
    Ok(())
}

/// Graph constants shared by the streams of one forward pass.
#[derive(Clone, Debug)]
pub struct GraphConstants {
    pub graph: SkeletonGraph,
    /// Normalized adjacency per subset for the joint stream.
    pub adjacency: [Tensor; 3],
}

impl GraphConstants {
    pub fn new(graph: &SkeletonGraph) -> Result<Self> {
        Ok(GraphConstants {
            graph: graph.clone(),
            adjacency: build_partitioned_adjacency(graph)?,
        })
    }

    /// The bone stream runs on the same nodes with the neighbor roles reversed:
    /// centripetal and centrifugal subsets trade places.
    fn bone_adjacency(&self) -> [Tensor; 3] {
        let [r, cp, cf] = self.adjacency.clone();
        [r, cf, cp]
    }
}

fn node_major(frames: &[Vec<[f64; 2]>], nodes: usize, place: impl Fn(usize) -> usize) -> Tensor {
    let t = frames.len();
    let mut out = Tensor::zeros(&[nodes, t, 2]);
    for (ti, f) in frames.iter().enumerate() {
        for (i, p) in f.iter().enumerate() {
            let n = place(i);
            out.data_mut()[(n * t + ti) * 2] = p[0];
            out.data_mut()[(n * t + ti) * 2 + 1] = p[1];
        }
    }
    out
}

fn graph_stream(
    tape: &mut Tape,
    vars: &ParamVars,
    prefix: &str,
    input: Tensor,
    adjacency: [Tensor; 3],
    config: &StgcnConfig,
) -> Result<Var> {
    let mut x = tape.constant(input);
    let adj = adjacency.map(|a| tape.constant(a));
    for (i, shape) in config.layer_shapes(2).iter().enumerate() {
        let lv = LayerVars::from_params(vars, &format!("{prefix}.l{i}"), shape)?;
        x = stgcn_layer(tape, x, &adj, &lv, shape)?;
    }
    global_pool(tape, x)
}

/// Mean over the node and time axes of `[V, T, C]`, returned as `[C]`.
fn global_pool(tape: &mut Tape, x: Var) -> Result<Var> {
    let c = *tape.shape(x).last().unwrap();
    let m = tape.mean_axis(x, 0)?;
    let m = tape.mean_axis(m, 1)?;
    tape.reshape(m, &[c])
}

fn pose_stream(
    tape: &mut Tape,
    vars: &ParamVars,
    pose: &[Vec<f64>],
    config: &StgcnConfig,
) -> Result<Var> {
    let t = pose.len();
    let width = pose.first().map_or(0, Vec::len);
    if width == 0 || pose.iter().any(|p| p.len() != width) {
        return Err(Error::InvalidInput("ragged or empty pose stream".into()));
    }
    let data = pose.iter().flatten().copied().collect();
    let x = tape.constant(Tensor::new(vec![1, t, width], data)?);
    let h = tape.conv1d(x, vars.get("p.in_w")?, 1, 0)?;
    let h = tape.add(h, vars.get("p.in_b")?)?;
    let mut h = tape.relu(h);
    let pad = config.pose_kernel / 2;
    for i in 0..config.pose_blocks {
        let a = tape.conv1d(h, vars.get(&format!("p.r{i}.w1"))?, 1, pad)?;
        let a = tape.add(a, vars.get(&format!("p.r{i}.b1"))?)?;
        let a = tape.relu(a);
        let b = tape.conv1d(a, vars.get(&format!("p.r{i}.w2"))?, 1, pad)?;
        let b = tape.add(b, vars.get(&format!("p.r{i}.b2"))?)?;
        let s = tape.add(h, b)?;
        h = tape.relu(s);
    }
    let pooled = tape.mean_axis(h, 1)?;
    let pooled = tape.reshape(pooled, &[1, config.pose_channels])?;
    let out = tape.matmul(pooled, vars.get("p.out_w")?)?;
    let out = tape.add(out, vars.get("p.out_b")?)?;
    tape.reshape(out, &[config.pose_features])
}

/// Per-stream feature handles built on a tape.
#[derive(Clone, Copy, Debug)]
pub struct StreamVars {
    pub joints: Option<Var>,
    pub bones: Option<Var>,
    pub pose: Option<Var>,
    /// Concatenation of the enabled streams in `J ‖ B ‖ P` order.
    pub features: Var,
}

/// Runs the enabled streams on a tape.
pub fn streams_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    input: &StreamInput,
    consts: &GraphConstants,
    config: &StgcnConfig,
) -> Result<StreamVars> {
    if input.frames() != config.frames
        || input.bones.len() != config.frames
        || input.pose.len() != config.frames
    {
        return Err(Error::InvalidInput(format!(
            "streams need {} frames, got {}",
            config.frames,
            input.frames()
        )));
    }
    let v = consts.graph.num_nodes;
    let joints = if config.streams.joints {
        if input.joints.iter().any(|f| f.len() != v) {
            return Err(Error::DimensionMismatch {
                expected: v,
                got: input.joints[0].len(),
            });
        }
        let x = node_major(&input.joints, v, |i| i);
        Some(graph_stream(
            tape,
            vars,
            "j",
            x,
            consts.adjacency.clone(),
            config,
        )?)
    } else {
        None
    };
    let bones = if config.streams.bones {
        let nb = consts.graph.num_bones();
        if input.bones.iter().any(|f| f.len() != nb) {
            return Err(Error::DimensionMismatch {
                expected: nb,
                got: input.bones[0].len(),
            });
        }
        let place = consts.graph.bone_nodes();
        let x = node_major(&input.bones, v, |b| place[b]);
        Some(graph_stream(
            tape,
            vars,
            "b",
            x,
            consts.bone_adjacency(),
            config,
        )?)
    } else {
        None
    };
    let pose = if config.streams.pose {
        Some(pose_stream(tape, vars, &input.pose, config)?)
    } else {
        None
    };
    let parts: Vec<Var> = [joints, bones, pose].into_iter().flatten().collect();
    let features = if parts.len() == 1 {
        parts[0]
    } else {
        tape.concat(&parts, 0)?
    };
    Ok(StreamVars {
        joints,
        bones,
        pose,
        features,
    })
}

/// Forward pass of the enabled streams with fixed parameters.
pub fn run_streams(
    input: &StreamInput,
    params: &ParamSet,
    graph: &SkeletonGraph,
    config: &StgcnConfig,
) -> Result<StreamFeatures> {
    let consts = GraphConstants::new(graph)?;
    let mut tape = Tape::new();
    let vars = params.constants(&mut tape);
    let out = streams_on_tape(&mut tape, &vars, input, &consts, config)?;
    let read = |v: Option<Var>| v.map(|v| tape.value(v).data().to_vec());
    Ok(StreamFeatures {
        joints: read(out.joints),
        bones: read(out.bones),
        pose: read(out.pose),
    })
}
