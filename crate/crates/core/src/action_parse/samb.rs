use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::score::SCORE_BINS;
use super::AttributeSchema;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::stgcn::{he_normal, ParamSet, ParamVars};

/// How the action label is predicted from stream features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Per-attribute heads whose stacked probabilities feed the action head.
    Samb,
    /// One classifier from features straight to action labels.
    BlackBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Hidden width of each attribute head.
    pub attribute_hidden: usize,
    /// Hidden width of the action head.
    pub action_hidden: usize,
    /// Adds a classifier over score bins.
    pub score_head: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            kind: HeadKind::Samb,
            attribute_hidden: 64,
            action_hidden: 64,
            score_head: false,
        }
    }
}

/// Probabilities of one parse. `attributes` is empty for the black-box head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsePrediction {
    pub attributes: Vec<Vec<f64>>,
    pub action: Vec<f64>,
    pub score: Option<Vec<f64>>,
}

fn init_mlp(params: &mut ParamSet, prefix: &str, sizes: [usize; 3], rng: &mut ChaCha8Rng) {
    let [i, h, o] = sizes;
    params.insert(format!("{prefix}.w1"), he_normal(&[i, h], i, 1.0, rng));
    params.insert(format!("{prefix}.b1"), Tensor::zeros(&[h]));
    params.insert(format!("{prefix}.w2"), he_normal(&[h, o], h, 0.5, rng));
    params.insert(format!("{prefix}.b2"), Tensor::zeros(&[o]));
}

/// Adds head parameters (`h.` prefix) for features of width `feature_dim`.
pub fn init_head(
    params: &mut ParamSet,
    schema: &AttributeSchema,
    feature_dim: usize,
    config: &HeadConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    schema.validate()?;
    if feature_dim == 0 || config.attribute_hidden == 0 || config.action_hidden == 0 {
        return Err(Error::InvalidInput("empty head layer".into()));
    }
    match config.kind {
        HeadKind::Samb => {
            for (c, a) in schema.attributes.iter().enumerate() {
                init_mlp(
                    params,
                    &format!("h.sa{c}"),
                    [feature_dim, config.attribute_hidden, a.classes],
                    rng,
                );
            }
            let stacked = schema.class_counts().iter().sum();
            init_mlp(
                params,
                "h.action",
                [stacked, config.action_hidden, schema.action_labels],
                rng,
            );
        }
        HeadKind::BlackBox => init_mlp(
            params,
            "h.action",
            [feature_dim, config.action_hidden, schema.action_labels],
            rng,
        ),
    }
    if config.score_head {
        init_mlp(
            params,
            "h.score",
            [feature_dim, config.attribute_hidden, SCORE_BINS],
            rng,
        );
    }
    Ok(())
}

/// Two affine layers with relu between them and a softmax on top, on a vector.
fn mlp(tape: &mut Tape, vars: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let n = tape.shape(x)[0];
    let row = tape.reshape(x, &[1, n])?;
    let h = tape.matmul(row, vars.get(&format!("{prefix}.w1"))?)?;
    let h = tape.add(h, vars.get(&format!("{prefix}.b1"))?)?;
    let h = tape.relu(h);
    let o = tape.matmul(h, vars.get(&format!("{prefix}.w2"))?)?;
    let o = tape.add(o, vars.get(&format!("{prefix}.b2"))?)?;
    let width = tape.shape(o)[1];
    let o = tape.reshape(o, &[width])?;
    Ok(tape.softmax(o))
}

/// Probability handles of one head evaluation.
#[derive(Clone, Debug)]
pub struct HeadVars {
    pub attributes: Vec<Var>,
    /// Concatenated attribute probabilities fed to the action head (SAMB only).
    pub stacked: Option<Var>,
    pub action: Var,
    pub score: Option<Var>,
}

/// Head forward pass on a feature vector `[F]`.
pub fn head_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    features: Var,
    schema: &AttributeSchema,
    config: &HeadConfig,
) -> Result<HeadVars> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 1 {
        return Err(Error::shape("head", &shape, &[0]));
    }
    let (attributes, stacked, action) = match config.kind {
        HeadKind::Samb => {
            let attrs = (0..schema.num_attributes())
                .map(|c| mlp(tape, vars, &format!("h.sa{c}"), features))
                .collect::<Result<Vec<_>>>()?;
            let stacked = tape.concat(&attrs, 0)?;
            let action = mlp(tape, vars, "h.action", stacked)?;
            (attrs, Some(stacked), action)
        }
        HeadKind::BlackBox => (Vec::new(), None, mlp(tape, vars, "h.action", features)?),
    };
    let score = if config.score_head {
        Some(mlp(tape, vars, "h.score", features)?)
    } else {
        None
    };
    Ok(HeadVars {
        attributes,
        stacked,
        action,
        score,
    })
}

/// Head probabilities of a fixed feature vector.
pub fn samb_forward(
    features: &[f64],
    schema: &AttributeSchema,
    params: &ParamSet,
    config: &HeadConfig,
) -> Result<ParsePrediction> {
    let w1 = match config.kind {
        HeadKind::Samb => "h.sa0.w1",
        HeadKind::BlackBox => "h.action.w1",
    };
    let expected = params.get(w1)?.shape()[0];
    if features.len() != expected || features.is_empty() {
        return Err(Error::DimensionMismatch {
            expected,
            got: features.len(),
        });
    }
    let mut tape = Tape::new();
    let vars = params.constants(&mut tape);
    let f = tape.constant(Tensor::vector(features.to_vec()));
    let h = head_on_tape(&mut tape, &vars, f, schema, config)?;
    Ok(read_prediction(&tape, &h))
}

pub(super) fn read_prediction(tape: &Tape, h: &HeadVars) -> ParsePrediction {
    ParsePrediction {
        attributes: h
            .attributes
            .iter()
            .map(|v| tape.value(*v).data().to_vec())
            .collect(),
        action: tape.value(h.action).data().to_vec(),
        score: h.score.map(|v| tape.value(v).data().to_vec()),
    }
}
