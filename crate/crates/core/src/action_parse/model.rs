use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{loss_apm_on_tape, loss_attr_on_tape, nll_on_tape};
use super::samb::{
    head_on_tape, init_head, read_prediction, HeadConfig, HeadKind, ParsePrediction,
};
use super::score::discretize_score;
use super::AttributeSchema;
use crate::autodiff::{Tape, Var};
use crate::data_io::{resample_clip, AnnotatedClip, SUBMOTIONS};
use crate::embedding::DEFAULT_K;
use crate::error::{Error, Result};
use crate::metrics::top1;
use crate::stgcn::{
    init_streams, streams_on_tape, Checkpoint, GraphConstants, ParamSet, ParamVars, SkeletonGraph,
    StgcnConfig, StreamInput,
};

/// Architecture of a parser: streams, head and pose-stream input layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParserConfig {
    pub stgcn: StgcnConfig,
    pub head: HeadConfig,
    /// Pose coefficients per frame.
    pub k: usize,
    /// Sub-motion labels in one-hot order.
    pub submotions: Vec<String>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            stgcn: StgcnConfig::default(),
            head: HeadConfig::default(),
            k: DEFAULT_K,
            submotions: SUBMOTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ParserConfig {
    pub fn pose_width(&self) -> usize {
        self.k + self.submotions.len()
    }
}

/// Everything besides parameters that a checkpoint must reproduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParserSpec {
    pub config: ParserConfig,
    pub schema: AttributeSchema,
    pub graph: SkeletonGraph,
}

impl ParserSpec {
    pub fn new(config: ParserConfig, schema: AttributeSchema) -> Result<Self> {
        let spec = ParserSpec {
            config,
            schema,
            graph: SkeletonGraph::body25(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.graph.validate()?;
        self.config.stgcn.validate()?;
        if self.config.k == 0 || self.config.submotions.is_empty() {
            return Err(Error::InvalidInput(
                "pose stream needs coefficients and sub-motion labels".into(),
            ));
        }
        Ok(())
    }

    /// Freshly initialized parameters.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Result<ParamSet> {
        let mut p = ParamSet::new();
        init_streams(
            &mut p,
            &self.config.stgcn,
            &self.graph,
            self.config.pose_width(),
            rng,
        )?;
        init_head(
            &mut p,
            &self.schema,
            self.config.stgcn.feature_dim(),
            &self.config.head,
            rng,
        )?;
        Ok(p)
    }
}

/// A clip on the model's frame grid with its stream inputs and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseSample {
    pub clip: AnnotatedClip,
    pub input: StreamInput,
}

impl ParseSample {
    /// Resamples the clip to the model's frame count when needed.
    pub fn from_clip(clip: &AnnotatedClip, spec: &ParserSpec) -> Result<Self> {
        clip.validate()?;
        if !spec.schema.is_legal(&clip.attributes, clip.action) {
            return Err(Error::InvalidInput(format!(
                "labels {:?} / {} are not a legal combination",
                clip.attributes, clip.action
            )));
        }
        let frames = spec.config.stgcn.frames;
        let clip = if clip.len() == frames {
            clip.clone()
        } else {
            resample_clip(clip, frames)?
        };
        let input = spec.input(&clip)?;
        Ok(ParseSample { clip, input })
    }

    pub fn score_bin(&self) -> Result<usize> {
        discretize_score(self.clip.score)
    }
}

impl ParserSpec {
    pub fn input(&self, clip: &AnnotatedClip) -> Result<StreamInput> {
        StreamInput::from_clip(clip, &self.graph, &self.config.submotions, self.config.k)
    }
}

/// Loss and prediction of one sample on a tape.
pub(super) struct Forward {
    /// Present when labels were given.
    pub loss: Option<Var>,
    pub prediction: ParsePrediction,
}

pub(super) fn forward(
    tape: &mut Tape,
    vars: &ParamVars,
    consts: &GraphConstants,
    spec: &ParserSpec,
    input: &StreamInput,
    labels: Option<(&AnnotatedClip, Option<usize>)>,
) -> Result<Forward> {
    let streams = streams_on_tape(tape, vars, input, consts, &spec.config.stgcn)?;
    let h = head_on_tape(
        tape,
        vars,
        streams.features,
        &spec.schema,
        &spec.config.head,
    )?;
    let prediction = read_prediction(tape, &h);
    let Some((clip, score_bin)) = labels else {
        return Ok(Forward {
            loss: None,
            prediction,
        });
    };
    let task = nll_on_tape(tape, h.action, clip.action)?;
    let mut loss = match spec.config.head.kind {
        HeadKind::Samb => {
            let attr = loss_attr_on_tape(tape, &h.attributes, &clip.attributes)?;
            loss_apm_on_tape(tape, attr, task)?
        }
        HeadKind::BlackBox => task,
    };
    if let (Some(s), Some(bin)) = (h.score, score_bin) {
        let l = nll_on_tape(tape, s, bin)?;
        loss = tape.add(loss, l)?;
    }
    Ok(Forward {
        loss: Some(loss),
        prediction,
    })
}

/// A parser with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    pub spec: ParserSpec,
    pub params: ParamSet,
}

/// Top-1 accuracies (percent) and mean loss over an evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub attribute_top1: Vec<f64>,
    pub action_top1: f64,
    pub score_top1: Option<f64>,
    pub loss: f64,
}

impl ParserModel {
    pub fn init(spec: ParserSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let params = spec.init_params(rng)?;
        Ok(ParserModel { spec, params })
    }

    pub fn predict(&self, input: &StreamInput) -> Result<ParsePrediction> {
        let consts = GraphConstants::new(&self.spec.graph)?;
        let mut tape = Tape::new();
        let vars = self.params.constants(&mut tape);
        Ok(forward(&mut tape, &vars, &consts, &self.spec, input, None)?.prediction)
    }

    /// Predictions and loss of every sample, evaluated in parallel.
    pub fn evaluate(&self, samples: &[ParseSample]) -> Result<(Vec<ParsePrediction>, EvalReport)> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty evaluation set".into()));
        }
        let consts = GraphConstants::new(&self.spec.graph)?;
        let results: Vec<Result<(ParsePrediction, f64)>> = samples
            .par_iter()
            .map(|s| {
                let mut tape = Tape::new();
                let vars = self.params.constants(&mut tape);
                let bin = if self.spec.config.head.score_head {
                    Some(s.score_bin()?)
                } else {
                    None
                };
                let f = forward(
                    &mut tape,
                    &vars,
                    &consts,
                    &self.spec,
                    &s.input,
                    Some((&s.clip, bin)),
                )?;
                let loss = f.loss.map_or(f64::NAN, |l| tape.value(l).item());
                Ok((f.prediction, loss))
            })
            .collect();
        let mut preds = Vec::with_capacity(samples.len());
        let mut loss = 0.0;
        for r in results {
            let (p, l) = r?;
            preds.push(p);
            loss += l;
        }
        let report = self.report(samples, &preds, loss / samples.len() as f64)?;
        Ok((preds, report))
    }

    fn report(
        &self,
        samples: &[ParseSample],
        preds: &[ParsePrediction],
        loss: f64,
    ) -> Result<EvalReport> {
        let actions: Vec<Vec<f64>> = preds.iter().map(|p| p.action.clone()).collect();
        let gt: Vec<usize> = samples.iter().map(|s| s.clip.action).collect();
        let attribute_top1 = if self.spec.config.head.kind == HeadKind::Samb {
            (0..self.spec.schema.num_attributes())
                .map(|c| {
                    let p: Vec<Vec<f64>> = preds.iter().map(|p| p.attributes[c].clone()).collect();
                    let g: Vec<usize> = samples.iter().map(|s| s.clip.attributes[c]).collect();
                    top1(&p, &g)
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let score_top1 = if self.spec.config.head.score_head {
            let p: Vec<Vec<f64>> = preds
                .iter()
                .map(|p| p.score.clone().unwrap_or_default())
                .collect();
            let g = samples
                .iter()
                .map(ParseSample::score_bin)
                .collect::<Result<Vec<_>>>()?;
            Some(top1(&p, &g)?)
        } else {
            None
        };
        Ok(EvalReport {
            attribute_top1,
            action_top1: top1(&actions, &gt)?,
            score_top1,
            loss,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint<ParserSpec> {
        Checkpoint::new(self.spec.clone(), self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Loads a checkpoint and validates every parameter shape against its spec.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    pub fn from_checkpoint(c: Checkpoint<ParserSpec>) -> Result<Self> {
        c.model.validate()?;
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let expected = c.model.init_params(&mut rng)?;
        c.params.check_layout(&expected)?;
        if !c.params.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(ParserModel {
            spec: c.model,
            params: c.params,
        })
    }
}
