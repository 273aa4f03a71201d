//! Semantic-attribute action parsing: attribute schema, mapping heads, losses,
//! score discretization and training.

mod losses;
mod model;
mod samb;
mod schema;
mod score;
mod train;

pub use losses::{
    loss_apm, loss_apm_on_tape, loss_attr, loss_attr_on_tape, loss_task, nll_on_tape, LAMBDA_ACTION,
};
pub use model::{EvalReport, ParseSample, ParserConfig, ParserModel, ParserSpec};
pub use samb::{
    head_on_tape, init_head, samb_forward, HeadConfig, HeadKind, HeadVars, ParsePrediction,
};
pub use schema::{
    AttributeDef, AttributeSchema, Combination, ARM_STAND, POSITION, SOMERSAULT, TAKE_OFF, TWIST,
};
pub use score::{bin_center, discretize_score, SCORE_BINS};
pub use train::{train_parser, EpochStats, TrainConfig, TrainResult};
