//! Sub-motion pose embedding spaces, weak-perspective analysis-by-synthesis motion
//! capture, and multi-stream skeleton action parsing with a semantic-attribute head.

pub mod action_parse;
pub mod autodiff;
pub mod capture;
pub mod data_io;
pub mod embedding;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod numeric;
pub mod stgcn;

pub use error::{Error, Result};
