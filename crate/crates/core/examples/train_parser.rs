//! Trains a compact multi-stream parser with the attribute-mapping head on synthetic
//! diving clips and prints the validation curve.
//!
//! `cargo run --release --example train_parser -- 8` trains for 8 epochs.

use actionscope::action_parse::{
    train_parser, AttributeSchema, ParseSample, ParserConfig, ParserSpec, TrainConfig,
};
use actionscope::data_io::{synth_generate, SynthConfig};
use actionscope::kinematics::SkeletonDef;
use actionscope::stgcn::StgcnConfig;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let epochs = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(8);
    let schema = AttributeSchema::diving();
    let out = synth_generate(
        &schema,
        &SkeletonDef::standard(),
        None,
        &SynthConfig::default(),
    )?;

    let config = ParserConfig {
        stgcn: StgcnConfig::compact(),
        ..ParserConfig::default()
    };
    let spec = ParserSpec::new(config, schema)?;
    let samples = out
        .clips
        .iter()
        .map(|c| ParseSample::from_clip(c, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    let (train, val) = samples.split_at(samples.len() * 4 / 5);

    let result = train_parser(
        train,
        Some(val),
        &spec,
        &TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
    )?;
    for e in &result.curve {
        let v = e.val.as_ref().unwrap();
        println!(
            "epoch {:2} lr {:.0e} loss {:.3} val action {:5.1}% attributes {:?}",
            e.epoch,
            e.lr,
            e.train_loss,
            v.action_top1,
            v.attribute_top1
                .iter()
                .map(|a| a.round())
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
