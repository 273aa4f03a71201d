//! Runs the joint, bone and pose-coefficient streams on one synthetic clip and prints
//! the feature layout.

use actionscope::action_parse::AttributeSchema;
use actionscope::data_io::{
    resample_clip, synth_generate, SeedStreams, SynthConfig, CLIP_FRAMES, SUBMOTIONS,
};
use actionscope::kinematics::SkeletonDef;
use actionscope::stgcn::{
    init_streams, run_streams, ParamSet, SkeletonGraph, StgcnConfig, StreamInput,
};

fn main() -> anyhow::Result<()> {
    let config = SynthConfig {
        clips: 1,
        ..SynthConfig::default()
    };
    let out = synth_generate(
        &AttributeSchema::diving(),
        &SkeletonDef::standard(),
        None,
        &config,
    )?;
    let clip = resample_clip(&out.clips[0], CLIP_FRAMES)?;

    let graph = SkeletonGraph::body25();
    let submotions: Vec<String> = SUBMOTIONS.iter().map(|s| s.to_string()).collect();
    let input = StreamInput::from_clip(&clip, &graph, &submotions, config.k)?;

    let stgcn = StgcnConfig::default();
    let mut params = ParamSet::new();
    let pose_width = config.k + submotions.len();
    init_streams(
        &mut params,
        &stgcn,
        &graph,
        pose_width,
        &mut SeedStreams::new(0).stream("init"),
    )?;
    println!(
        "{} parameter tensors, {} scalars",
        params.len(),
        params.num_scalars()
    );

    let started = std::time::Instant::now();
    let features = run_streams(&input, &params, &graph, &stgcn)?;
    let all = features.concat();
    println!(
        "J {} + B {} + P {} = {} features in {:.2?}",
        features.joints.as_ref().map_or(0, Vec::len),
        features.bones.as_ref().map_or(0, Vec::len),
        features.pose.as_ref().map_or(0, Vec::len),
        all.len(),
        started.elapsed()
    );
    Ok(())
}
