//! Fits per-sub-motion pose spaces and a pooled space on synthetic mocap and compares
//! how many components each needs for 95% of the variance.

use actionscope::action_parse::AttributeSchema;
use actionscope::data_io::{synth_generate, SynthConfig};
use actionscope::embedding::fit_space;
use actionscope::kinematics::{PoseVector, SkeletonDef};

fn main() -> anyhow::Result<()> {
    let skel = SkeletonDef::standard();
    let config = SynthConfig {
        clips: 1,
        ..SynthConfig::default()
    };
    let out = synth_generate(&AttributeSchema::diving(), &skel, None, &config)?;

    let dim = skel.pose_dim();
    for label in out.mocap.labels() {
        let space = fit_space(&out.mocap.poses_for(&label), dim, &label)?;
        println!(
            "{label:>10}: {:?} components for 95%",
            space.components_for(0.95)
        );
    }
    let all: Vec<PoseVector> = out
        .mocap
        .frames
        .iter()
        .map(|f| PoseVector(f.theta.clone()))
        .collect();
    let pooled = fit_space(&all, dim, "pooled")?;
    println!(
        "{:>10}: {:?} components for 95%",
        "pooled",
        pooled.components_for(0.95)
    );

    let space = &out.spaces[0];
    let pose = space.decode(&vec![0.5; space.k])?;
    let back = space.encode(pose.as_slice())?;
    println!("encode(decode(0.5)) first entries: {:?}", &back.0[..3]);
    Ok(())
}
