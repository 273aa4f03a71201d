//! Applies random rotation, scaling and flipping to a clip and checks that the
//! visible keypoint count is unchanged.

use actionscope::action_parse::AttributeSchema;
use actionscope::data_io::{
    augment, flip_clip, synth_generate, AugmentConfig, SeedStreams, SynthConfig,
};
use actionscope::kinematics::SkeletonDef;

fn visible(clip: &actionscope::data_io::AnnotatedClip) -> usize {
    clip.frames
        .iter()
        .map(|f| f.visibility.iter().filter(|v| v.is_visible()).count())
        .sum()
}

fn main() -> anyhow::Result<()> {
    let config = SynthConfig {
        clips: 1,
        occlusion_rate: 0.1,
        ..SynthConfig::default()
    };
    let out = synth_generate(
        &AttributeSchema::diving(),
        &SkeletonDef::standard(),
        None,
        &config,
    )?;
    let clip = &out.clips[0];
    let mut rng = SeedStreams::new(3).stream("augment");
    for i in 0..4 {
        let a = augment(clip, &AugmentConfig::default(), &mut rng);
        println!(
            "draw {i}: first keypoint {:?} -> {:?}, visible {} -> {}",
            clip.frames[0].keypoints[0],
            a.frames[0].keypoints[0],
            visible(clip),
            visible(&a)
        );
    }
    let twice = flip_clip(&flip_clip(clip));
    let err = clip
        .frames
        .iter()
        .zip(&twice.frames)
        .flat_map(|(a, b)| a.keypoints.iter().zip(&b.keypoints))
        .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
        .fold(0.0, f64::max);
    println!("double flip max deviation {err:.2e}");
    Ok(())
}
