//! Captures a synthetic clip without sub-motion labels and compares the selected
//! space of each frame with the annotation.

use actionscope::action_parse::AttributeSchema;
use actionscope::capture::{capture_clip, CaptureConfig};
use actionscope::data_io::{synth_generate, SynthConfig};
use actionscope::kinematics::SkeletonDef;

fn main() -> anyhow::Result<()> {
    let skel = SkeletonDef::standard();
    let config = SynthConfig {
        clips: 1,
        frames: [30, 30],
        ..SynthConfig::default()
    };
    let out = synth_generate(&AttributeSchema::diving(), &skel, None, &config)?;
    let clip = &out.clips[0];
    let result = capture_clip(
        &clip.observed(),
        &out.spaces,
        &skel,
        None,
        &CaptureConfig::default(),
    )?;

    let mut hits = 0;
    for (f, (frame, truth)) in result.frames.iter().zip(clip.labels()).enumerate() {
        let got = frame
            .state
            .as_ref()
            .map(|s| s.submotion.clone())
            .unwrap_or_default();
        hits += usize::from(got == truth);
        println!("frame {f:2}: annotated {truth:>10}, selected {got:>10}");
    }
    println!("selection accuracy {hits}/{}", clip.len());
    Ok(())
}
