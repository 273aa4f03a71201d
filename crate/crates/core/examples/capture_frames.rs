//! Fits capture states to noisy synthetic keypoints and reports PCK and pose error.

use actionscope::action_parse::AttributeSchema;
use actionscope::capture::{fit_frame, initial_state, CaptureConfig};
use actionscope::data_io::{synth_generate, SynthConfig};
use actionscope::kinematics::{forward_kinematics, project, SkeletonDef};
use actionscope::metrics::{pck, PckConfig};

fn main() -> anyhow::Result<()> {
    let skel = SkeletonDef::standard();
    let config = SynthConfig {
        clips: 10,
        keypoint_noise: 2.0,
        k: 20,
        ..SynthConfig::default()
    };
    let out = synth_generate(&AttributeSchema::diving(), &skel, None, &config)?;
    let capture = CaptureConfig::default();

    let (mut pred, mut gt, mut vis) = (Vec::new(), Vec::new(), Vec::new());
    for (clip, states) in out.clips.iter().zip(&out.states) {
        let f = clip.len() / 2;
        let frame = clip.frames[f].observed();
        let space = out
            .spaces
            .iter()
            .find(|s| s.submotion == clip.frames[f].submotion)
            .unwrap();
        let init = initial_state(&frame, space, &skel)?;
        let (state, diag) = fit_frame(&frame, space, &skel, &init, &capture)?;
        let theta = space.decode(&state.alpha.0)?;
        let joints = forward_kinematics(&skel, &theta, &state.beta)?;
        pred.push(project(&joints, &state.cam, &skel.keypoint_regressor));

        // score against the noiseless rendering of the true state
        let truth = &states[f];
        let theta = space.decode(&truth.alpha.0)?;
        let joints = forward_kinematics(&skel, &theta, &truth.beta)?;
        gt.push(project(&joints, &truth.cam, &skel.keypoint_regressor));
        vis.push(frame.visibility.clone());
        println!(
            "{:>10}: {} steps, loss {:.3}",
            space.submotion, diag.iterations, diag.loss.total
        );
    }
    println!(
        "PCK-0.3 {:.1}%",
        pck(&pred, &gt, &vis, &PckConfig::new(0.3)?)?
    );
    println!(
        "PCK-0.5 {:.1}%",
        pck(&pred, &gt, &vis, &PckConfig::new(0.5)?)?
    );
    Ok(())
}
