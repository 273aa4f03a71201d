use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{pack_state, CaptureProblem};
use super::*;
use crate::action_parse::AttributeSchema;
use crate::autodiff::{check_gradient, Tape, Var};
use crate::data_io::{synth_generate, SynthConfig, SynthOutput};
use crate::embedding::{EmbeddingSpace, PoseCoefficients};
use crate::error::Error;
use crate::kinematics::{CameraParams, SkeletonDef};

fn fixture() -> (SkeletonDef, SynthOutput) {
    let skel = SkeletonDef::standard();
    let cfg = SynthConfig {
        clips: 2,
        frames: [20, 20],
        k: 20,
        seed: 11,
        ..SynthConfig::default()
    };
    let out = synth_generate(&AttributeSchema::diving(), &skel, None, &cfg).unwrap();
    (skel, out)
}

fn space_for<'a>(out: &'a SynthOutput, label: &str) -> &'a EmbeddingSpace {
    out.spaces.iter().find(|s| s.submotion == label).unwrap()
}

/// Truth state, its frame and its space for clip `c`, frame `f`.
fn truth(out: &SynthOutput, c: usize, f: usize) -> (CaptureState, ObservedFrame, &EmbeddingSpace) {
    let state = out.states[c][f].clone();
    let space = space_for(out, &state.submotion);
    (state, out.clips[c].frames[f].observed(), space)
}

fn perturbed(state: &CaptureState, space: &EmbeddingSpace, seed: u64) -> CaptureState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = state.clone();
    for (a, l) in s.alpha.0.iter_mut().zip(&space.eigenvalues) {
        *a += 0.3 * l.sqrt() * rng.gen_range(-1.0..1.0);
    }
    for b in &mut s.beta.0 {
        *b += rng.gen_range(-0.2..0.2);
    }
    s.cam.s *= 1.0 + rng.gen_range(-0.05..0.05);
    s.cam.t[0] += rng.gen_range(-5.0..5.0);
    s.cam.t[1] += rng.gen_range(-5.0..5.0);
    s
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn two_axis_space() -> EmbeddingSpace {
    let mut bases = vec![vec![0.0; 72]; 2];
    bases[0][3] = 1.0;
    bases[1][4] = 1.0;
    EmbeddingSpace {
        submotion: "a".into(),
        k: 2,
        mean: vec![0.0; 72],
        bases,
        eigenvalues: vec![4.0, 1.0],
        total_variance: None,
        coefficient_mean: None,
    }
}

#[test]
fn prior_examples() {
    let space = two_axis_space();
    assert_eq!(space.prior_weights(), vec![1.0, 2.0]);
    assert!((loss_prior(&space, &[3.0, 4.0]).unwrap() - 73f64.sqrt()).abs() < 1e-14);
    assert_eq!(loss_prior(&space, &[0.0, 0.0]).unwrap(), 0.0);
    assert!(loss_prior(&space, &[1.0]).is_err());
}

#[test]
fn mem_examples() {
    let w = LossWeights::default();
    assert_eq!((w.data, w.smpl), (10.0, 2.0));
    assert_eq!(combine_mem(1.0, 2.0, Some(3.0), w), 27.0);
    assert_eq!(combine_mem(0.0, 0.0, Some(0.0), w), 0.0);
    assert_eq!(combine_mem(1.0, 2.0, None, w), 21.0);
}

#[test]
fn data_and_smpl_examples() {
    let (skel, out) = fixture();
    let (state, frame, space) = truth(&out, 0, 3);
    assert!(loss_data(&state, &frame, &skel, space).unwrap() < 1e-9);

    let off = perturbed(&state, space, 1);
    let hidden = ObservedFrame {
        keypoints: frame.keypoints.clone(),
        visibility: vec![Visibility::Occluded; frame.keypoints.len()],
    };
    assert_eq!(loss_data(&off, &hidden, &skel, space).unwrap(), 0.0);
    assert!(loss_data(&off, &frame, &skel, space).unwrap() > 1.0);

    let sup = Supervision {
        theta: space.decode(&state.alpha.0).unwrap(),
        beta: state.beta.clone(),
    };
    assert!(loss_smpl(&state, &sup, space).unwrap() < 1e-12);
    let mut shifted = state.clone();
    shifted.beta.0[4] += 1.0;
    assert!((loss_smpl(&shifted, &sup, space).unwrap() - 1.0).abs() < 1e-12);

    let terms = loss_mem(
        &off,
        &frame,
        Some(&sup),
        space,
        &skel,
        LossWeights::default(),
    )
    .unwrap();
    let expected = combine_mem(terms.prior, terms.data, terms.smpl, LossWeights::default());
    assert!((terms.total - expected).abs() < 1e-9 * expected);
}

#[test]
fn every_capture_loss_passes_gradient_check() {
    let (skel, out) = fixture();
    let (state, frame, space) = truth(&out, 1, 5);
    let off = perturbed(&state, space, 2);
    let sup = Supervision {
        theta: space.decode(&state.alpha.0).unwrap(),
        beta: state.beta.clone(),
    };
    let problem = CaptureProblem {
        skel: &skel,
        space,
        frame: &frame,
        supervision: Some(&sup),
        weights: LossWeights::default(),
    };
    let x = pack_state(&off);
    type Pick = fn(&super::losses::LossGraph) -> Var;
    let picks: [(&str, Pick); 4] = [
        ("prior", |g| g.prior),
        ("data", |g| g.data),
        ("smpl", |g| g.smpl.unwrap()),
        ("mem", |g| g.total),
    ];
    for (name, pick) in picks {
        let f = |tape: &mut Tape, v: Var| Ok(pick(&problem.build(tape, v)?));
        let r = check_gradient(f, &x, 1e-6, 1e-4).unwrap();
        assert!(r.passed, "{name}: {}", r.max_error);
    }
}

#[test]
fn starting_at_truth_needs_at_most_one_step() {
    let (skel, out) = fixture();
    let (state, frame, space) = truth(&out, 0, 7);
    let (fit, d) = fit_frame(&frame, space, &skel, &state, &CaptureConfig::default()).unwrap();
    assert!(d.iterations <= 1, "{}", d.iterations);
    assert!(max_diff(&fit.alpha.0, &state.alpha.0) < 1e-6);
}

#[test]
fn perturbed_start_recovers_truth_monotonically() {
    let (skel, out) = fixture();
    for (c, f) in [(0, 2), (1, 15)] {
        let (state, frame, space) = truth(&out, c, f);
        let init = perturbed(&state, space, 3 + f as u64);
        let (fit, d) = fit_frame(&frame, space, &skel, &init, &CaptureConfig::default()).unwrap();
        assert!(d.converged, "{:?}", d.stop);
        assert!(max_diff(&fit.alpha.0, &state.alpha.0) < 1e-3);
        assert!(d.loss_trace.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn adam_method_is_monotone_too() {
    let (skel, out) = fixture();
    let (state, frame, space) = truth(&out, 0, 9);
    let init = perturbed(&state, space, 4);
    let config = CaptureConfig {
        method: Method::Adam,
        max_iterations: 200,
        ..CaptureConfig::default()
    };
    let (_, d) = fit_frame(&frame, space, &skel, &init, &config).unwrap();
    assert!(d.loss_trace.windows(2).all(|w| w[1] < w[0]));
    assert!(d.loss_trace.last().unwrap() < &d.loss_trace[0]);
}

fn transform(frame: &ObservedFrame, c: f64, d: [f64; 2]) -> ObservedFrame {
    ObservedFrame {
        keypoints: frame
            .keypoints
            .iter()
            .map(|k| [c * k[0] + d[0], c * k[1] + d[1]])
            .collect(),
        visibility: frame.visibility.clone(),
    }
}

#[test]
fn translation_and_scale_move_only_the_camera() {
    let (skel, out) = fixture();
    let (state, frame, space) = truth(&out, 1, 4);
    let config = CaptureConfig::default();
    let init = perturbed(&state, space, 5);
    let (base, _) = fit_frame(&frame, space, &skel, &init, &config).unwrap();

    let d = [37.0, -12.5];
    let mut moved = init.clone();
    moved.cam.t = [init.cam.t[0] + d[0], init.cam.t[1] + d[1]];
    let (fit, _) = fit_frame(&transform(&frame, 1.0, d), space, &skel, &moved, &config).unwrap();
    assert!(max_diff(&fit.alpha.0, &base.alpha.0) < 1e-6);
    assert!(max_diff(&fit.beta.0, &base.beta.0) < 1e-6);
    assert!((fit.cam.s - base.cam.s).abs() < 1e-6);
    assert!((fit.cam.t[0] - base.cam.t[0] - d[0]).abs() < 1e-6);
    assert!((fit.cam.t[1] - base.cam.t[1] - d[1]).abs() < 1e-6);

    let c = 1.7;
    let mut scaled = init.clone();
    scaled.cam = CameraParams {
        s: c * init.cam.s,
        t: [c * init.cam.t[0], c * init.cam.t[1]],
    };
    let (fit, _) = fit_frame(
        &transform(&frame, c, [0.0; 2]),
        space,
        &skel,
        &scaled,
        &config,
    )
    .unwrap();
    assert!(max_diff(&fit.alpha.0, &base.alpha.0) < 1e-6);
    assert!((fit.cam.s - c * base.cam.s).abs() < 1e-6 * c * base.cam.s);
    assert!(max_diff(&fit.cam.t, &[c * base.cam.t[0], c * base.cam.t[1]]) < 1e-6 * c * base.cam.s);
}

#[test]
fn too_few_visible_keypoints_is_rejected() {
    let (skel, out) = fixture();
    let (state, mut frame, space) = truth(&out, 0, 0);
    for v in frame.visibility.iter_mut().skip(5) {
        *v = Visibility::Unlabeled;
    }
    match fit_frame(&frame, space, &skel, &state, &CaptureConfig::default()) {
        Err(Error::UnderDetermined {
            visible: 5,
            needed: 6,
        }) => {}
        other => panic!("{:?}", other.map(|r| r.1.iterations)),
    }
}

#[test]
fn selection_picks_the_generating_space() {
    let (skel, out) = fixture();
    let config = CaptureConfig::default();
    for space in &out.spaces {
        let theta = space.decode(&vec![0.0; space.k]).unwrap();
        let state = CaptureState {
            alpha: PoseCoefficients::zeros(space.k),
            beta: crate::kinematics::ShapeVector::zeros(skel.shape_dim()),
            cam: CameraParams::new(200.0, [320.0, 240.0]).unwrap(),
            submotion: space.submotion.clone(),
        };
        let joints = crate::kinematics::forward_kinematics(&skel, &theta, &state.beta).unwrap();
        let kp = crate::kinematics::project(&joints, &state.cam, &skel.keypoint_regressor);
        let frame = ObservedFrame::all_visible(kp);
        let sel = select_submotion(&frame, &out.spaces, &skel, &config).unwrap();
        assert_eq!(sel.label, space.submotion);
        assert_eq!(sel.residuals.len(), out.spaces.len());

        let twins = vec![space.clone(), space.clone()];
        assert_eq!(
            select_submotion(&frame, &twins, &skel, &config)
                .unwrap()
                .index,
            0
        );
    }
    let frame = out.clips[0].frames[0].observed();
    assert!(select_submotion(&frame, &out.spaces[..1], &skel, &config).is_err());
}

#[test]
fn clip_capture_records_failures_and_continues() {
    let (skel, out) = fixture();
    let clip = &out.clips[0];
    let mut frames: Vec<ObservedFrame> = clip.observed().into_iter().take(4).collect();
    frames[1]
        .visibility
        .iter_mut()
        .for_each(|v| *v = Visibility::Occluded);
    let labels: Vec<String> = clip.labels().into_iter().take(4).collect();
    let cap = capture_clip(
        &frames,
        &out.spaces,
        &skel,
        Some(&labels),
        &CaptureConfig::default(),
    )
    .unwrap();
    assert_eq!(cap.frames.len(), 4);
    assert!(cap.frames[1].state.is_none() && cap.frames[1].error.is_some());
    for i in [0, 2, 3] {
        let f = &cap.frames[i];
        assert!(f.error.is_none());
        assert_eq!(f.reproj2d.as_ref().unwrap().len(), 25);
        let err = max_diff(
            &f.state.as_ref().unwrap().alpha.0,
            &out.states[0][i].alpha.0,
        );
        assert!(err < 1e-3, "frame {i}: {err}");
    }
    assert!(capture_clip(&[], &out.spaces, &skel, None, &CaptureConfig::default()).is_err());
    assert!(capture_clip(
        &frames,
        &out.spaces,
        &skel,
        Some(&labels[..2]),
        &CaptureConfig::default()
    )
    .is_err());
}
