//! Poses the built-in skeleton, projects it with a weak-perspective camera and
//! prints a few keypoints.

use actionscope::kinematics::{
    forward_kinematics, project, CameraParams, PoseVector, ShapeVector, SkeletonDef,
};

fn main() -> anyhow::Result<()> {
    let skel = SkeletonDef::standard();
    let mut theta = vec![0.0; skel.pose_dim()];
    // bend the spine forward and raise one shoulder
    theta[3 * 3] = 0.4;
    theta[3 * 16 + 2] = -1.2;
    let theta = PoseVector::new(theta, skel.num_joints())?;
    let beta = ShapeVector::zeros(skel.shape_dim());

    let joints = forward_kinematics(&skel, &theta, &beta)?;
    let cam = CameraParams::new(200.0, [320.0, 240.0])?;
    let keypoints = project(&joints, &cam, &skel.keypoint_regressor);

    println!("{} joints, {} keypoints", joints.len(), keypoints.len());
    for (i, k) in keypoints.iter().enumerate().take(8) {
        println!("keypoint {i:2}: ({:7.2}, {:7.2})", k[0], k[1]);
    }
    Ok(())
}
