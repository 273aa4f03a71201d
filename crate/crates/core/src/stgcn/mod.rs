//! Multi-stream spatial-temporal graph convolution over joints, bones and pose
//! coefficients.
//!
//! Activations are node-major `[V, T, C]`, so temporal convolution is a batched
//! `conv1d` over nodes and the spatial step is a pair of matrix products.

pub mod graph;
pub mod layer;
pub mod params;
mod streams;

pub use graph::{build_partitioned_adjacency, SkeletonGraph, Subset};
pub use layer::{init_layer, stgcn_layer, LayerShape, LayerVars};
pub use params::{he_normal, Checkpoint, ParamSet, ParamVars, CHECKPOINT_VERSION};
pub use streams::{
    init_streams, run_streams, streams_on_tape, GraphConstants, StgcnConfig, StreamFeatures,
    StreamInput, StreamSet, StreamVars,
};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(k: usize, seed: u64) -> StreamInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pt = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let joints: Vec<Vec<[f64; 2]>> = (0..90).map(|_| (0..25).map(|_| pt()).collect()).collect();
        let bones = (0..90).map(|_| (0..24).map(|_| pt()).collect()).collect();
        let pose = (0..90)
            .map(|t| {
                (0..k + 2)
                    .map(|c| ((t * (c + 1)) as f64 * 0.1).sin())
                    .collect()
            })
            .collect();
        StreamInput {
            joints,
            bones,
            pose,
        }
    }

    fn params(config: &StgcnConfig, k: usize) -> ParamSet {
        let mut p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        init_streams(&mut p, config, &SkeletonGraph::body25(), k + 2, &mut rng).unwrap();
        p
    }

    #[test]
    fn default_streams_emit_768_features() {
        let config = StgcnConfig::default();
        let k = 3;
        let f = run_streams(
            &input(k, 0),
            &params(&config, k),
            &SkeletonGraph::body25(),
            &config,
        )
        .unwrap();
        assert_eq!(config.feature_dim(), 768);
        assert_eq!(f.concat().len(), 768);
        assert!(f.concat().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn pose_stream_is_much_smaller_than_graph_streams() {
        let p = params(&StgcnConfig::default(), 25);
        assert!(5 * p.count_prefix("p.") < p.count_prefix("j."));
    }

    #[test]
    fn zero_input_is_deterministic() {
        let config = StgcnConfig::compact();
        let p = params(&config, 4);
        let mut zero = input(4, 0);
        zero.joints.iter_mut().flatten().for_each(|x| *x = [0.0; 2]);
        zero.bones.iter_mut().flatten().for_each(|x| *x = [0.0; 2]);
        zero.pose.iter_mut().flatten().for_each(|x| *x = 0.0);
        let g = SkeletonGraph::body25();
        let a = run_streams(&zero, &p, &g, &config).unwrap();
        let b = run_streams(&zero, &p, &g, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn time_reversal_changes_features() {
        let config = StgcnConfig::compact();
        let p = params(&config, 4);
        let x = input(4, 5);
        let mut r = x.clone();
        r.joints.reverse();
        r.bones.reverse();
        r.pose.reverse();
        let g = SkeletonGraph::body25();
        let a = run_streams(&x, &p, &g, &config).unwrap().concat();
        let b = run_streams(&r, &p, &g, &config).unwrap().concat();
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-6, "max diff {diff}");
    }

    #[test]
    fn doubling_pose_only_changes_pose_block() {
        let config = StgcnConfig::compact();
        let p = params(&config, 4);
        let x = input(4, 6);
        let mut d = x.clone();
        d.pose.iter_mut().flatten().for_each(|v| *v *= 2.0);
        let g = SkeletonGraph::body25();
        let a = run_streams(&x, &p, &g, &config).unwrap();
        let b = run_streams(&d, &p, &g, &config).unwrap();
        assert_eq!(a.joints, b.joints);
        assert_eq!(a.bones, b.bones);
        assert_ne!(a.pose, b.pose);
    }

    #[test]
    fn wrong_frame_count_rejected() {
        let config = StgcnConfig::compact();
        let p = params(&config, 4);
        let mut x = input(4, 0);
        x.joints.pop();
        x.bones.pop();
        x.pose.pop();
        assert!(run_streams(&x, &p, &SkeletonGraph::body25(), &config).is_err());
    }

    #[test]
    fn stream_selection_parses() {
        let s = StreamSet::parse("J+B").unwrap();
        assert!(s.joints && s.bones && !s.pose);
        assert!(StreamSet::parse("").is_err());
        assert!(StreamSet::parse("J+X").is_err());
    }
}
