use proptest::prelude::*;

use actionscope::action_parse::{bin_center, discretize_score, SCORE_BINS};
use actionscope::autodiff::{Tape, Tensor};
use actionscope::capture::Visibility;
use actionscope::embedding::fit_space;
use actionscope::kinematics::{
    forward_kinematics, rodrigues, PoseVector, ShapeVector, SkeletonDef,
};
use actionscope::metrics::{average_ranks, pck, spearman, top1, PckConfig};

fn matrix_vec(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rodrigues_is_a_rotation(x in -4.0f64..4.0, y in -4.0f64..4.0, z in -4.0f64..4.0) {
        let r = rodrigues([x, y, z]);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                prop_assert!((dot - f64::from(i == j)).abs() < 1e-12);
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        prop_assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bone_lengths_ignore_pose(theta in prop::collection::vec(-2.0f64..2.0, 72)) {
        let skel = SkeletonDef::standard();
        let beta = ShapeVector::zeros(skel.shape_dim());
        let rest = forward_kinematics(&skel, &PoseVector::zeros(24), &beta).unwrap();
        let posed = forward_kinematics(&skel, &PoseVector(theta), &beta).unwrap();
        for (i, j) in skel.joints.iter().enumerate() {
            if let Ok(p) = usize::try_from(j.parent) {
                let len = |x: &[[f64; 3]]| (0..3).map(|k| (x[i][k] - x[p][k]).powi(2)).sum::<f64>().sqrt();
                prop_assert!((len(&rest) - len(&posed)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(x in prop::collection::vec(-50.0f64..50.0, 1..30)) {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::vector(x));
        let p = tape.softmax(v);
        let p = tape.value(p).data().to_vec();
        prop_assert!(p.iter().all(|&q| (0.0..=1.0).contains(&q)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_is_associative(a in matrix_vec(3, 4), b in matrix_vec(4, 2), c in matrix_vec(2, 5)) {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![3, 4], a).unwrap());
        let b = tape.leaf(Tensor::new(vec![4, 2], b).unwrap());
        let c = tape.leaf(Tensor::new(vec![2, 5], c).unwrap());
        let ab = tape.matmul(a, b).unwrap();
        let left = tape.matmul(ab, c).unwrap();
        let bc = tape.matmul(b, c).unwrap();
        let right = tape.matmul(a, bc).unwrap();
        for (l, r) in tape.value(left).data().iter().zip(tape.value(right).data()) {
            prop_assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        pairs in prop::collection::vec((0u8..10, 0u8..10), 3..40)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        if let Ok(r) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            prop_assert_eq!(r, spearman(&y, &x).unwrap());
            prop_assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_ignores_monotone_maps(x in prop::collection::vec(-5.0f64..5.0, 3..30), y in prop::collection::vec(-5.0f64..5.0, 30)) {
        let y = &y[..x.len()];
        let warped: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        if let (Ok(a), Ok(b)) = (spearman(&x, y), spearman(&warped, y)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_sum_to_triangle(x in prop::collection::vec(0u8..6, 1..50)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let n = x.len() as f64;
        prop_assert!((average_ranks(&x).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn pck_grows_with_threshold(
        noise in prop::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 25),
        hidden in prop::collection::vec(any::<bool>(), 25),
    ) {
        let gt: Vec<[f64; 2]> = (0..25).map(|i| [300.0 + 9.0 * i as f64, 100.0 + 13.0 * (i % 5) as f64]).collect();
        let pred: Vec<[f64; 2]> = gt.iter().zip(&noise).map(|(g, n)| [g[0] + n.0, g[1] + n.1]).collect();
        let vis: Vec<Visibility> = hidden.iter().enumerate()
            .map(|(i, &h)| if h && i != 0 { Visibility::Occluded } else { Visibility::Visible })
            .collect();
        let mut last = 0.0;
        for t in [0.05, 0.1, 0.3, 0.5, 1.0, 4.0] {
            let v = pck(&[pred.clone()], &[gt.clone()], &[vis.clone()], &PckConfig::new(t).unwrap()).unwrap();
            prop_assert!((0.0..=100.0).contains(&v) && v >= last);
            last = v;
        }
        let exact = pck(&[gt.clone()], &[gt.clone()], &[vis.clone()], &PckConfig::new(0.05).unwrap()).unwrap();
        prop_assert_eq!(exact, 100.0);
    }

    #[test]
    fn top1_of_one_hot_truth_is_perfect(gt in prop::collection::vec(0usize..7, 1..20)) {
        let pred: Vec<Vec<f64>> = gt.iter().map(|&g| (0..7).map(|c| f64::from(c == g)).collect()).collect();
        prop_assert_eq!(top1(&pred, &gt).unwrap(), 100.0);
    }

    #[test]
    fn score_bins_cover_the_range(s in 0.0f64..=100.0) {
        let b = discretize_score(s).unwrap();
        prop_assert!(b < SCORE_BINS);
        prop_assert!((bin_center(b) - s).abs() <= 100.0 / SCORE_BINS as f64 / 2.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encode_inverts_decode(seed in 0u64..1000, k in 1usize..30) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let poses: Vec<PoseVector> = (0..80)
            .map(|_| PoseVector((0..72).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let space = fit_space(&poses, k, "p").unwrap();
        let alpha: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let back = space.encode(space.decode(&alpha).unwrap().as_slice()).unwrap();
        for (a, b) in alpha.iter().zip(&back.0) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let cum = space.cumulative_variance();
        prop_assert!(cum.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(space.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
