use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{he_normal, ParamSet, ParamVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Geometry of one spatial-temporal layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub kernel: usize,
}

impl LayerShape {
    /// The residual path needs a projection when channels or length change.
    pub fn projects_residual(&self) -> bool {
        self.c_in != self.c_out || self.stride != 1
    }

    pub fn out_len(&self, len: usize) -> Option<usize> {
        crate::autodiff::kernels::conv1d_out_len(len, self.kernel, self.stride, self.kernel / 2)
    }
}

/// Adds freshly initialized parameters of one layer under `prefix`.
///
/// Learnable adjacency offsets start at zero; the last temporal convolution of the
/// residual branch is scaled down so deep stacks start close to their skip paths.
pub fn init_layer(
    params: &mut ParamSet,
    prefix: &str,
    shape: &LayerShape,
    num_nodes: usize,
    rng: &mut ChaCha8Rng,
) {
    let LayerShape {
        c_in,
        c_out,
        kernel,
        ..
    } = *shape;
    params.insert(
        format!("{prefix}.spatial_w"),
        he_normal(&[c_in, 3 * c_out], c_in, 1.0, rng),
    );
    params.insert(format!("{prefix}.spatial_b"), Tensor::zeros(&[c_out]));
    for p in 0..3 {
        params.insert(
            format!("{prefix}.edge_{p}"),
            Tensor::zeros(&[num_nodes, num_nodes]),
        );
    }
    params.insert(
        format!("{prefix}.temporal_w"),
        he_normal(&[kernel, c_out, c_out], kernel * c_out, 0.5, rng),
    );
    params.insert(format!("{prefix}.temporal_b"), Tensor::zeros(&[c_out]));
    if shape.projects_residual() {
        params.insert(
            format!("{prefix}.residual_w"),
            he_normal(&[1, c_in, c_out], c_in, 1.0, rng),
        );
    }
}

/// Tape handles of one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub spatial_w: Var,
    pub spatial_b: Var,
    pub edges: [Var; 3],
    pub temporal_w: Var,
    pub temporal_b: Var,
    pub residual_w: Option<Var>,
}

impl LayerVars {
    pub fn from_params(vars: &ParamVars, prefix: &str, shape: &LayerShape) -> Result<Self> {
        Ok(LayerVars {
            spatial_w: vars.get(&format!("{prefix}.spatial_w"))?,
            spatial_b: vars.get(&format!("{prefix}.spatial_b"))?,
            edges: [
                vars.get(&format!("{prefix}.edge_0"))?,
                vars.get(&format!("{prefix}.edge_1"))?,
                vars.get(&format!("{prefix}.edge_2"))?,
            ],
            temporal_w: vars.get(&format!("{prefix}.temporal_w"))?,
            temporal_b: vars.get(&format!("{prefix}.temporal_b"))?,
            residual_w: if shape.projects_residual() {
                Some(vars.get(&format!("{prefix}.residual_w"))?)
            } else {
                None
            },
        })
    }
}

/// One layer on a node-major input `x: [V, T, C_in]`, returning `[V, T', C_out]`.
///
/// Spatial step `Σ_p (A_p + E_p) x W_p + b` and relu, then a temporal convolution
/// per node with same padding and the layer stride, plus the residual path, then
/// relu.
pub fn stgcn_layer(
    tape: &mut Tape,
    x: Var,
    adjacency: &[Var; 3],
    vars: &LayerVars,
    shape: &LayerShape,
) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 3 || xs[2] != shape.c_in {
        return Err(Error::shape("stgcn_layer", &xs, &[0, 0, shape.c_in]));
    }
    let (v, t, c_out) = (xs[0], xs[1], shape.c_out);
    let flat = tape.reshape(x, &[v * t, shape.c_in])?;
    let mixed = tape.matmul(flat, vars.spatial_w)?;
    let mut spatial: Option<Var> = None;
    for p in 0..3 {
        let part = tape.slice(mixed, 1, p * c_out, (p + 1) * c_out)?;
        let part = tape.reshape(part, &[v, t * c_out])?;
        let a = tape.add(adjacency[p], vars.edges[p])?;
        let agg = tape.matmul(a, part)?;
        spatial = Some(match spatial {
            None => agg,
            Some(acc) => tape.add(acc, agg)?,
        });
    }
    let spatial = tape.reshape(spatial.unwrap(), &[v, t, c_out])?;
    let spatial = tape.add(spatial, vars.spatial_b)?;
    let h = tape.relu(spatial);

    let temporal = tape.conv1d(h, vars.temporal_w, shape.stride, shape.kernel / 2)?;
    let temporal = tape.add(temporal, vars.temporal_b)?;
    let residual = match vars.residual_w {
        Some(w) => tape.conv1d(x, w, shape.stride, 0)?,
        None => x,
    };
    let out = tape.add(temporal, residual)?;
    Ok(tape.relu(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradient;
    use crate::stgcn::graph::{build_partitioned_adjacency, SkeletonGraph};
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        t.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(-1.0..1.0));
        t
    }

    fn small_graph() -> SkeletonGraph {
        SkeletonGraph::new(4, vec![(0, 1), (1, 2), (0, 3)], 0).unwrap()
    }

    fn layer_params(shape: &LayerShape, v: usize, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        init_layer(&mut p, "l", shape, v, &mut rng);
        // nonzero edges and biases so every parameter is exercised
        for (k, t) in p.tensors.iter_mut() {
            if k.contains("edge") || k.ends_with("_b") {
                *t = random(t.shape(), &mut rng).map(|x| 0.3 * x);
            }
        }
        p
    }

    fn run(x: &Tensor, params: &ParamSet, adj: &[Tensor; 3], shape: &LayerShape) -> Tensor {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars = params.constants(&mut tape);
        let lv = LayerVars::from_params(&vars, "l", shape).unwrap();
        let a = adj.clone().map(|t| tape.constant(t));
        let y = stgcn_layer(&mut tape, xv, &a, &lv, shape).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn identity_spatial_step_reduces_to_temporal_conv() {
        let shape = LayerShape {
            c_in: 2,
            c_out: 2,
            stride: 1,
            kernel: 3,
        };
        let v = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParamSet::new();
        init_layer(&mut params, "l", &shape, v, &mut rng);
        let mut w = Tensor::zeros(&[2, 6]);
        w.data_mut()[0] = 1.0;
        w.data_mut()[7] = 1.0;
        params.insert("l.spatial_w", w);
        let tw = params.get("l.temporal_w").unwrap().clone();
        let adj = [
            Tensor::eye(v),
            Tensor::zeros(&[v, v]),
            Tensor::zeros(&[v, v]),
        ];
        let x = random(&[v, 5, 2], &mut rng).map(f64::abs);
        let y = run(&x, &params, &adj, &shape);
        // oracle: y[n,t,o] = relu(Σ_k Σ_c x[n,t+k-1,c] w[k,c,o] + x[n,t,o])
        for n in 0..v {
            for t in 0..5 {
                for o in 0..2 {
                    let mut acc = x.get(&[n, t, o]);
                    for k in 0..3 {
                        let ti = t as isize + k as isize - 1;
                        if ti < 0 || ti >= 5 {
                            continue;
                        }
                        for c in 0..2 {
                            acc += x.get(&[n, ti as usize, c]) * tw.get(&[k, c, o]);
                        }
                    }
                    assert!((y.get(&[n, t, o]) - acc.max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn node_permutation_is_equivariant() {
        let g = SkeletonGraph::body25();
        let adj = build_partitioned_adjacency(&g).unwrap();
        let shape = LayerShape {
            c_in: 3,
            c_out: 4,
            stride: 2,
            kernel: 5,
        };
        let params = layer_params(&shape, 25, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[25, 7, 3], &mut rng);
        let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
        let permute_nodes = |t: &Tensor| {
            let inner = t.len() / 25;
            let mut out = t.clone();
            for (i, &p) in perm.iter().enumerate() {
                out.data_mut()[i * inner..(i + 1) * inner]
                    .copy_from_slice(&t.data()[p * inner..(p + 1) * inner]);
            }
            out
        };
        let permute_matrix = |t: &Tensor| {
            let mut out = t.clone();
            for i in 0..25 {
                for j in 0..25 {
                    out.data_mut()[i * 25 + j] = t.data()[perm[i] * 25 + perm[j]];
                }
            }
            out
        };
        let mut pp = params.clone();
        for p in 0..3 {
            let k = format!("l.edge_{p}");
            let e = permute_matrix(params.get(&k).unwrap());
            pp.insert(k, e);
        }
        let padj = adj.clone().map(|a| permute_matrix(&a));
        let y = run(&x, &params, &adj, &shape);
        let yp = run(&permute_nodes(&x), &pp, &padj, &shape);
        let expected = permute_nodes(&y);
        for (a, b) in yp.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_gradient_matches_finite_differences() {
        let g = small_graph();
        let adj = build_partitioned_adjacency(&g).unwrap();
        for shape in [
            LayerShape {
                c_in: 2,
                c_out: 3,
                stride: 2,
                kernel: 3,
            },
            LayerShape {
                c_in: 3,
                c_out: 3,
                stride: 1,
                kernel: 3,
            },
        ] {
            let params = layer_params(&shape, 4, 11);
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let x = random(&[4, 6, shape.c_in], &mut rng);
            let names: Vec<String> = params.tensors.keys().cloned().collect();
            // input gradient plus every parameter tensor in turn
            for target in std::iter::once(None).chain(names.iter().map(Some)) {
                let point = match target {
                    None => x.clone(),
                    Some(n) => params.get(n).unwrap().clone(),
                };
                let f = |tape: &mut Tape, v: Var| {
                    let vars = params.constants(tape);
                    let mut lv = LayerVars::from_params(&vars, "l", &shape)?;
                    let xv = match target {
                        None => v,
                        Some(n) => {
                            let var = v;
                            match n.rsplit('.').next().unwrap() {
                                "spatial_w" => lv.spatial_w = var,
                                "spatial_b" => lv.spatial_b = var,
                                "edge_0" => lv.edges[0] = var,
                                "edge_1" => lv.edges[1] = var,
                                "edge_2" => lv.edges[2] = var,
                                "temporal_w" => lv.temporal_w = var,
                                "temporal_b" => lv.temporal_b = var,
                                "residual_w" => lv.residual_w = Some(var),
                                other => panic!("unknown {other}"),
                            }
                            tape.constant(x.clone())
                        }
                    };
                    let a = adj.clone().map(|t| tape.constant(t));
                    let y = stgcn_layer(tape, xv, &a, &lv, &shape)?;
                    let sq = tape.square(y);
                    Ok(tape.sum(sq))
                };
                let r = check_gradient(f, &point, 1e-6, 1e-4).unwrap();
                assert!(r.passed, "{target:?}: {}", r.max_error);
            }
        }
    }
}
